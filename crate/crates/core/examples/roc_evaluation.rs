//! ROC curve, AUC and NAUC from raw scores.

use mitarget::eval::roc_curve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> mitarget::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pos = Normal::new(1.5, 1.0).expect("valid normal");
    let neg = Normal::new(0.0, 1.0).expect("valid normal");
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..20_000 {
        let target = rng.random_bool(0.1);
        scores.push(if target { pos.sample(&mut rng) } else { neg.sample(&mut rng) });
        labels.push(target);
    }
    let curve = roc_curve(&scores, &labels)?;
    println!("{} points, {} targets, {} background", curve.points.len(), curve.n_pos, curve.n_neg);
    println!("AUC          {:.4}", curve.auc());
    for far_max in [1e-3, 1e-2, 1e-1, 1.0] {
        println!("NAUC @ {far_max:<6} {:.4}   pd {:.4}", curve.nauc(far_max)?, curve.pd_at(far_max));
    }
    Ok(())
}
