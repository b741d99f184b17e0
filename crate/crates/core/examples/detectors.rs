//! SMF and ACE scores, computed in whitened space and by the textbook formulas.

use std::sync::Arc;

use mitarget::detectors::{direct, DetectorMode, TargetSignature};
use mitarget::spectral::{BackgroundStats, Regularization};
use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mitarget::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let background: Vec<DVector<f64>> =
        (0..500).map(|_| DVector::from_fn(3, |i, _| rng.random_range(0.0..1.0) * (i + 1) as f64)).collect();
    let stats = Arc::new(BackgroundStats::compute(background.iter(), Regularization::Auto)?);

    let s = dvector![1.0, -0.5, 2.0];
    let smf = TargetSignature::from_original(&s, stats.clone(), DetectorMode::Smf)?;
    let ace = smf.with_mode(DetectorMode::Ace);
    println!("signature id {}", ace.id());
    println!("whitened unit signature {:.4?}", ace.whitened().as_slice());

    for x in [dvector![0.5, 1.0, 1.5], dvector![2.0, 0.2, 3.0], dvector![0.1, 1.9, 0.4]] {
        println!(
            "x = {:.2?}: smf {:+.5} (direct {:+.5})  ace {:+.5} (direct {:+.5})",
            x.as_slice(),
            smf.score(&x)?,
            direct::smf_score(&x, &s, &stats)?,
            ace.score(&x)?,
            direct::ace_score(&x, &s, &stats)?,
        );
    }
    Ok(())
}
