//! Learn MI-SMF and MI-ACE signatures from bag labels and score a held-out set.

use mitarget::eval::roc_curve;
use mitarget::synth::{generate, generate_test_set, make_endmembers, EndmemberKind, SyntheticConfig, TestSetConfig};
use mitarget::train::{train, TrainConfig};

fn main() -> mitarget::Result<()> {
    let config = SyntheticConfig {
        endmembers: make_endmembers(EndmemberKind::SmoothSpectra, 64, 4, 7)?,
        n_pos_bags: 13,
        n_neg_bags: 37,
        instances_per_bag: 10,
        targets_per_positive_bag: 2,
        mean_target_proportion: 0.05,
        proportion_concentration: 20.0,
        snr_db: 20.0,
        target_background_mask: None,
        seed: 1,
    };
    let data = generate(&config)?;
    let test = generate_test_set(&config, &TestSetConfig::scaled(0.1, 2))?;

    for cfg in [TrainConfig::smf(), TrainConfig::ace()] {
        let result = train(&data.bags, &cfg)?;
        let scores: Vec<f64> = test.instances.iter().map(|x| result.score(x)).collect::<Result<_, _>>()?;
        let auc = roc_curve(&scores, &test.labels)?.auc();
        println!(
            "{:?}: {} iterations, converged {}, objective {:.4}, test AUC {:.4}",
            cfg.mode, result.iterations, result.converged, result.objective, auc
        );
        for rec in &result.trace {
            println!("  iter {:>2}  objective {:.6}  selection {}", rec.iteration, rec.objective, rec.selection_hash);
        }
    }
    Ok(())
}
