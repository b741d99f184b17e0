//! EM-DD and EM-DD-P next to MI-ACE on the same bags.

use mitarget::baselines::{dd_log_objective, emdd_train, EmddConfig};
use mitarget::eval::roc_curve;
use mitarget::synth::{generate, generate_test_set, make_endmembers, EndmemberKind, SyntheticConfig, TestSetConfig};
use mitarget::train::{train, TrainConfig};

fn main() -> mitarget::Result<()> {
    let config = SyntheticConfig {
        endmembers: make_endmembers(EndmemberKind::SmoothSpectra, 64, 4, 7)?,
        n_pos_bags: 25,
        n_neg_bags: 25,
        instances_per_bag: 10,
        targets_per_positive_bag: 2,
        mean_target_proportion: 0.25,
        proportion_concentration: 20.0,
        snr_db: 20.0,
        target_background_mask: None,
        seed: 9,
    };
    let data = generate(&config)?;
    let test = generate_test_set(&config, &TestSetConfig::scaled(0.1, 10))?;

    for scales in [true, false] {
        let r = emdd_train(&data.bags, &EmddConfig::new(scales))?;
        let scores: Vec<f64> = test.instances.iter().map(|x| r.concept.log_predict(x)).collect::<Result<_, _>>()?;
        println!(
            "{}: {} EM iterations, log-likelihood {:.3}, log DD {:.3}, test AUC {:.4}",
            if scales { "EM-DD  " } else { "EM-DD-P" },
            r.iterations,
            r.log_likelihood,
            dd_log_objective(&r.concept.point, &data.bags)?,
            roc_curve(&scores, &test.labels)?.auc()
        );
    }
    let ace = train(&data.bags, &TrainConfig::ace())?;
    let scores: Vec<f64> = test.instances.iter().map(|x| ace.score(x)).collect::<Result<_, _>>()?;
    println!("MI-ACE : test AUC {:.4}", roc_curve(&scores, &test.labels)?.auc());
    Ok(())
}
