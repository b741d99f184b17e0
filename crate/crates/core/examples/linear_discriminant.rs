//! The same alternating loop without whitening: a linear discriminant with a bias term.

use mitarget::eval::roc_curve;
use mitarget::synth::{generate, generate_test_set, make_endmembers, EndmemberKind, SyntheticConfig, TestSetConfig};
use mitarget::train::{train, TrainConfig};

fn main() -> mitarget::Result<()> {
    let config = SyntheticConfig {
        endmembers: make_endmembers(EndmemberKind::SmoothSpectra, 32, 3, 4)?,
        n_pos_bags: 25,
        n_neg_bags: 25,
        instances_per_bag: 10,
        targets_per_positive_bag: 2,
        mean_target_proportion: 0.3,
        proportion_concentration: 20.0,
        snr_db: 30.0,
        target_background_mask: None,
        seed: 5,
    };
    let data = generate(&config)?;
    let test = generate_test_set(&config, &TestSetConfig::scaled(0.04, 6))?;

    let result = train(&data.bags, &TrainConfig::linear_discriminant())?;
    let model = result.linear().expect("linear mode returns a discriminant");
    println!("|w| = {:.4}, bias = {}", model.weights().norm(), model.bias());
    let scores: Vec<f64> = test.instances.iter().map(|x| model.score(x)).collect::<Result<_, _>>()?;
    println!("test AUC {:.4} after {} iterations", roc_curve(&scores, &test.labels)?.auc(), result.iterations);

    let smf = train(&data.bags, &TrainConfig::smf())?;
    let scores: Vec<f64> = test.instances.iter().map(|x| smf.score(x)).collect::<Result<_, _>>()?;
    println!("MI-SMF on the same data: test AUC {:.4}", roc_curve(&scores, &test.labels)?.auc());
    Ok(())
}
