//! Regroup background instances into k-means negative bags and compare training results.

use mitarget::eval::{kmeans_negative_bags, roc_curve, NegativeBags};
use mitarget::synth::{generate, generate_test_set, make_endmembers, EndmemberKind, SyntheticConfig, TestSetConfig};
use mitarget::train::{train, TrainConfig};

fn main() -> mitarget::Result<()> {
    let config = SyntheticConfig {
        endmembers: make_endmembers(EndmemberKind::SmoothSpectra, 64, 4, 7)?,
        n_pos_bags: 25,
        n_neg_bags: 25,
        instances_per_bag: 10,
        targets_per_positive_bag: 2,
        mean_target_proportion: 0.1,
        proportion_concentration: 20.0,
        snr_db: 20.0,
        target_background_mask: None,
        seed: 21,
    };
    let data = generate(&config)?;
    let test = generate_test_set(&config, &TestSetConfig::scaled(0.1, 22))?;

    let background: Vec<_> = data.bags.negative_instances().cloned().collect();
    let clusters = kmeans_negative_bags(&background, 15, 0)?;
    let sizes: Vec<usize> = clusters.iter().map(|b| b.len()).collect();
    println!("cluster sizes {sizes:?}");

    for grouping in [NegativeBags::Single, NegativeBags::Kmeans(15), NegativeBags::Kmeans(background.len())] {
        let bags = grouping.apply(&data.bags, 0)?;
        for cfg in [TrainConfig::smf(), TrainConfig::ace()] {
            let r = train(&bags, &cfg)?;
            let scores: Vec<f64> = test.instances.iter().map(|x| r.score(x)).collect::<Result<_, _>>()?;
            println!(
                "{:>4} negative bags, {:?}: AUC {:.4}",
                bags.n_negative(),
                cfg.mode,
                roc_curve(&scores, &test.labels)?.auc()
            );
        }
    }
    Ok(())
}
