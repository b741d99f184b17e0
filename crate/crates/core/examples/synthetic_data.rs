//! Synthetic bags under the linear mixing model, written to CSV.

use mitarget::io;
use mitarget::synth::{generate, make_endmembers, EndmemberKind, SyntheticConfig};

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
        seed: 42,
    };
    let data = generate(&config)?;
    let targets: Vec<f64> = data.truth.iter().filter(|t| t.is_target).map(|t| t.alpha_target).collect();
    println!(
        "{} bags, {} instances, {} target instances, mean alpha {:.3}, noise variance {:.2e}",
        data.bags.bags().len(),
        data.bags.n_instances(),
        targets.len(),
        targets.iter().sum::<f64>() / targets.len() as f64,
        data.noise_variance
    );

    let dir = std::env::temp_dir().join("mitarget-synthetic");
    io::save_bags(&data.bags, &dir.join("bags.csv"))?;
    io::save_truth(&io::truth_rows(&data.truth), &dir.join("truth.csv"))?;
    let back = io::load_bags(&dir.join("bags.csv"))?;
    println!("wrote {} (reads back identical: {})", dir.display(), back == data.bags);
    Ok(())
}
