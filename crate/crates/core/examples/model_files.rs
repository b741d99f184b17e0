//! Save a trained signature as JSON, load it back and score with it.

use mitarget::io::{ModelFile, SignatureFile};
use mitarget::synth::{generate, make_endmembers, EndmemberKind, SyntheticConfig};
use mitarget::train::{train, TrainConfig};

fn main() -> mitarget::Result<()> {
    let config = SyntheticConfig {
        endmembers: make_endmembers(EndmemberKind::SmoothSpectra, 16, 3, 2)?,
        n_pos_bags: 10,
        n_neg_bags: 10,
        instances_per_bag: 8,
        targets_per_positive_bag: 2,
        mean_target_proportion: 0.3,
        proportion_concentration: 20.0,
        snr_db: 25.0,
        target_background_mask: None,
        seed: 3,
    };
    let data = generate(&config)?;
    let r = train(&data.bags, &TrainConfig::smf())?;
    let sig = r.signature().expect("smf returns a signature");

    let path = std::env::temp_dir().join("mitarget-signature.json");
    ModelFile::Signature(SignatureFile::new(sig, r.iterations, r.objective, Some(r.converged))).save(&path)?;
    let model = ModelFile::load(&path)?.to_model()?;
    let worst = data
        .bags
        .instances()
        .map(|x| Ok((model.score(x)? - sig.score(x)?).abs()))
        .collect::<mitarget::Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("saved {} (id {}); largest score change after reload {worst:.2e}", path.display(), sig.id());
    Ok(())
}
