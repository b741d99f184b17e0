//! Background statistics and the whitening transform.

use mitarget::spectral::{BackgroundStats, Regularization};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> mitarget::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // correlated 4-band background
    let mix = DMatrix::from_row_slice(4, 4, &[2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.5, 0.2, 0.3, 0.0, 0.0, 0.1, 0.4, 0.8]);
    let background: Vec<DVector<f64>> = (0..2000)
        .map(|_| {
            let z = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
            &mix * z + DVector::from_element(4, 1.0)
        })
        .collect();

    let stats = BackgroundStats::compute(background.iter(), Regularization::Auto)?;
    println!("mean        {:.3?}", stats.mean().as_slice());
    println!("eigenvalues {:.3?}", stats.eigenvalues().as_slice());
    println!("ridge       {:.2e}", stats.regularization());

    let white: Vec<DVector<f64>> = background.iter().map(|x| stats.whiten_centered(x)).collect::<Result<_, _>>()?;
    let n = white.len() as f64;
    let cov = white.iter().fold(DMatrix::zeros(4, 4), |acc, w| acc + w * w.transpose()) / n;
    println!("whitened covariance:{:.4}", cov);
    Ok(())
}
