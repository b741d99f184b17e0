use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::{Bag, Instance};

pub const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centers: Vec<DVector<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Within-cluster sum of squares after each center update.
    pub inertia: Vec<f64>,
}

fn nearest(x: &Instance, centers: &[DVector<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = (x - center).norm_squared();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia(instances: &[Instance], centers: &[DVector<f64>], assignments: &[usize]) -> f64 {
    instances.iter().zip(assignments).map(|(x, &c)| (x - &centers[c]).norm_squared()).sum()
}

/// Lloyd's algorithm with squared Euclidean distance, started from `k`
/// distinct instances sampled uniformly with `seed`.
pub fn kmeans(instances: &[Instance], k: usize, seed: u64) -> Result<KMeans> {
    let n = instances.len();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(vec![format!(
            "k: must lie in 1..={n} (number of instances), got {k}"
        )]));
    }
    let d = instances[0].len();
    if let Some(x) = instances.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if k == n {
        return Ok(KMeans {
            centers: instances.to_vec(),
            assignments: (0..n).collect(),
            iterations: 0,
            converged: true,
            inertia: vec![0.0],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<DVector<f64>> = sample(&mut rng, n, k).into_iter().map(|i| instances[i].clone()).collect();
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < KMEANS_MAX_ITERATIONS {
        let mut next: Vec<usize> = instances.iter().map(|x| nearest(x, &centers).0).collect();
        if next == assignments {
            converged = true;
            break;
        }
        iterations += 1;

        let mut counts = vec![0usize; k];
        for &c in &next {
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // farthest point from its own center, taken from a cluster that
            // can spare it
            let far = (0..n)
                .filter(|&i| counts[next[i]] > 1)
                .map(|i| (i, (&instances[i] - &centers[next[i]]).norm_squared()))
                .fold(None, |best: Option<(usize, f64)>, (i, dist)| match best {
                    Some((_, bd)) if bd >= dist => best,
                    _ => Some((i, dist)),
                });
            let Some((i, _)) = far else { break };
            counts[next[i]] -= 1;
            next[i] = c;
            counts[c] = 1;
            centers[c] = instances[i].clone();
        }

        let mut sums = vec![DVector::zeros(d); k];
        for (x, &c) in instances.iter().zip(&next) {
            sums[c] += x;
        }
        for (c, sum) in sums.into_iter().enumerate() {
            if counts[c] > 0 {
                centers[c] = sum / counts[c] as f64;
            }
        }
        assignments = next;
        trace.push(inertia(instances, &centers, &assignments));
    }

    Ok(KMeans { centers, assignments, iterations, converged, inertia: trace })
}

/// Clusters `instances` into `k` negative bags named `kmeans-<c>`. Clusters
/// left empty are dropped, so fewer than `k` bags can come back.
pub fn kmeans_negative_bags(instances: &[Instance], k: usize, seed: u64) -> Result<Vec<Bag>> {
    let fit = kmeans(instances, k, seed)?;
    let mut groups: Vec<Vec<Instance>> = vec![Vec::new(); k];
    for (x, &c) in instances.iter().zip(&fit.assignments) {
        groups[c].push(x.clone());
    }
    groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(c, g)| Bag::negative(format!("kmeans-{c}"), g))
        .collect()
}
