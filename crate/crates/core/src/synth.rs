//! Seeded synthetic bags under the linear mixing model.
//!
//! Background instances are convex combinations of a uniformly sized,
//! uniformly chosen subset of the background endmembers with flat-Dirichlet
//! proportions. Target instances put a Beta-distributed proportion `alpha` on
//! the target endmember and spread `1 - alpha` over a background mixture
//! drawn the same way (optionally from a restricted set of backgrounds).
//! Zero-mean Gaussian noise is then added at the requested SNR, measured
//! against the mean per-band signal power of the generated set.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Bag, BagSet};

pub const DEFAULT_CONCENTRATION: f64 = 20.0;

fn default_concentration() -> f64 {
    DEFAULT_CONCENTRATION
}

fn default_snr() -> f64 {
    f64::INFINITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// First entry is the target; the rest are background materials.
    pub endmembers: Vec<Vec<f64>>,
    pub n_pos_bags: usize,
    pub n_neg_bags: usize,
    pub instances_per_bag: usize,
    pub targets_per_positive_bag: usize,
    /// Mean of the target proportion in target-bearing instances.
    pub mean_target_proportion: f64,
    /// Beta concentration `a + b` of the target proportion.
    #[serde(default = "default_concentration")]
    pub proportion_concentration: f64,
    /// Signal-to-noise ratio in dB; `inf` disables noise.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Which background endmembers may mix with the target (one flag per
    /// background endmember). `None` allows all of them.
    #[serde(default)]
    pub target_background_mask: Option<Vec<bool>>,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.endmembers.len() < 2 {
            errs.push(format!(
                "endmembers: need a target and at least one background endmember, got {}",
                self.endmembers.len()
            ));
        }
        if let Some(first) = self.endmembers.first() {
            if first.is_empty() {
                errs.push("endmembers: dimension must be at least 1".into());
            }
            if self.endmembers.iter().any(|e| e.len() != first.len()) {
                errs.push("endmembers: dimensions disagree".into());
            }
            if self.endmembers.iter().flatten().any(|v| !v.is_finite()) {
                errs.push("endmembers: non-finite entries".into());
            }
        }
        if self.n_pos_bags == 0 {
            errs.push("n_pos_bags: must be positive".into());
        }
        if self.n_neg_bags == 0 {
            errs.push("n_neg_bags: must be positive".into());
        }
        if self.instances_per_bag == 0 {
            errs.push("instances_per_bag: must be positive".into());
        }
        if self.targets_per_positive_bag == 0 {
            errs.push("targets_per_positive_bag: must be positive".into());
        }
        if self.targets_per_positive_bag > self.instances_per_bag {
            errs.push(format!(
                "targets_per_positive_bag: {} exceeds instances_per_bag {}",
                self.targets_per_positive_bag, self.instances_per_bag
            ));
        }
        check_proportion(&mut errs, self.mean_target_proportion, self.proportion_concentration);
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            errs.push("snr_db: must be a number or +inf".into());
        }
        if let Some(mask) = &self.target_background_mask {
            let n_bg = self.endmembers.len().saturating_sub(1);
            if mask.len() != n_bg {
                errs.push(format!(
                    "target_background_mask: has {} flags for {} background endmembers",
                    mask.len(),
                    n_bg
                ));
            } else if !mask.iter().any(|&m| m) {
                errs.push("target_background_mask: must allow at least one background endmember".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    pub fn dim(&self) -> usize {
        self.endmembers.first().map_or(0, Vec::len)
    }
}

fn check_proportion(errs: &mut Vec<String>, mean: f64, concentration: f64) {
    if !(mean > 0.0 && mean < 1.0) {
        errs.push(format!("mean_target_proportion: must lie in (0, 1), got {mean}"));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        errs.push(format!("proportion_concentration: must be positive, got {concentration}"));
    }
}

/// Ground truth for one generated instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceTruth {
    pub bag_id: String,
    /// Proportion of the target endmember (zero for background instances).
    pub alpha_target: f64,
    /// Proportions over all endmembers, target first; sums to one.
    pub proportions: Vec<f64>,
    pub is_target: bool,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub bags: BagSet,
    /// One entry per instance, in bag order.
    pub truth: Vec<InstanceTruth>,
    /// Noise-free instances, in the same order.
    pub clean: Vec<DVector<f64>>,
    pub target: DVector<f64>,
    pub noise_variance: f64,
}

impl SyntheticDataset {
    /// Instance-level labels (true for target-bearing instances), bag order.
    pub fn instance_labels(&self) -> Vec<bool> {
        self.truth.iter().map(|t| t.is_target).collect()
    }
}

struct Mixer {
    endmembers: Vec<DVector<f64>>,
    target_pool: Vec<usize>,
    all_backgrounds: Vec<usize>,
    alpha: Beta<f64>,
}

impl Mixer {
    fn new(endmembers: &[Vec<f64>], mask: Option<&[bool]>, mean: f64, concentration: f64) -> Result<Self> {
        let endmembers: Vec<DVector<f64>> = endmembers.iter().map(|e| DVector::from_column_slice(e)).collect();
        let all_backgrounds: Vec<usize> = (1..endmembers.len()).collect();
        let target_pool = match mask {
            Some(mask) => all_backgrounds.iter().copied().filter(|&k| mask[k - 1]).collect(),
            None => all_backgrounds.clone(),
        };
        let alpha = Beta::new(mean * concentration, (1.0 - mean) * concentration)
            .map_err(|e| Error::InvalidConfig(vec![format!("proportion distribution: {e}")]))?;
        Ok(Mixer {
            endmembers,
            target_pool,
            all_backgrounds,
            alpha,
        })
    }

    /// Flat-Dirichlet weights over a uniformly sized random subset of `pool`,
    /// written into `proportions` scaled by `mass`.
    fn background(&self, rng: &mut ChaCha8Rng, pool: &[usize], mass: f64, proportions: &mut [f64]) {
        let k = rng.random_range(1..=pool.len());
        let chosen = sample(rng, pool.len(), k);
        let weights: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = weights.iter().sum();
        for (idx, w) in chosen.iter().zip(weights) {
            proportions[pool[idx]] += mass * w / total;
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, is_target: bool) -> (DVector<f64>, Vec<f64>) {
        let mut proportions = vec![0.0; self.endmembers.len()];
        if is_target {
            let mut a: f64 = self.alpha.sample(rng);
            if a <= 0.0 {
                a = f64::MIN_POSITIVE;
            }
            proportions[0] = a;
            self.background(rng, &self.target_pool, 1.0 - a, &mut proportions);
        } else {
            self.background(rng, &self.all_backgrounds, 1.0, &mut proportions);
        }
        let mut x = DVector::zeros(self.endmembers[0].len());
        for (p, e) in proportions.iter().zip(&self.endmembers) {
            if *p != 0.0 {
                x.axpy(*p, e, 1.0);
            }
        }
        (x, proportions)
    }
}

/// Per-band noise variance giving `snr_db` against the mean per-band power
/// of `clean`. Zero when noise is off.
pub fn noise_variance_for(clean: &[DVector<f64>], snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY || clean.is_empty() {
        return 0.0;
    }
    let d = clean[0].len() as f64;
    let power = clean.iter().map(|x| x.norm_squared() / d).sum::<f64>() / clean.len() as f64;
    power / 10f64.powf(snr_db / 10.0)
}

fn add_noise(rng: &mut ChaCha8Rng, clean: &[DVector<f64>], variance: f64) -> Vec<DVector<f64>> {
    let sigma = variance.sqrt();
    clean
        .iter()
        .map(|x| {
            if sigma == 0.0 {
                x.clone()
            } else {
                x.map(|v| {
                    let z: f64 = StandardNormal.sample(rng);
                    v + sigma * z
                })
            }
        })
        .collect()
}

/// Generates a training bag set. Deterministic in `config.seed`.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mixer = Mixer::new(
        &config.endmembers,
        config.target_background_mask.as_deref(),
        config.mean_target_proportion,
        config.proportion_concentration,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut layout = Vec::new();
    for j in 0..config.n_pos_bags {
        let targets = sample(&mut rng, config.instances_per_bag, config.targets_per_positive_bag);
        let mut flags = vec![false; config.instances_per_bag];
        for t in targets.iter() {
            flags[t] = true;
        }
        layout.push((format!("p{j}"), true, flags));
    }
    for j in 0..config.n_neg_bags {
        layout.push((format!("n{j}"), false, vec![false; config.instances_per_bag]));
    }

    let mut clean = Vec::new();
    let mut truth = Vec::new();
    for (id, _, flags) in &layout {
        for &is_target in flags {
            let (x, proportions) = mixer.draw(&mut rng, is_target);
            clean.push(x);
            truth.push(InstanceTruth {
                bag_id: id.clone(),
                alpha_target: proportions[0],
                proportions,
                is_target,
            });
        }
    }

    let noise_variance = noise_variance_for(&clean, config.snr_db);
    let noisy = add_noise(&mut rng, &clean, noise_variance);

    let mut bags = Vec::with_capacity(layout.len());
    let mut rows = noisy.into_iter();
    for (id, positive, flags) in layout {
        let instances: Vec<_> = rows.by_ref().take(flags.len()).collect();
        bags.push(if positive { Bag::positive(id, instances)? } else { Bag::negative(id, instances)? });
    }

    Ok(SyntheticDataset {
        bags: BagSet::new(bags)?,
        truth,
        clean,
        target: mixer.endmembers[0].clone(),
        noise_variance,
    })
}

/// Instance-labeled evaluation data drawn from the same endmembers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSetConfig {
    pub n_target: usize,
    pub n_background: usize,
    pub mean_target_proportion: f64,
    #[serde(default = "default_concentration")]
    pub proportion_concentration: f64,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    pub seed: u64,
}

impl TestSetConfig {
    /// 25,000 target and 25,000 background instances at mean proportion
    /// 0.15 and 20 dB, with both counts multiplied by `scale`.
    pub fn scaled(scale: f64, seed: u64) -> Self {
        let n = ((25_000.0 * scale).round() as usize).max(1);
        TestSetConfig {
            n_target: n,
            n_background: n,
            mean_target_proportion: 0.15,
            proportion_concentration: DEFAULT_CONCENTRATION,
            snr_db: 20.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_target == 0 || self.n_background == 0 {
            errs.push("test set: n_target and n_background must be positive".into());
        }
        check_proportion(&mut errs, self.mean_target_proportion, self.proportion_concentration);
        if self.snr_db.is_nan() {
            errs.push("test set snr_db: must be a number or +inf".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub instances: Vec<DVector<f64>>,
    pub labels: Vec<bool>,
    pub alphas: Vec<f64>,
}

/// Target instances first, then background instances.
pub fn generate_test_set(train: &SyntheticConfig, test: &TestSetConfig) -> Result<LabeledSet> {
    train.validate()?;
    test.validate()?;
    let mixer = Mixer::new(
        &train.endmembers,
        train.target_background_mask.as_deref(),
        test.mean_target_proportion,
        test.proportion_concentration,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(test.seed);
    let mut clean = Vec::with_capacity(test.n_target + test.n_background);
    let mut labels = Vec::with_capacity(clean.capacity());
    let mut alphas = Vec::with_capacity(clean.capacity());
    for is_target in std::iter::repeat_n(true, test.n_target).chain(std::iter::repeat_n(false, test.n_background)) {
        let (x, p) = mixer.draw(&mut rng, is_target);
        clean.push(x);
        labels.push(is_target);
        alphas.push(p[0]);
    }
    let variance = noise_variance_for(&clean, test.snr_db);
    Ok(LabeledSet {
        instances: add_noise(&mut rng, &clean, variance),
        labels,
        alphas,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndmemberKind {
    /// Non-negative smooth curves built from a few Gaussian bumps.
    SmoothSpectra,
    /// A fixed 2-d triangle: target first, then two backgrounds.
    #[serde(rename = "simplex-2d")]
    Simplex2d,
}

pub const MIN_ENDMEMBER_ANGLE_DEG: f64 = 15.0;
const ENDMEMBER_ATTEMPTS: usize = 100;

/// Vertices of the fixed 2-d triangle (target, background 1, background 2).
pub const SIMPLEX_2D: [[f64; 2]; 3] = [[0.5, 0.9], [0.1, 0.3], [0.9, 0.2]];

pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

fn smooth_curve(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let bumps = rng.random_range(2..=4);
    let params: Vec<(f64, f64, f64)> = (0..bumps)
        .map(|_| {
            (
                rng.random_range(0.0..1.0),
                rng.random_range(0.04..0.18),
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    let floor = rng.random_range(0.02..0.1);
    (0..d)
        .map(|k| {
            let t = k as f64 / (d - 1) as f64;
            floor
                + params
                    .iter()
                    .map(|(c, w, h)| h * (-(t - c).powi(2) / (2.0 * w * w)).exp())
                    .sum::<f64>()
        })
        .collect()
}

/// Synthetic endmember spectra, first one meant as the target.
pub fn make_endmembers(kind: EndmemberKind, d: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    match kind {
        EndmemberKind::Simplex2d => {
            if d != 2 || count != 3 {
                return Err(Error::InvalidArgument(format!(
                    "simplex-2d endmembers are fixed at d = 2, count = 3 (asked for d = {d}, count = {count})"
                )));
            }
            Ok(SIMPLEX_2D.iter().map(|v| v.to_vec()).collect())
        }
        EndmemberKind::SmoothSpectra => {
            if d < 2 || count < 2 {
                return Err(Error::InvalidArgument(format!(
                    "smooth spectra need d >= 2 and count >= 2 (got d = {d}, count = {count})"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
            let mut attempts = 0;
            while out.len() < count {
                if attempts == ENDMEMBER_ATTEMPTS {
                    return Err(Error::EndmemberGeneration {
                        count,
                        min_angle_deg: MIN_ENDMEMBER_ANGLE_DEG,
                        attempts,
                    });
                }
                attempts += 1;
                let curve = smooth_curve(&mut rng, d);
                if out.iter().all(|e| angle_deg(e, &curve) >= MIN_ENDMEMBER_ANGLE_DEG) {
                    out.push(curve);
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn config(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            endmembers: make_endmembers(EndmemberKind::SmoothSpectra, 16, 4, 1).unwrap(),
            n_pos_bags: 5,
            n_neg_bags: 5,
            instances_per_bag: 10,
            targets_per_positive_bag: 2,
            mean_target_proportion: 0.3,
            proportion_concentration: DEFAULT_CONCENTRATION,
            snr_db: f64::INFINITY,
            target_background_mask: None,
            seed,
        }
    }

    #[test]
    fn bag_composition() {
        let data = generate(&config(3)).unwrap();
        assert_eq!(data.bags.n_positive(), 5);
        assert_eq!(data.bags.n_negative(), 5);
        let mut row = 0;
        for bag in data.bags.bags() {
            assert_eq!(bag.len(), 10);
            let n_target = data.truth[row..row + bag.len()].iter().filter(|t| t.is_target).count();
            assert_eq!(n_target, if bag.is_positive() { 2 } else { 0 });
            row += bag.len();
        }
        for t in &data.truth {
            let sum: f64 = t.proportions.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(t.proportions.iter().all(|&p| p >= 0.0));
            assert_eq!(t.is_target, t.alpha_target > 0.0);
        }
    }

    #[test]
    fn noiseless_proportions_recoverable() {
        let cfg = config(4);
        let data = generate(&cfg).unwrap();
        let d = cfg.dim();
        let e = DMatrix::from_fn(d, cfg.endmembers.len(), |r, c| cfg.endmembers[c][r]);
        let svd = e.clone().svd(true, true);
        for (x, t) in data.bags.instances().zip(&data.truth) {
            let p = svd.solve(x, 1e-14).unwrap();
            for (got, want) in p.iter().zip(&t.proportions) {
                assert!((got - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seeded() {
        let a = generate(&config(9)).unwrap();
        let b = generate(&config(9)).unwrap();
        let c = generate(&config(10)).unwrap();
        assert_eq!(a.bags, b.bags);
        assert_ne!(a.bags, c.bags);
    }

    #[test]
    fn snr_is_met() {
        let mut cfg = config(5);
        cfg.n_pos_bags = 500;
        cfg.n_neg_bags = 500;
        cfg.snr_db = 20.0;
        let data = generate(&cfg).unwrap();
        let d = cfg.dim() as f64;
        let n = data.clean.len() as f64;
        let signal = data.clean.iter().map(|x| x.norm_squared() / d).sum::<f64>() / n;
        let noise: Vec<f64> = data
            .bags
            .instances()
            .zip(&data.clean)
            .flat_map(|(x, c)| (x - c).iter().copied().collect::<Vec<_>>())
            .collect();
        let m = noise.iter().sum::<f64>() / noise.len() as f64;
        let var = noise.iter().map(|v| (v - m).powi(2)).sum::<f64>() / noise.len() as f64;
        let snr = 10.0 * (signal / var).log10();
        assert!((snr - 20.0).abs() < 0.5, "{snr}");
    }

    #[test]
    fn alpha_mean() {
        let mut cfg = config(6);
        cfg.n_pos_bags = 600;
        cfg.n_neg_bags = 1;
        cfg.mean_target_proportion = 0.05;
        let data = generate(&cfg).unwrap();
        let alphas: Vec<f64> = data.truth.iter().filter(|t| t.is_target).map(|t| t.alpha_target).collect();
        assert!(alphas.len() >= 1000);
        let mean = alphas.iter().sum::<f64>() / alphas.len() as f64;
        assert!((mean - 0.05).abs() < 0.02, "{mean}");
    }

    #[test]
    fn mask_restricts_target_mixing() {
        let mut cfg = config(7);
        cfg.target_background_mask = Some(vec![true, false, false]);
        let data = generate(&cfg).unwrap();
        for t in data.truth.iter().filter(|t| t.is_target) {
            assert_eq!(t.proportions[2], 0.0);
            assert_eq!(t.proportions[3], 0.0);
        }
        // backgrounds are unaffected
        assert!(data.truth.iter().filter(|t| !t.is_target).any(|t| t.proportions[3] > 0.0));
    }

    #[test]
    fn validation_lists_every_field() {
        let mut cfg = config(1);
        cfg.targets_per_positive_bag = 11;
        cfg.mean_target_proportion = 1.5;
        match generate(&cfg) {
            Err(Error::InvalidConfig(errs)) => {
                assert_eq!(errs.len(), 2);
                assert!(errs[0].starts_with("targets_per_positive_bag"));
                assert!(errs[1].starts_with("mean_target_proportion"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn endmember_kinds() {
        let tri = make_endmembers(EndmemberKind::Simplex2d, 2, 3, 0).unwrap();
        assert_eq!(tri, SIMPLEX_2D.iter().map(|v| v.to_vec()).collect::<Vec<_>>());
        assert!(make_endmembers(EndmemberKind::Simplex2d, 2, 4, 0).is_err());

        for seed in 0..20 {
            let ems = make_endmembers(EndmemberKind::SmoothSpectra, 64, 4, seed).unwrap();
            assert!(ems.iter().flatten().all(|&v| v >= 0.0));
            for i in 0..ems.len() {
                for j in i + 1..ems.len() {
                    let dot: f64 = ems[i].iter().zip(&ems[j]).map(|(a, b)| a * b).sum();
                    let na: f64 = ems[i].iter().map(|a| a * a).sum::<f64>().sqrt();
                    let nb: f64 = ems[j].iter().map(|a| a * a).sum::<f64>().sqrt();
                    assert!((dot / (na * nb)).acos().to_degrees() >= 15.0);
                }
            }
        }
    }

    #[test]
    fn test_set_layout() {
        let cfg = config(2);
        let test = TestSetConfig::scaled(0.004, 77);
        let set = generate_test_set(&cfg, &test).unwrap();
        assert_eq!(set.instances.len(), 200);
        assert!(set.labels[..100].iter().all(|&l| l));
        assert!(set.labels[100..].iter().all(|&l| !l));
    }
}
