//! Diverse Density (Noisy-OR) objective and the EM-DD / EM-DD-P baselines.
//!
//! EM-DD alternates an E-step, which keeps one representative instance per
//! bag, with an M-step doing projected gradient ascent on the log-likelihood
//! of those representatives. A concept is a point plus per-feature scales;
//! EM-DD-P keeps the scales fixed at one.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Bag, BagSet, Instance};

/// `log` of the Noisy-OR diverse density of `s` (unscaled Euclidean distance).
/// `-inf` when some negative instance sits exactly at `s`.
pub fn dd_log_objective(s: &DVector<f64>, bags: &BagSet) -> Result<f64> {
    if s.len() != bags.dim() {
        return Err(Error::DimensionMismatch { expected: bags.dim(), got: s.len() });
    }
    let mut total = 0.0;
    for bag in bags.bags() {
        if bag.is_positive() {
            // log prod_j (1 - exp(-d2))
            let log_miss: f64 = bag
                .instances()
                .iter()
                .map(|x| (-(-(x - s).norm_squared()).exp_m1()).ln())
                .sum();
            // log (1 - exp(log_miss))
            total += (-log_miss.exp_m1()).ln();
        } else {
            for x in bag.instances() {
                total += (-(-(x - s).norm_squared()).exp_m1()).ln();
            }
        }
    }
    Ok(total)
}

/// Noisy-OR diverse density of `s`; lies in `[0, 1]`.
pub fn dd_objective(s: &DVector<f64>, bags: &BagSet) -> Result<f64> {
    Ok(dd_log_objective(s, bags)?.exp())
}

/// EM-DD concept: a target point and non-negative per-feature scales.
#[derive(Clone, Debug, PartialEq)]
pub struct DdConcept {
    pub point: DVector<f64>,
    pub scales: DVector<f64>,
}

impl DdConcept {
    pub fn new(point: DVector<f64>, scales: DVector<f64>) -> Result<Self> {
        if point.len() != scales.len() {
            return Err(Error::DimensionMismatch { expected: point.len(), got: scales.len() });
        }
        if let Some(i) = scales.iter().position(|&c| !(c >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "scale {i} is {}, scales must be non-negative",
                scales[i]
            )));
        }
        Ok(DdConcept { point, scales })
    }

    /// Point with all scales at one.
    pub fn unit_scales(point: DVector<f64>) -> Self {
        let d = point.len();
        DdConcept { point, scales: DVector::from_element(d, 1.0) }
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// `ln emdd_predict(x)`, usable as a detection score where the
    /// prediction itself underflows.
    pub fn log_predict(&self, x: &Instance) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(-self.scaled_distance(x))
    }

    /// `sum_d c_d (x_d - p_d)^2`
    fn scaled_distance(&self, x: &Instance) -> f64 {
        self.point
            .iter()
            .zip(self.scales.iter())
            .zip(x.iter())
            .map(|((p, c), v)| c * (v - p) * (v - p))
            .sum()
    }
}

/// `exp(-sum_d c_d (x_d - p_d)^2)`, in `(0, 1]`.
pub fn emdd_predict(x: &Instance, concept: &DdConcept) -> Result<f64> {
    if x.len() != concept.dim() {
        return Err(Error::DimensionMismatch { expected: concept.dim(), got: x.len() });
    }
    Ok((-concept.scaled_distance(x)).exp())
}

/// Log-likelihood of the chosen representatives:
/// `sum_pos -q(x) + sum_neg ln(1 - exp(-q(x)))` with `q` the scaled distance.
pub fn emdd_log_likelihood(concept: &DdConcept, positives: &[&Instance], negatives: &[&Instance]) -> f64 {
    let pos: f64 = positives.iter().map(|x| -concept.scaled_distance(x)).sum();
    let neg: f64 = negatives
        .iter()
        .map(|x| (-(-concept.scaled_distance(x)).exp_m1()).ln())
        .sum();
    pos + neg
}

/// Gradient of [`emdd_log_likelihood`] with respect to `(point, scales)`.
/// The scale half is zero unless `estimate_scales`.
pub fn emdd_gradient(
    concept: &DdConcept,
    positives: &[&Instance],
    negatives: &[&Instance],
    estimate_scales: bool,
) -> (DVector<f64>, DVector<f64>) {
    let d = concept.dim();
    let mut g_point = DVector::zeros(d);
    let mut g_scales = DVector::zeros(d);
    // dq/dp_k = -2 c_k (x_k - p_k), dq/dc_k = (x_k - p_k)^2
    let mut accumulate = |x: &Instance, weight: f64| {
        for k in 0..d {
            let diff = x[k] - concept.point[k];
            g_point[k] += weight * -2.0 * concept.scales[k] * diff;
            if estimate_scales {
                g_scales[k] += weight * diff * diff;
            }
        }
    };
    for x in positives {
        accumulate(x, -1.0);
    }
    for x in negatives {
        // d/dq ln(1 - e^{-q}) = 1 / (e^q - 1)
        accumulate(x, 1.0 / concept.scaled_distance(x).exp_m1());
    }
    (g_point, g_scales)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmddConfig {
    pub estimate_scales: bool,
    pub max_iterations: usize,
    /// EM stops once the log-likelihood improves by less than this.
    pub tolerance: f64,
    pub max_gradient_steps: usize,
    pub armijo: f64,
}

impl EmddConfig {
    pub fn new(estimate_scales: bool) -> Self {
        EmddConfig {
            estimate_scales,
            max_iterations: 500,
            tolerance: 1e-8,
            max_gradient_steps: 100,
            armijo: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmddResult {
    pub concept: DdConcept,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
}

fn argmax_predict(bag: &Bag, concept: &DdConcept) -> usize {
    let mut best = 0;
    let mut best_q = f64::INFINITY;
    for (i, x) in bag.instances().iter().enumerate() {
        let q = concept.scaled_distance(x);
        if q < best_q {
            best = i;
            best_q = q;
        }
    }
    best
}

/// Representative per bag: the instance with the highest [`emdd_predict`],
/// for positive and negative bags alike. Returns positive-bag picks, then
/// negative-bag picks, each in bag order.
pub fn emdd_e_step(concept: &DdConcept, bags: &BagSet) -> (Vec<usize>, Vec<usize>) {
    let pos = bags.positive_bags().map(|b| argmax_predict(b, concept)).collect();
    let neg = bags.negative_bags().map(|b| argmax_predict(b, concept)).collect();
    (pos, neg)
}

/// Projected gradient ascent with Armijo backtracking (step halving) on the
/// representatives' log-likelihood. Returns the new concept and the
/// log-likelihood after every accepted step (first entry: the start).
pub fn emdd_m_step(
    concept: &DdConcept,
    positives: &[&Instance],
    negatives: &[&Instance],
    config: &EmddConfig,
    iteration: usize,
) -> Result<(DdConcept, Vec<f64>)> {
    let mut current = concept.clone();
    let mut value = emdd_log_likelihood(&current, positives, negatives);
    let mut trace = vec![value];
    let mut step: f64 = 1.0;
    for _ in 0..config.max_gradient_steps {
        let (gp, gc) = emdd_gradient(&current, positives, negatives, config.estimate_scales);
        if gp.iter().chain(gc.iter()).any(|g| !g.is_finite()) || !value.is_finite() {
            return Err(Error::NonFiniteGradient {
                iteration,
                detail: format!(
                    "log-likelihood {value}, |grad point| {}, |grad scales| {}",
                    gp.norm(),
                    gc.norm()
                ),
            });
        }
        if gp.norm_squared() + gc.norm_squared() == 0.0 {
            break;
        }
        let mut accepted = None;
        // allow the step to grow back after a run of easy steps
        step = (step * 2.0).min(1e6);
        for _ in 0..60 {
            let point = &current.point + &gp * step;
            let scales = (&current.scales + &gc * step).map(|c| c.max(0.0));
            let candidate = DdConcept { point, scales };
            let moved = (&candidate.point - &current.point).dot(&gp)
                + (&candidate.scales - &current.scales).dot(&gc);
            let new_value = emdd_log_likelihood(&candidate, positives, negatives);
            if new_value.is_finite() && new_value >= value + config.armijo * moved {
                accepted = Some((candidate, new_value));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_value)) = accepted else { break };
        let gain = next_value - value;
        current = next;
        value = next_value;
        trace.push(value);
        if gain < config.tolerance {
            break;
        }
    }
    Ok((current, trace))
}

/// The positive instance with the highest diverse density; ties
/// go to the first in bag order.
fn initial_point(bags: &BagSet) -> Result<DVector<f64>> {
    let mut best: Option<(&Instance, f64)> = None;
    for bag in bags.positive_bags() {
        for x in bag.instances() {
            let v = dd_log_objective(x, bags)?;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((x, v));
            }
        }
    }
    best.map(|(x, _)| x.clone()).ok_or(Error::NoValidCandidate)
}

/// Trains an EM-DD concept (EM-DD-P when `config.estimate_scales` is false).
pub fn emdd_train(bags: &BagSet, config: &EmddConfig) -> Result<EmddResult> {
    bags.require_both_classes()?;
    if config.max_iterations == 0 {
        return Err(Error::InvalidConfig(vec!["max_iterations: must be at least 1".into()]));
    }
    let mut concept = DdConcept::unit_scales(initial_point(bags)?);
    let pos_bags: Vec<&Bag> = bags.positive_bags().collect();
    let neg_bags: Vec<&Bag> = bags.negative_bags().collect();

    let mut previous: Option<(Vec<usize>, Vec<usize>, f64)> = None;
    let mut log_likelihood = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let (pos_pick, neg_pick) = emdd_e_step(&concept, bags);
        let positives: Vec<&Instance> =
            pos_bags.iter().zip(&pos_pick).map(|(b, &i)| &b.instances()[i]).collect();
        let negatives: Vec<&Instance> =
            neg_bags.iter().zip(&neg_pick).map(|(b, &i)| &b.instances()[i]).collect();
        let (next, trace) = emdd_m_step(&concept, &positives, &negatives, config, iterations)?;
        let next_ll = *trace.last().expect("trace starts with the initial value");

        if let Some((pp, np, prev_ll)) = &previous {
            if next_ll - prev_ll < config.tolerance {
                // no improvement: keep the better of the two concepts
                if next_ll > *prev_ll {
                    concept = next;
                    log_likelihood = next_ll;
                }
                converged = true;
                break;
            }
            if *pp == pos_pick && *np == neg_pick {
                concept = next;
                log_likelihood = next_ll;
                converged = true;
                break;
            }
        }
        concept = next;
        log_likelihood = next_ll;
        previous = Some((pos_pick, neg_pick, log_likelihood));
    }
    Ok(EmddResult { concept, iterations, log_likelihood, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut impl Rng, d: usize, lo: f64, hi: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.random_range(lo..hi))
    }

    fn random_bags(rng: &mut impl Rng, d: usize) -> BagSet {
        let mut bags = Vec::new();
        for i in 0..rng.random_range(1..4) {
            let n = rng.random_range(1..4);
            bags.push(Bag::positive(format!("p{i}"), (0..n).map(|_| rand_vec(rng, d, -1.0, 1.0)).collect()).unwrap());
        }
        for i in 0..rng.random_range(1..4) {
            let n = rng.random_range(1..4);
            bags.push(Bag::negative(format!("n{i}"), (0..n).map(|_| rand_vec(rng, d, -1.0, 1.0)).collect()).unwrap());
        }
        BagSet::new(bags).unwrap()
    }

    #[test]
    fn dd_hand_case() {
        let s = dvector![0.5, -0.25];
        let offset = dvector![std::f64::consts::LN_2.sqrt(), 0.0];
        let bags = BagSet::new(vec![
            Bag::positive("p", vec![s.clone(), dvector![3.0, 3.0]]).unwrap(),
            Bag::negative("n", vec![&s + offset]).unwrap(),
        ])
        .unwrap();
        assert!((dd_objective(&s, &bags).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dd_negative_at_s_is_zero() {
        let s = dvector![1.0, 1.0];
        let bags = BagSet::new(vec![
            Bag::positive("p", vec![dvector![0.0, 0.0]]).unwrap(),
            Bag::negative("n", vec![dvector![5.0, 5.0], s.clone()]).unwrap(),
        ])
        .unwrap();
        assert_eq!(dd_objective(&s, &bags).unwrap(), 0.0);
    }

    #[test]
    fn dd_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let bags = random_bags(&mut rng, 3);
            let s = rand_vec(&mut rng, 3, -1.0, 1.0);
            let mut direct = 1.0;
            for bag in bags.bags() {
                if bag.is_positive() {
                    let mut miss = 1.0;
                    for x in bag.instances() {
                        miss *= 1.0 - (-(x - &s).norm_squared()).exp();
                    }
                    direct *= 1.0 - miss;
                } else {
                    for x in bag.instances() {
                        direct *= 1.0 - (-(x - &s).norm_squared()).exp();
                    }
                }
            }
            let got = dd_objective(&s, &bags).unwrap();
            assert!((0.0..=1.0).contains(&got));
            assert!((got - direct).abs() <= 1e-10 * direct.abs().max(1e-300), "{got} vs {direct}");
        }
    }

    #[test]
    fn predict_cases() {
        let c = DdConcept::new(dvector![1.0, 2.0], dvector![0.5, 2.0]).unwrap();
        assert_eq!(emdd_predict(&dvector![1.0, 2.0], &c).unwrap(), 1.0);
        let zero = DdConcept::new(dvector![1.0, 2.0], dvector![0.0, 0.0]).unwrap();
        assert_eq!(emdd_predict(&dvector![-7.0, 9.0], &zero).unwrap(), 1.0);
        let x = dvector![0.0, 3.0];
        let want = (-(0.5 * 1.0 + 2.0 * 1.0_f64)).exp();
        assert!((emdd_predict(&x, &c).unwrap() - want).abs() < 1e-12);
        assert!(DdConcept::new(dvector![0.0], dvector![-1.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let d = 3;
            let concept = DdConcept::new(rand_vec(&mut rng, d, -1.0, 1.0), rand_vec(&mut rng, d, 0.2, 2.0)).unwrap();
            let pos: Vec<_> = (0..3).map(|_| rand_vec(&mut rng, d, -1.5, 1.5)).collect();
            let neg: Vec<_> = (0..3).map(|_| &concept.point + rand_vec(&mut rng, d, 0.3, 1.0)).collect();
            let pos_r: Vec<&Instance> = pos.iter().collect();
            let neg_r: Vec<&Instance> = neg.iter().collect();
            let (gp, gc) = emdd_gradient(&concept, &pos_r, &neg_r, true);
            let h = 1e-5;
            let mut fd = DVector::zeros(2 * d);
            for k in 0..2 * d {
                let mut plus = concept.clone();
                let mut minus = concept.clone();
                if k < d {
                    plus.point[k] += h;
                    minus.point[k] -= h;
                } else {
                    plus.scales[k - d] += h;
                    minus.scales[k - d] -= h;
                }
                fd[k] = (emdd_log_likelihood(&plus, &pos_r, &neg_r) - emdd_log_likelihood(&minus, &pos_r, &neg_r)) / (2.0 * h);
            }
            let analytic = DVector::from_iterator(2 * d, gp.iter().chain(gc.iter()).copied());
            assert!((&analytic - &fd).norm() <= 1e-4 * analytic.norm(), "{analytic} vs {fd}");
        }
    }

    #[test]
    fn m_step_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..30 {
            let concept = DdConcept::unit_scales(rand_vec(&mut rng, 4, -1.0, 1.0));
            let pos: Vec<_> = (0..4).map(|_| rand_vec(&mut rng, 4, -1.0, 1.0)).collect();
            let neg: Vec<_> = (0..4).map(|_| rand_vec(&mut rng, 4, -1.0, 1.0)).collect();
            let pos_r: Vec<&Instance> = pos.iter().collect();
            let neg_r: Vec<&Instance> = neg.iter().collect();
            let (out, trace) = emdd_m_step(&concept, &pos_r, &neg_r, &EmddConfig::new(true), 1).unwrap();
            assert!(trace.windows(2).all(|w| w[1] >= w[0]));
            assert!(out.scales.iter().all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn recovers_isolated_bump() {
        let p = dvector![0.3, -0.2, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut bags = Vec::new();
        for i in 0..4 {
            let mut inst = vec![p.clone()];
            inst.push(rand_vec(&mut rng, 3, 6.0, 8.0));
            bags.push(Bag::positive(format!("p{i}"), inst).unwrap());
        }
        for i in 0..4 {
            bags.push(Bag::negative(format!("n{i}"), (0..3).map(|_| rand_vec(&mut rng, 3, -8.0, -6.0)).collect()).unwrap());
        }
        let bags = BagSet::new(bags).unwrap();
        for estimate in [false, true] {
            let res = emdd_train(&bags, &EmddConfig::new(estimate)).unwrap();
            assert!((&res.concept.point - &p).norm() < 1e-3, "{}", res.concept.point);
            if !estimate {
                assert!(res.concept.scales.iter().all(|&c| c == 1.0));
            }
        }
    }

    #[test]
    fn e_step_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let bags = random_bags(&mut rng, 3);
            let concept = DdConcept::new(rand_vec(&mut rng, 3, -1.0, 1.0), rand_vec(&mut rng, 3, 0.0, 2.0)).unwrap();
            let (pp, np) = emdd_e_step(&concept, &bags);
            let oracle = |b: &Bag| {
                let preds: Vec<f64> = b.instances().iter().map(|x| emdd_predict(x, &concept).unwrap()).collect();
                let mut best = 0;
                for i in 1..preds.len() {
                    if preds[i] > preds[best] {
                        best = i;
                    }
                }
                best
            };
            assert_eq!(pp, bags.positive_bags().map(oracle).collect::<Vec<_>>());
            assert_eq!(np, bags.negative_bags().map(oracle).collect::<Vec<_>>());
        }
    }

    #[test]
    fn single_instance_bags() {
        let bags = BagSet::new(vec![
            Bag::positive("p", vec![dvector![1.0, 0.0]]).unwrap(),
            Bag::negative("n", vec![dvector![-1.0, 0.0]]).unwrap(),
        ])
        .unwrap();
        let mut config = EmddConfig::new(true);
        config.max_iterations = 1;
        let res = emdd_train(&bags, &config).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(emdd_e_step(&res.concept, &bags), (vec![0], vec![0]));
    }

    #[test]
    fn requires_both_classes() {
        let bags = BagSet::new(vec![Bag::positive("p", vec![dvector![1.0]]).unwrap()]).unwrap();
        assert!(matches!(
            emdd_train(&bags, &EmddConfig::new(false)),
            Err(Error::MissingBagClass { .. })
        ));
    }
}
