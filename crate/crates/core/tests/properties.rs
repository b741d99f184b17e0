use std::sync::Arc;

use mitarget::detectors::{direct, DetectorMode, TargetSignature};
use mitarget::eval::{kmeans, roc_curve, KMEANS_MAX_ITERATIONS};
use mitarget::io::{read_bags, write_bags};
use mitarget::spectral::{Bag, BagSet, BackgroundStats, Regularization};
use mitarget::synth::{generate, SyntheticConfig};
use nalgebra::DVector;
use proptest::prelude::*;

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, d)
}

/// Dimension, background sample, and a probe pair `(x, s)`.
fn scene() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|d| (prop::collection::vec(vector(d), 3 * d + 4..40), vector(d), vector(d)))
}

fn stats_of(rows: &[Vec<f64>]) -> Arc<BackgroundStats> {
    let xs: Vec<DVector<f64>> = rows.iter().map(|r| DVector::from_vec(r.clone())).collect();
    Arc::new(BackgroundStats::compute(xs.iter(), Regularization::Auto).unwrap())
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0i32..20, any::<bool>()), 2..200).prop_map(|v| {
        let scores: Vec<f64> = v.iter().map(|(s, _)| *s as f64 / 3.0).collect();
        let mut labels: Vec<bool> = v.iter().map(|(_, l)| *l).collect();
        labels[0] = true;
        labels[1] = false;
        (scores, labels)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn whitened_and_direct_scores_agree((bg, x, s) in scene()) {
        let stats = stats_of(&bg);
        let x = DVector::from_vec(x);
        let s = DVector::from_vec(s);
        prop_assume!(s.norm() > 1e-3);
        for mode in [DetectorMode::Smf, DetectorMode::Ace] {
            let sig = TargetSignature::from_original(&s, stats.clone(), mode).unwrap();
            let direct = match mode {
                DetectorMode::Smf => direct::smf_score(&x, &s, &stats).unwrap(),
                DetectorMode::Ace => direct::ace_score(&x, &s, &stats).unwrap(),
            };
            let tol = 1e-8 * direct.abs().max(1.0);
            prop_assert!((sig.score(&x).unwrap() - direct).abs() <= tol);
        }
    }

    #[test]
    fn ace_is_scale_invariant((bg, x, s) in scene(), c in 0.01..100.0f64) {
        let stats = stats_of(&bg);
        let x = DVector::from_vec(x);
        let s = DVector::from_vec(s);
        prop_assume!(s.norm() > 1e-3 && (&x - stats.mean()).norm() > 1e-3);
        let ace = TargetSignature::from_original(&s, stats.clone(), DetectorMode::Ace).unwrap();
        let base = ace.score(&x).unwrap();
        let xc = stats.mean() + (&x - stats.mean()) * c;
        prop_assert!((ace.score(&xc).unwrap() - base).abs() <= 1e-9);
        let scaled = TargetSignature::from_original(&(s * c), stats, DetectorMode::Ace).unwrap();
        prop_assert!((scaled.score(&x).unwrap() - base).abs() <= 1e-9);
        prop_assert!(base.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn auc_equals_pairwise_statistic((scores, labels) in scored_labels()) {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (a, _) in scores.iter().zip(&labels).filter(|(_, l)| **l) {
            for (b, _) in scores.iter().zip(&labels).filter(|(_, l)| !**l) {
                pairs += 1.0;
                wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        let curve = roc_curve(&scores, &labels).unwrap();
        prop_assert!((curve.auc() - wins / pairs).abs() <= 1e-12);
        prop_assert_eq!(curve.nauc(1.0).unwrap(), curve.auc());
    }

    #[test]
    fn roc_ignores_monotone_transforms((scores, labels) in scored_labels(), a in 0.1..10.0f64, b in -5.0..5.0f64) {
        let moved: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
        let before = roc_curve(&scores, &labels).unwrap();
        let after = roc_curve(&moved, &labels).unwrap();
        prop_assert_eq!(before.points.len(), after.points.len());
        for (p, q) in before.points.iter().zip(&after.points) {
            prop_assert_eq!((p.far, p.pd), (q.far, q.pd));
        }
    }

    #[test]
    fn roc_is_monotone_and_partial_area_grows((scores, labels) in scored_labels(), cuts in prop::collection::vec(0.001..1.0f64, 2..6)) {
        let curve = roc_curve(&scores, &labels).unwrap();
        for w in curve.points.windows(2) {
            prop_assert!(w[0].far <= w[1].far && w[0].pd <= w[1].pd);
        }
        let mut cuts = cuts;
        cuts.sort_by(f64::total_cmp);
        let areas: Vec<f64> = cuts.iter().map(|&f| curve.nauc(f).unwrap() * f).collect();
        for w in areas.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-15);
        }
        for (&f, n) in cuts.iter().zip(cuts.iter().map(|&f| curve.nauc(f).unwrap())) {
            prop_assert!((0.0..=1.0).contains(&n), "nauc {} at {}", n, f);
        }
    }

    #[test]
    fn synthetic_proportions_are_simplex_points(seed in any::<u64>(), mu in 0.05..0.6f64, targets in 1usize..4) {
        let config = SyntheticConfig {
            endmembers: vec![vec![1.0, 0.2, 0.1], vec![0.1, 1.0, 0.3], vec![0.2, 0.1, 1.0]],
            n_pos_bags: 3,
            n_neg_bags: 3,
            instances_per_bag: 5,
            targets_per_positive_bag: targets,
            mean_target_proportion: mu,
            proportion_concentration: 20.0,
            snr_db: f64::INFINITY,
            target_background_mask: None,
            seed,
        };
        let data = generate(&config).unwrap();
        for (t, bag) in data.truth.chunks(5).zip(data.bags.bags()) {
            let n_targets = t.iter().filter(|i| i.is_target).count();
            prop_assert_eq!(n_targets, if bag.is_positive() { targets } else { 0 });
        }
        for t in &data.truth {
            let total: f64 = t.proportions.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(t.proportions.iter().all(|&p| p >= 0.0));
            prop_assert_eq!(t.alpha_target, t.proportions[0]);
            prop_assert_eq!(t.is_target, t.alpha_target > 0.0);
        }
    }

    #[test]
    fn bag_csv_round_trips(rows in prop::collection::vec((0usize..6, prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3)), 1..60)) {
        let mut bags: Vec<Bag> = Vec::new();
        for (id, x) in rows {
            let name = format!("b{id}");
            let x = DVector::from_vec(x);
            match bags.iter().position(|b| b.id() == name) {
                Some(i) => {
                    let old = bags.remove(i);
                    let label = old.label();
                    let mut xs = old.into_instances();
                    xs.push(x);
                    bags.insert(i, Bag::new(name, label, xs).unwrap());
                }
                None => bags.push(if id % 2 == 0 { Bag::positive(name, vec![x]).unwrap() } else { Bag::negative(name, vec![x]).unwrap() }),
            }
        }
        let set = BagSet::new(bags).unwrap();
        let mut buf = Vec::new();
        write_bags(&set, &mut buf).unwrap();
        prop_assert_eq!(read_bags(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn kmeans_assigns_to_nearest_center(points in prop::collection::vec(vector(2), 1..40), k in 1usize..6, seed in any::<u64>()) {
        prop_assume!(k <= points.len());
        let xs: Vec<DVector<f64>> = points.into_iter().map(DVector::from_vec).collect();
        let fit = kmeans(&xs, k, seed).unwrap();
        prop_assert!(fit.iterations <= KMEANS_MAX_ITERATIONS);
        prop_assert_eq!(fit.assignments.len(), xs.len());
        if fit.converged {
            for (x, &a) in xs.iter().zip(&fit.assignments) {
                let own = (x - &fit.centers[a]).norm_squared();
                let best = fit.centers.iter().map(|c| (x - c).norm_squared()).fold(f64::INFINITY, f64::min);
                prop_assert!(own <= best + 1e-9);
            }
        }
    }
}
