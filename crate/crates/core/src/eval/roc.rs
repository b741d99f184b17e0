use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this value are declared targets. The first point
    /// uses `+inf`.
    pub threshold: f64,
    /// False alarms per negative instance.
    pub far: f64,
    pub pd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// ROC curve with one point per distinct score (descending). Equal scores
/// flip together, so ties produce diagonal segments.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite { context: format!("score {i}"), feature: 0 });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels { positives: n_pos, negatives: n_neg });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(order.len() + 1);
    points.push(RocPoint { threshold: f64::INFINITY, far: 0.0, pd: 0.0 });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            far: fp as f64 / n_neg as f64,
            pd: tp as f64 / n_pos as f64,
        });
    }
    Ok(RocCurve { points, n_pos, n_neg })
}

impl RocCurve {
    pub fn auc(&self) -> f64 {
        auc(self)
    }

    pub fn nauc(&self, far_max: f64) -> Result<f64> {
        nauc(self, far_max)
    }

    /// Detection rate at `far` on the piecewise-linear curve. On a vertical
    /// segment the highest detection rate is returned.
    pub fn pd_at(&self, far: f64) -> f64 {
        let pts = &self.points;
        let mut best = 0.0f64;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if far < a.far || far > b.far {
                continue;
            }
            let pd = if b.far == a.far { b.pd } else { a.pd + (b.pd - a.pd) * (far - a.far) / (b.far - a.far) };
            best = best.max(pd);
        }
        if far > pts.last().map_or(0.0, |p| p.far) {
            best = 1.0;
        }
        best
    }
}

/// Trapezoidal area under the full curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[0].pd + w[1].pd) * 0.5)
        .sum()
}

/// Trapezoidal area over `far` in `[0, far_max]` divided by `far_max`, with
/// linear interpolation at the cut. Beyond the last point the curve is
/// taken to stay at full detection.
pub fn partial_area(curve: &RocCurve, far_max: f64) -> Result<f64> {
    if !(far_max > 0.0) || far_max.is_infinite() {
        return Err(Error::InvalidArgument(format!("far_max must be positive and finite, got {far_max}")));
    }
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.far >= far_max {
            break;
        }
        if b.far <= far_max {
            area += (b.far - a.far) * (a.pd + b.pd) * 0.5;
        } else {
            let pd_cut = a.pd + (b.pd - a.pd) * (far_max - a.far) / (b.far - a.far);
            area += (far_max - a.far) * (a.pd + pd_cut) * 0.5;
        }
    }
    let last = curve.points.last().map_or(0.0, |p| p.far);
    if far_max > last {
        area += far_max - last;
    }
    Ok(area)
}

pub fn nauc(curve: &RocCurve, far_max: f64) -> Result<f64> {
    Ok(partial_area(curve, far_max)? / far_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_and_inverted() {
        let c = roc_curve(&[2.0, 1.0], &[true, false]).unwrap();
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.far, p.pd)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(c.auc(), 1.0);
        let c = roc_curve(&[1.0, 2.0], &[true, false]).unwrap();
        assert_eq!(c.auc(), 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(matches!(
            roc_curve(&[1.0, 2.0], &[true, true]),
            Err(Error::DegenerateLabels { positives: 2, negatives: 0 })
        ));
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(2..120);
            // coarse scores force ties
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..15) as f64) * 0.5).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            let c = roc_curve(&scores, &labels).unwrap();
            assert!((c.auc() - mann_whitney(&scores, &labels)).abs() < 1e-12);
            assert_eq!(c.nauc(1.0).unwrap(), c.auc());
        }
    }

    #[test]
    fn curve_shape() {
        let c = roc_curve(&[0.3, 0.3, 0.9, 0.1, 0.5], &[true, false, true, false, false]).unwrap();
        let first = c.points[0];
        let last = *c.points.last().unwrap();
        assert_eq!((first.far, first.pd), (0.0, 0.0));
        assert_eq!((last.far, last.pd), (1.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[1].far >= w[0].far && w[1].pd >= w[0].pd);
        }
        assert_eq!(c.points.len(), 5);
    }

    #[test]
    fn nauc_perfect_detector() {
        let c = roc_curve(&[5.0, 4.0, 1.0, 0.0], &[true, true, false, false]).unwrap();
        for far_max in [1e-4, 0.001, 0.3, 1.0, 2.0] {
            assert!((c.nauc(far_max).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn nauc_interpolates_at_cut() {
        // one diagonal segment from (0,0) to (1,1)
        let c = roc_curve(&[1.0, 1.0], &[true, false]).unwrap();
        assert!((c.nauc(0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!(c.nauc(0.0).is_err());
    }
}
