//! Spectral matched filter (SMF) and adaptive cosine estimator (ACE).
//!
//! Both statistics are evaluated in whitened coordinates: with
//! `x_w = D^{-1/2} U^T (x - mu)` and `s_w = D^{-1/2} U^T s`,
//!
//! * SMF = `s_w^T x_w / ||s_w||`
//! * ACE = `s_w^T x_w / (||s_w|| ||x_w||)`
//!
//! which equal the textbook forms written with `Sigma^{-1}`. The [`direct`]
//! module keeps the `Sigma^{-1}` versions around as a cross-check.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectral::{unit_or_zero_error, BackgroundStats, Instance, ZERO_NORM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    Smf,
    Ace,
}

impl DetectorMode {
    pub fn name(self) -> &'static str {
        match self {
            DetectorMode::Smf => "smf",
            DetectorMode::Ace => "ace",
        }
    }
}

impl std::fmt::Display for DetectorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Whitened unit signature for an original-space signature.
fn whitened_unit(s: &DVector<f64>, stats: &BackgroundStats) -> Result<DVector<f64>> {
    stats.check_dim(s.len())?;
    if s.norm() == 0.0 {
        return Err(Error::ZeroSignature);
    }
    unit_or_zero_error(&stats.whiten_direction(s)?).map_err(|_| Error::ZeroSignature)
}

fn ace_from_whitened(s_unit: &DVector<f64>, x_white: &DVector<f64>) -> Result<f64> {
    let norm = x_white.norm();
    if norm < ZERO_NORM {
        return Err(Error::ZeroVector { norm });
    }
    Ok(s_unit.dot(x_white) / norm)
}

/// SMF statistic of `x` for signature `s`. Zero at the background mean.
pub fn smf_score(x: &Instance, s: &DVector<f64>, stats: &BackgroundStats) -> Result<f64> {
    let s_unit = whitened_unit(s, stats)?;
    Ok(s_unit.dot(&stats.whiten_centered(x)?))
}

/// ACE statistic (signed cosine in whitened space), in `[-1, 1]`.
pub fn ace_score(x: &Instance, s: &DVector<f64>, stats: &BackgroundStats) -> Result<f64> {
    let s_unit = whitened_unit(s, stats)?;
    ace_from_whitened(&s_unit, &stats.whiten_centered(x)?)
}

/// A target signature tied to the background statistics it was learned
/// against. Holds both the unit original-space vector and its unit whitened
/// counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSignature {
    signature: DVector<f64>,
    whitened: DVector<f64>,
    mode: DetectorMode,
    stats: Arc<BackgroundStats>,
}

impl TargetSignature {
    /// From an original-space signature (any nonzero scale).
    pub fn from_original(
        s: &DVector<f64>,
        stats: Arc<BackgroundStats>,
        mode: DetectorMode,
    ) -> Result<Self> {
        let whitened = whitened_unit(s, &stats)?;
        Ok(TargetSignature {
            signature: s / s.norm(),
            whitened,
            mode,
            stats,
        })
    }

    /// From a unit whitened-space signature, mapped back through `U D^{1/2}`.
    pub fn from_whitened(
        whitened: &DVector<f64>,
        stats: Arc<BackgroundStats>,
        mode: DetectorMode,
    ) -> Result<Self> {
        let signature = stats.unwhiten_signature(whitened)?;
        Ok(TargetSignature {
            signature,
            whitened: whitened.clone(),
            mode,
            stats,
        })
    }

    /// Unit-norm signature in the original feature space.
    pub fn signature(&self) -> &DVector<f64> {
        &self.signature
    }

    /// Unit-norm signature in whitened space.
    pub fn whitened(&self) -> &DVector<f64> {
        &self.whitened
    }

    pub fn mode(&self) -> DetectorMode {
        self.mode
    }

    pub fn stats(&self) -> &BackgroundStats {
        &self.stats
    }

    pub fn stats_arc(&self) -> &Arc<BackgroundStats> {
        &self.stats
    }

    pub fn dim(&self) -> usize {
        self.signature.len()
    }

    /// Same signature, scored with a different detector.
    pub fn with_mode(&self, mode: DetectorMode) -> Self {
        TargetSignature {
            mode,
            ..self.clone()
        }
    }

    /// Short content hash of the signature and mode.
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.mode.name().as_bytes());
        for v in self.signature.iter() {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..6])
    }

    pub fn score(&self, x: &Instance) -> Result<f64> {
        let x_white = self.stats.whiten_centered(x)?;
        match self.mode {
            DetectorMode::Smf => Ok(self.whitened.dot(&x_white)),
            DetectorMode::Ace => ace_from_whitened(&self.whitened, &x_white),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionScores {
    pub scores: Vec<f64>,
    pub mode: DetectorMode,
    pub signature_id: String,
}

/// Scores every instance with the signature's detector, preserving order.
pub fn score_dataset(instances: &[Instance], signature: &TargetSignature) -> Result<DetectionScores> {
    let scores = instances
        .iter()
        .enumerate()
        .map(|(i, x)| signature.score(x).map_err(|e| Error::at_instance(i, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionScores {
        scores,
        mode: signature.mode(),
        signature_id: signature.id(),
    })
}

/// Reference formulas written with an explicit `Sigma^{-1}` solve. O(d^3)
/// per call; for cross-checking the whitened path only.
pub mod direct {
    use nalgebra::DVector;

    use crate::error::{Error, Result};
    use crate::spectral::BackgroundStats;

    fn solve(stats: &BackgroundStats, v: &DVector<f64>) -> Result<DVector<f64>> {
        stats.check_dim(v.len())?;
        let chol = stats
            .covariance()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?;
        Ok(chol.solve(v))
    }

    /// `s^T Sigma^{-1} (x - mu) / sqrt(s^T Sigma^{-1} s)`
    pub fn smf_score(x: &DVector<f64>, s: &DVector<f64>, stats: &BackgroundStats) -> Result<f64> {
        if s.norm() == 0.0 {
            return Err(Error::ZeroSignature);
        }
        let centered = x - stats.mean();
        let si_s = solve(stats, s)?;
        Ok(si_s.dot(&centered) / s.dot(&si_s).sqrt())
    }

    /// `s^T Sigma^{-1} (x - mu) / (sqrt(s^T Sigma^{-1} s) sqrt((x-mu)^T Sigma^{-1} (x-mu)))`
    pub fn ace_score(x: &DVector<f64>, s: &DVector<f64>, stats: &BackgroundStats) -> Result<f64> {
        if s.norm() == 0.0 {
            return Err(Error::ZeroSignature);
        }
        let centered = x - stats.mean();
        let si_s = solve(stats, s)?;
        let si_x = solve(stats, &centered)?;
        let xx = centered.dot(&si_x);
        if xx.sqrt() < crate::spectral::ZERO_NORM {
            return Err(Error::ZeroVector { norm: xx.sqrt() });
        }
        Ok(si_s.dot(&centered) / (s.dot(&si_s).sqrt() * xx.sqrt()))
    }
}
