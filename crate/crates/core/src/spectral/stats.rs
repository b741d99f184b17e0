//! Background mean/covariance, its eigendecomposition, and the whitening
//! transform `x -> D^{-1/2} U^T (x - mu)` built from it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::bag::{check_finite, BagSet};
use crate::error::{Error, Result};

/// Eigenvalues at or below this fraction of the largest one are treated as zero.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Whitened vectors shorter than this cannot be normalized.
pub const ZERO_NORM: f64 = 1e-12;

/// Ridge added to the background covariance before decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Regularization {
    /// `1e-6 * trace(cov) / d`.
    #[default]
    Auto,
    Fixed(f64),
}

impl Regularization {
    pub fn resolve(self, covariance: &DMatrix<f64>) -> f64 {
        match self {
            Regularization::Auto => 1e-6 * covariance.trace() / covariance.nrows() as f64,
            Regularization::Fixed(eps) => eps,
        }
    }
}

/// Which training instances the background statistics are fitted on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WhiteningScope {
    /// Instances of negative bags only.
    #[default]
    Negative,
    /// Every training instance, positive and negative bags alike. Useful for
    /// very low-dimensional data where the negative-only fit distorts structure.
    Global,
}

/// A whitened, mean-subtracted instance and (optionally) its unit-norm version.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenedInstance {
    pub hat: DVector<f64>,
    pub unit: Option<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundStats {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    eigenvectors: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    regularization: f64,
    // D^{-1/2} U^T
    whitener: DMatrix<f64>,
}

impl BackgroundStats {
    /// Fits mean and population (1/N) covariance, adds the ridge, and
    /// eigendecomposes. Needs at least two instances.
    pub fn compute<'a, I>(instances: I, regularization: Regularization) -> Result<Self>
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        let data: Vec<&DVector<f64>> = instances.into_iter().collect();
        if data.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: data.len(),
            });
        }
        let d = data[0].len();
        if d == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        for (i, x) in data.iter().enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            check_finite(x, || format!("background instance {i}"))?;
        }
        let n = data.len() as f64;

        let mut mean = DVector::zeros(d);
        for x in &data {
            mean += *x;
        }
        mean /= n;

        let mut centered = DMatrix::zeros(d, data.len());
        for (j, x) in data.iter().enumerate() {
            centered.set_column(j, &(*x - &mean));
        }
        let mut covariance = &centered * centered.transpose();
        covariance /= n;

        let eps = regularization.resolve(&covariance);
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization must be finite and non-negative, got {eps}"
            )));
        }
        for i in 0..d {
            covariance[(i, i)] += eps;
        }
        Self::decompose(mean, covariance, eps)
    }

    /// Fits statistics on the bags selected by `scope`.
    pub fn from_bags(
        bags: &BagSet,
        scope: WhiteningScope,
        regularization: Regularization,
    ) -> Result<Self> {
        match scope {
            WhiteningScope::Negative => Self::compute(bags.negative_instances(), regularization),
            WhiteningScope::Global => Self::compute(bags.instances(), regularization),
        }
    }

    /// Rebuilds statistics from a stored mean and (already regularized) covariance.
    pub fn from_mean_covariance(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        check_finite(&mean, || "background mean".into())?;
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("background covariance has non-finite entries".into()));
        }
        Self::decompose(mean, covariance, 0.0)
    }

    fn decompose(mean: DVector<f64>, covariance: DMatrix<f64>, regularization: f64) -> Result<Self> {
        let d = mean.len();
        let symmetric = (&covariance + covariance.transpose()) * 0.5;
        let eig = SymmetricEigen::new(symmetric);

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = DMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(src).clone_owned();
            // sign convention: the largest-magnitude component is positive
            let pivot = v.iamax();
            if v[pivot] < 0.0 {
                v.neg_mut();
            }
            eigenvectors.set_column(dst, &v);
        }

        let max = eigenvalues[0];
        for (index, &eigenvalue) in eigenvalues.iter().enumerate() {
            if !(max > 0.0) || eigenvalue <= SINGULAR_RATIO * max {
                return Err(Error::SingularCovariance {
                    index,
                    eigenvalue,
                    max,
                });
            }
        }

        let mut whitener = eigenvectors.transpose();
        for (i, mut row) in whitener.row_iter_mut().enumerate() {
            row /= eigenvalues[i].sqrt();
        }

        Ok(BackgroundStats {
            mean,
            covariance,
            eigenvectors,
            eigenvalues,
            regularization,
            whitener,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance including the ridge.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Columns are eigenvectors, ordered by descending eigenvalue.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// The `D^{-1/2} U^T` matrix.
    pub fn whitener(&self) -> &DMatrix<f64> {
        &self.whitener
    }

    /// `||U diag(D) U^T - cov||_F / ||cov||_F`.
    pub fn reconstruction_error(&self) -> f64 {
        let rebuilt = &self.eigenvectors
            * DMatrix::from_diagonal(&self.eigenvalues)
            * self.eigenvectors.transpose();
        (rebuilt - &self.covariance).norm() / self.covariance.norm()
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// `D^{-1/2} U^T (x - mu)`, without normalization.
    pub fn whiten_centered(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        Ok(&self.whitener * (x - &self.mean))
    }

    /// Whitens `x`; with `normalize` also returns the unit-norm version.
    pub fn whiten(&self, x: &DVector<f64>, normalize: bool) -> Result<WhitenedInstance> {
        let hat = self.whiten_centered(x)?;
        let unit = if normalize {
            Some(unit_or_zero_error(&hat)?)
        } else {
            None
        };
        Ok(WhitenedInstance { hat, unit })
    }

    /// Whitens a signature direction: `D^{-1/2} U^T s`, no mean subtraction.
    pub fn whiten_direction(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(s.len())?;
        Ok(&self.whitener * s)
    }

    /// Maps a whitened unit signature back to the original space:
    /// `t = U D^{1/2} s_white`, returned as `t / ||t||`.
    pub fn unwhiten_signature(&self, whitened: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(whitened.len())?;
        let norm = whitened.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "whitened signature must have unit norm, got {norm}"
            )));
        }
        let scaled = whitened.component_mul(&self.eigenvalues.map(f64::sqrt));
        let t = &self.eigenvectors * scaled;
        let t_norm = t.norm();
        Ok(t / t_norm)
    }
}

pub(crate) fn unit_or_zero_error(v: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = v.norm();
    if norm < ZERO_NORM {
        return Err(Error::ZeroVector { norm });
    }
    Ok(v / norm)
}
