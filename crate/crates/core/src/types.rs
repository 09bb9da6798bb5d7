//! Parameter, data and matrix containers shared by every estimator.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

macro_rules! param_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DVector<f64>);

        impl $name {
            /// Fails when the vector is empty or holds a non-finite entry.
            pub fn new(values: DVector<f64>) -> Result<Self> {
                if values.is_empty() {
                    return Err(Error::Dimension(concat!(stringify!($name), " must be non-empty").into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(stringify!($name).into()));
                }
                Ok(Self(values))
            }

            pub fn from_slice(values: &[f64]) -> Result<Self> {
                Self::new(DVector::from_column_slice(values))
            }

            pub fn scalar(value: f64) -> Self {
                Self(DVector::from_element(1, value))
            }

            /// Wraps a vector without validation; used for finite-difference
            /// stencils around an already validated point.
            pub(crate) fn from_raw(values: DVector<f64>) -> Self {
                Self(values)
            }

            pub fn into_inner(self) -> DVector<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;

            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }
    };
}

param_vector!(
    /// Parameters of interest.
    ThetaVector
);
param_vector!(
    /// Nuisance parameters.
    PhiVector
);

/// One realization of the data.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSample {
    /// List-mode data: one column per detected event, one row per attribute.
    Attributes(DMatrix<f64>),
    /// Binned counts.
    Counts(Vec<u64>),
}

impl DataSample {
    pub fn attributes(&self) -> Option<&DMatrix<f64>> {
        match self {
            DataSample::Attributes(a) => Some(a),
            DataSample::Counts(_) => None,
        }
    }

    pub fn counts(&self) -> Option<&[u64]> {
        match self {
            DataSample::Counts(g) => Some(g),
            DataSample::Attributes(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DataSample::Attributes(a) if a.iter().any(|v| !v.is_finite()) => {
                Err(Error::NonFinite("attribute data".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Which parameter block a matrix describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockTag {
    Theta,
    Phi,
    Joint,
}

impl BlockTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockTag::Theta => "theta",
            BlockTag::Phi => "phi",
            BlockTag::Joint => "joint",
        }
    }
}

/// Relative symmetry tolerance enforced on construction.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A square symmetric matrix tagged with its parameter block.
///
/// Positive semidefiniteness is not enforced on construction: differences of
/// estimates are legitimately indefinite. [`FisherMatrix::check_invariants`]
/// applies the PSD requirement, skipping matrices flagged as outputs of an
/// asymptotic approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    entries: DMatrix<f64>,
    tag: BlockTag,
    approximation: bool,
}

impl FisherMatrix {
    pub fn new(entries: DMatrix<f64>, tag: BlockTag) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "Fisher matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Fisher matrix entries".into()));
        }
        crate::matrix::ensure_symmetric(&entries, SYMMETRY_TOL)?;
        Ok(Self { entries, tag, approximation: false })
    }

    /// Output of a truncated expansion; exempt from the PSD invariant.
    pub fn approximation(entries: DMatrix<f64>, tag: BlockTag) -> Result<Self> {
        let mut m = Self::new(entries, tag)?;
        m.approximation = true;
        Ok(m)
    }

    pub fn zeros(dim: usize, tag: BlockTag) -> Self {
        Self { entries: DMatrix::zeros(dim, dim), tag, approximation: false }
    }

    pub fn identity(dim: usize, tag: BlockTag) -> Self {
        Self { entries: DMatrix::identity(dim, dim), tag, approximation: false }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn tag(&self) -> BlockTag {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_approximation(&self) -> bool {
        self.approximation
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Default PSD slack: `1e-8 * |trace|`.
    pub fn default_psd_tol(&self) -> f64 {
        1e-8 * self.trace().abs()
    }

    /// Checks symmetry and, unless this is an approximation output,
    /// positive semidefiniteness at `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<bool> {
        crate::matrix::ensure_symmetric(&self.entries, SYMMETRY_TOL)?;
        if self.approximation {
            return Ok(true);
        }
        Ok(crate::matrix::psd_check(self, tol)?.is_psd)
    }
}

/// A Monte Carlo (or quadrature) estimate of a square symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub mean: FisherMatrix,
    /// Per-entry standard error of `mean`.
    pub stderr: DMatrix<f64>,
    pub n_samples: usize,
    /// Empirical mean of the score vector whose outer products were averaged.
    pub score_mean_diagnostic: DVector<f64>,
    /// Standard error of `score_mean_diagnostic`.
    pub score_mean_stderr: DVector<f64>,
}

impl MatrixEstimate {
    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().cloned().fold(0.0, f64::max)
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    /// An exact value with zero standard error.
    pub fn exact(mean: FisherMatrix, n_samples: usize) -> Self {
        let d = mean.dim();
        Self {
            mean,
            stderr: DMatrix::zeros(d, d),
            n_samples,
            score_mean_diagnostic: DVector::zeros(d),
            score_mean_stderr: DVector::zeros(d),
        }
    }

    /// `self + other` for independent estimates; standard errors add in quadrature.
    pub fn add_independent(&self, other: &MatrixEstimate) -> Result<MatrixEstimate> {
        self.combine(other, 1.0)
    }

    /// `self - other` for independent estimates.
    pub fn sub_independent(&self, other: &MatrixEstimate) -> Result<MatrixEstimate> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &MatrixEstimate, sign: f64) -> Result<MatrixEstimate> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("{} vs {}", self.dim(), other.dim())));
        }
        let mean = self.mean.entries() + other.mean.entries() * sign;
        let stderr = self.stderr.zip_map(&other.stderr, |a, b| a.hypot(b));
        Ok(MatrixEstimate {
            mean: FisherMatrix::new(mean, self.mean.tag())?,
            stderr,
            n_samples: self.n_samples.min(other.n_samples),
            score_mean_diagnostic: self.score_mean_diagnostic.clone(),
            score_mean_stderr: self.score_mean_stderr.clone(),
        })
    }
}

/// Estimate of a rectangular (off-diagonal block or residual) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimate {
    pub mean: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
    pub n_samples: usize,
}

impl BlockEstimate {
    pub fn max_abs(&self) -> f64 {
        self.mean.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().cloned().fold(0.0, f64::max)
    }

    /// True when every entry lies within `k` standard errors of zero.
    pub fn within_sigma_of_zero(&self, k: f64) -> bool {
        self.mean.iter().zip(self.stderr.iter()).all(|(m, s)| m.abs() <= k * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_reject_non_finite() {
        assert!(ThetaVector::from_slice(&[f64::NAN]).is_err());
        assert!(PhiVector::from_slice(&[]).is_err());
        assert_eq!(ThetaVector::scalar(2.0)[0], 2.0);
    }

    #[test]
    fn fisher_matrix_requires_symmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(FisherMatrix::new(m, BlockTag::Theta), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn approximation_is_exempt_from_psd() {
        let m = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let plain = FisherMatrix::new(m.clone(), BlockTag::Theta).unwrap();
        assert!(!plain.check_invariants(1e-8).unwrap());
        let approx = FisherMatrix::approximation(m, BlockTag::Theta).unwrap();
        assert!(approx.is_approximation());
        assert!(approx.check_invariants(1e-8).unwrap());
    }

    #[test]
    fn count_payload_validates() {
        assert!(DataSample::Counts(vec![0, 3]).validate().is_ok());
        let bad = DataSample::Attributes(DMatrix::from_element(1, 1, f64::INFINITY));
        assert!(bad.validate().is_err());
    }
}
