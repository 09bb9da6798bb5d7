//! Contracts implemented by data models and priors.
//!
//! All methods take `&self` and must be safe to call concurrently.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::Result;
use crate::types::{DataSample, PhiVector, ThetaVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataDescriptor {
    /// `attributes x events` real matrix.
    Attributes { attributes: usize, events: usize },
    /// Nonnegative integer counts in `bins` bins.
    Counts { bins: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub theta: usize,
    pub phi: usize,
    pub data: DataDescriptor,
}

/// A deterministic rule over the data space: `int f(A) dA ~ sum_i w_i f(A_i)`
/// with respect to Lebesgue measure (continuous data) or counting measure
/// (count data).
#[derive(Debug, Clone)]
pub struct DataRule {
    pub nodes: Vec<DataSample>,
    pub weights: Vec<f64>,
}

/// The conditional data model `pr(A | phi, theta)`.
pub trait ConditionalModel: Send + Sync {
    fn dims(&self) -> ModelDims;

    /// `ln pr(A | phi, theta)`; `-inf` where the density vanishes.
    fn log_density(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> f64;

    /// Gradient of the log-density in `theta`. Must stay finite for data that
    /// has zero probability only through a `theta`-free factor.
    fn score_theta(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64>;

    /// Gradient of the log-density in `phi`.
    fn score_phi(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64>;

    /// Hessian of the density itself (not its log) in `phi`. `None` requests
    /// central finite differences.
    fn hessian_phi_density(&self, _data: &DataSample, _phi: &PhiVector, _theta: &ThetaVector) -> Option<DMatrix<f64>> {
        None
    }

    fn sample(&self, phi: &PhiVector, theta: &ThetaVector, rng: &mut dyn RngCore) -> Result<DataSample>;

    /// A quadrature or enumeration rule covering the data distribution for
    /// every nuisance value in `phis`, or `None` when the data space is too
    /// large for deterministic integration.
    fn data_rule(&self, _phis: &[PhiVector], _theta: &ThetaVector) -> Option<DataRule> {
        None
    }
}

/// Where a nuisance prior puts its mass.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// All mass at one point.
    Point(PhiVector),
    /// Unbounded support, summarized by per-axis mean and standard deviation
    /// for grid truncation.
    Unbounded { mean: DVector<f64>, sd: DVector<f64> },
    /// Hyper-rectangle `[lo, hi]`.
    Bounded { lo: DVector<f64>, hi: DVector<f64> },
}

impl Support {
    pub fn dim(&self) -> usize {
        match self {
            Support::Point(p) => p.len(),
            Support::Unbounded { mean, .. } => mean.len(),
            Support::Bounded { lo, .. } => lo.len(),
        }
    }
}

/// The nuisance prior `pr(phi | theta)`.
pub trait NuisancePrior: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, phi: &PhiVector, theta: &ThetaVector) -> f64;

    /// `grad_theta ln pr(phi | theta)`; exactly zero when
    /// [`depends_on_theta`](Self::depends_on_theta) is false.
    fn score_theta(&self, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64>;

    /// `grad_phi ln pr(phi | theta)` when available in closed form.
    fn score_phi(&self, _phi: &PhiVector, _theta: &ThetaVector) -> Option<DVector<f64>> {
        None
    }

    fn sample(&self, theta: &ThetaVector, rng: &mut dyn RngCore) -> PhiVector;

    fn support(&self, theta: &ThetaVector) -> Support;

    fn depends_on_theta(&self) -> bool;
}

/// The prior `pr(theta)` on the parameters of interest.
pub trait ThetaPrior: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &ThetaVector) -> f64;

    /// `grad_theta ln pr(theta)`.
    fn score(&self, theta: &ThetaVector) -> DVector<f64>;

    fn sample(&self, rng: &mut dyn RngCore) -> ThetaVector;
}
