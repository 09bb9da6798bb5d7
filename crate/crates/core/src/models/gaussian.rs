use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::contracts::{ConditionalModel, DataDescriptor, DataRule, ModelDims};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, gauss_legendre};
use crate::types::{DataSample, PhiVector, ThetaVector};

const HERMITE_NODES: usize = 40;
const COVER_NODES: usize = 200;
const COVER_SDS: f64 = 12.0;

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and positive, got {v}")))
    }
}

fn ln_normal(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

fn events(data: &DataSample) -> &[f64] {
    data.attributes().expect("Gaussian models take attribute data").as_slice()
}

/// Rule for one scalar observation `A ~ N(mu, sigma^2)` with `mu` ranging
/// over `centers`: Gauss–Hermite for a single center, Gauss–Legendre over a
/// covering interval otherwise. Weights are with respect to `dA`.
fn scalar_rule(centers: &[f64], sigma: f64) -> DataRule {
    let wrap = |x: f64| DataSample::Attributes(DMatrix::from_element(1, 1, x));
    let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        let rule = gauss_hermite(HERMITE_NODES);
        let scale = std::f64::consts::SQRT_2 * sigma;
        let nodes = rule.nodes.iter().map(|&x| wrap(lo + scale * x)).collect();
        let weights = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| scale * (w.ln() + x * x).exp()).collect();
        DataRule { nodes, weights }
    } else {
        let rule = gauss_legendre(COVER_NODES, lo - COVER_SDS * sigma, hi + COVER_SDS * sigma);
        DataRule { nodes: rule.nodes.iter().map(|&x| wrap(x)).collect(), weights: rule.weights }
    }
}

/// `N` list-mode events `A_n = theta + phi + eps_n`, `eps_n ~ N(0, sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLocation {
    n_obs: usize,
    sigma: f64,
}

impl GaussianLocation {
    pub fn new(n_obs: usize, sigma: f64) -> Result<Self> {
        if n_obs == 0 {
            return Err(Error::InvalidParameter("n_obs must be at least 1".into()));
        }
        Ok(Self { n_obs, sigma: positive("sigma", sigma)? })
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn residual_sum(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> f64 {
        let mu = theta[0] + phi[0];
        events(data).iter().map(|a| a - mu).sum()
    }
}

impl ConditionalModel for GaussianLocation {
    fn dims(&self) -> ModelDims {
        ModelDims { theta: 1, phi: 1, data: DataDescriptor::Attributes { attributes: 1, events: self.n_obs } }
    }

    fn log_density(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> f64 {
        let mu = theta[0] + phi[0];
        events(data).iter().map(|&a| ln_normal(a, mu, self.sigma)).sum()
    }

    fn score_theta(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64> {
        DVector::from_element(1, self.residual_sum(data, phi, theta) / (self.sigma * self.sigma))
    }

    fn score_phi(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64> {
        self.score_theta(data, phi, theta)
    }

    fn hessian_phi_density(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> Option<DMatrix<f64>> {
        let s2 = self.sigma * self.sigma;
        let u = self.residual_sum(data, phi, theta) / s2;
        let p = self.log_density(data, phi, theta).exp();
        Some(DMatrix::from_element(1, 1, p * (u * u - self.n_obs as f64 / s2)))
    }

    fn sample(&self, phi: &PhiVector, theta: &ThetaVector, rng: &mut dyn RngCore) -> Result<DataSample> {
        let mu = theta[0] + phi[0];
        let a = DMatrix::from_fn(1, self.n_obs, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            mu + self.sigma * z
        });
        Ok(DataSample::Attributes(a))
    }

    fn data_rule(&self, phis: &[PhiVector], theta: &ThetaVector) -> Option<DataRule> {
        if self.n_obs != 1 || phis.is_empty() {
            return None;
        }
        let centers: Vec<f64> = phis.iter().map(|p| theta[0] + p[0]).collect();
        Some(scalar_rule(&centers, self.sigma))
    }
}

/// A single observation `A ~ N(theta, sigma^2)` that ignores its nuisance
/// parameter. Every nuisance correction vanishes for this model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiFreeGaussian {
    sigma: f64,
}

impl PhiFreeGaussian {
    pub fn new(sigma: f64) -> Result<Self> {
        Ok(Self { sigma: positive("sigma", sigma)? })
    }
}

impl ConditionalModel for PhiFreeGaussian {
    fn dims(&self) -> ModelDims {
        ModelDims { theta: 1, phi: 1, data: DataDescriptor::Attributes { attributes: 1, events: 1 } }
    }

    fn log_density(&self, data: &DataSample, _phi: &PhiVector, theta: &ThetaVector) -> f64 {
        ln_normal(events(data)[0], theta[0], self.sigma)
    }

    fn score_theta(&self, data: &DataSample, _phi: &PhiVector, theta: &ThetaVector) -> DVector<f64> {
        DVector::from_element(1, (events(data)[0] - theta[0]) / (self.sigma * self.sigma))
    }

    fn score_phi(&self, _data: &DataSample, _phi: &PhiVector, _theta: &ThetaVector) -> DVector<f64> {
        DVector::zeros(1)
    }

    fn hessian_phi_density(&self, _data: &DataSample, _phi: &PhiVector, _theta: &ThetaVector) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(1, 1))
    }

    fn sample(&self, _phi: &PhiVector, theta: &ThetaVector, rng: &mut dyn RngCore) -> Result<DataSample> {
        let z: f64 = StandardNormal.sample(rng);
        Ok(DataSample::Attributes(DMatrix::from_element(1, 1, theta[0] + self.sigma * z)))
    }

    fn data_rule(&self, _phis: &[PhiVector], theta: &ThetaVector) -> Option<DataRule> {
        Some(scalar_rule(&[theta[0]], self.sigma))
    }
}

/// A single observation `A ~ N(phi, sigma^2)`: the data sees `theta` only
/// through a signal-dependent nuisance prior.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceOnlyGaussian {
    sigma: f64,
}

impl NuisanceOnlyGaussian {
    pub fn new(sigma: f64) -> Result<Self> {
        Ok(Self { sigma: positive("sigma", sigma)? })
    }
}

impl ConditionalModel for NuisanceOnlyGaussian {
    fn dims(&self) -> ModelDims {
        ModelDims { theta: 1, phi: 1, data: DataDescriptor::Attributes { attributes: 1, events: 1 } }
    }

    fn log_density(&self, data: &DataSample, phi: &PhiVector, _theta: &ThetaVector) -> f64 {
        ln_normal(events(data)[0], phi[0], self.sigma)
    }

    fn score_theta(&self, _data: &DataSample, _phi: &PhiVector, _theta: &ThetaVector) -> DVector<f64> {
        DVector::zeros(1)
    }

    fn score_phi(&self, data: &DataSample, phi: &PhiVector, _theta: &ThetaVector) -> DVector<f64> {
        DVector::from_element(1, (events(data)[0] - phi[0]) / (self.sigma * self.sigma))
    }

    fn hessian_phi_density(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> Option<DMatrix<f64>> {
        let s2 = self.sigma * self.sigma;
        let u = (events(data)[0] - phi[0]) / s2;
        let p = self.log_density(data, phi, theta).exp();
        Some(DMatrix::from_element(1, 1, p * (u * u - 1.0 / s2)))
    }

    fn sample(&self, phi: &PhiVector, _theta: &ThetaVector, rng: &mut dyn RngCore) -> Result<DataSample> {
        let z: f64 = StandardNormal.sample(rng);
        Ok(DataSample::Attributes(DMatrix::from_element(1, 1, phi[0] + self.sigma * z)))
    }

    fn data_rule(&self, phis: &[PhiVector], _theta: &ThetaVector) -> Option<DataRule> {
        if phis.is_empty() {
            return None;
        }
        let centers: Vec<f64> = phis.iter().map(|p| p[0]).collect();
        Some(scalar_rule(&centers, self.sigma))
    }
}
