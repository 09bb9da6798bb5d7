use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Poisson};
use statrs::function::factorial::ln_factorial;

use crate::contracts::{ConditionalModel, DataDescriptor, DataRule, ModelDims};
use crate::error::{Error, Result};
use crate::types::{DataSample, PhiVector, ThetaVector};

/// Enumeration rules above this many count vectors are not offered.
pub const MAX_ENUMERATED_STATES: usize = 2_000_000;
/// Below this transmission the density Hessian switches to the
/// `t^G exp(-C t)` polynomial form, which stays finite at the closed door.
const SMALL_TRANSMISSION: f64 = 1e-150;

/// A point source at position `theta` seen through a swinging door.
///
/// Bin `k` (detector position `x_k`) records `g_k ~ Poisson(I t(phi) b_k(theta))`
/// with `b_k = exp(-(x_k - theta)^2 / 2 w^2)` and door transmission
/// `t(phi) = cos^2(phi)`. The door is closed at `phi = pi/2`, where no light
/// arrives and the conditional FIM vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonDoor {
    intensity: f64,
    positions: Vec<f64>,
    width: f64,
}

impl Default for PoissonDoor {
    fn default() -> Self {
        Self::evenly_spaced(100.0, 5, -2.0, 2.0, 1.0).expect("default door parameters are valid")
    }
}

impl PoissonDoor {
    pub fn new(intensity: f64, positions: Vec<f64>, width: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity > 0.0) {
            return Err(Error::InvalidParameter(format!("intensity must be positive, got {intensity}")));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidParameter(format!("width must be positive, got {width}")));
        }
        if positions.is_empty() || positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("detector positions must be finite and non-empty".into()));
        }
        Ok(Self { intensity, positions, width })
    }

    /// `bins` detectors evenly spaced on `[lo, hi]`.
    pub fn evenly_spaced(intensity: f64, bins: usize, lo: f64, hi: f64, width: f64) -> Result<Self> {
        let positions = match bins {
            0 => return Err(Error::InvalidParameter("need at least one detector".into())),
            1 => vec![0.5 * (lo + hi)],
            _ => (0..bins).map(|k| lo + (hi - lo) * k as f64 / (bins - 1) as f64).collect(),
        };
        Self::new(intensity, positions, width)
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// `t(phi) = cos^2 phi`, written as `sin^2(phi - pi/2)` so the closed
    /// door gives an exact zero.
    pub fn transmission(phi: f64) -> f64 {
        let d = phi - FRAC_PI_2;
        let s = d.sin();
        s * s
    }

    fn transmission_derivatives(phi: f64) -> (f64, f64, f64) {
        let d = phi - FRAC_PI_2;
        let s = d.sin();
        (s * s, (2.0 * d).sin(), 2.0 * (2.0 * d).cos())
    }

    /// Source-only rates `c_k = I b_k(theta)`.
    pub fn source_rates(&self, theta: f64) -> Vec<f64> {
        let w2 = self.width * self.width;
        self.positions.iter().map(|x| self.intensity * (-(x - theta).powi(2) / (2.0 * w2)).exp()).collect()
    }

    /// `d ln b_k / d theta`.
    pub fn rate_log_slopes(&self, theta: f64) -> Vec<f64> {
        let w2 = self.width * self.width;
        self.positions.iter().map(|x| (x - theta) / w2).collect()
    }

    fn counts<'a>(&self, data: &'a DataSample) -> &'a [u64] {
        let g = data.counts().expect("the door model takes count data");
        assert_eq!(g.len(), self.positions.len(), "count vector length must match detector count");
        g
    }

    /// `ln(prod_k c_k^{g_k} / g_k!)`.
    fn ln_amplitude(g: &[u64], c: &[f64]) -> f64 {
        g.iter().zip(c).map(|(&gk, ck)| if gk == 0 { 0.0 } else { gk as f64 * ck.ln() - ln_factorial(gk) }).sum()
    }
}

impl ConditionalModel for PoissonDoor {
    fn dims(&self) -> ModelDims {
        ModelDims { theta: 1, phi: 1, data: DataDescriptor::Counts { bins: self.positions.len() } }
    }

    fn log_density(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> f64 {
        let g = self.counts(data);
        let t = Self::transmission(phi[0]);
        let c = self.source_rates(theta[0]);
        let total: u64 = g.iter().sum();
        let big_c: f64 = c.iter().sum();
        if t == 0.0 {
            return if total == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        Self::ln_amplitude(g, &c) + total as f64 * t.ln() - big_c * t
    }

    fn score_theta(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64> {
        let g = self.counts(data);
        let t = Self::transmission(phi[0]);
        let c = self.source_rates(theta[0]);
        let u = self.rate_log_slopes(theta[0]);
        let s = g.iter().zip(c.iter().zip(&u)).map(|(&gk, (ck, uk))| (gk as f64 - ck * t) * uk).sum();
        DVector::from_element(1, s)
    }

    fn score_phi(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64> {
        let g = self.counts(data);
        let (t, dt, _) = Self::transmission_derivatives(phi[0]);
        let big_c: f64 = self.source_rates(theta[0]).iter().sum();
        let total: u64 = g.iter().sum();
        let data_term = if total == 0 { 0.0 } else { total as f64 * dt / t };
        DVector::from_element(1, data_term - big_c * dt)
    }

    fn hessian_phi_density(&self, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> Option<DMatrix<f64>> {
        let g = self.counts(data);
        let (t, dt, ddt) = Self::transmission_derivatives(phi[0]);
        let c = self.source_rates(theta[0]);
        let big_c: f64 = c.iter().sum();
        let total = g.iter().sum::<u64>() as f64;
        let h = if t > SMALL_TRANSMISSION {
            let p = self.log_density(data, phi, theta).exp();
            let dl = (total / t - big_c) * dt;
            let ddl = (total / t - big_c) * ddt - total * dt * dt / (t * t);
            p * (dl * dl + ddl)
        } else {
            // P = A t^G e^{-Ct}; only G <= 2 survives two derivatives at t = 0
            let pow = |m: f64| if m == 0.0 { 1.0 } else { t.powf(m) };
            let f1 = if total >= 1.0 { total * pow(total - 1.0) } else { 0.0 } - big_c * pow(total);
            let f2 = if total >= 2.0 { total * (total - 1.0) * pow(total - 2.0) } else { 0.0 }
                - if total >= 1.0 { 2.0 * big_c * total * pow(total - 1.0) } else { 0.0 }
                + big_c * big_c * pow(total);
            let amp = (Self::ln_amplitude(g, &c) - big_c * t).exp();
            amp * (f2 * dt * dt + f1 * ddt)
        };
        Some(DMatrix::from_element(1, 1, h))
    }

    fn sample(&self, phi: &PhiVector, theta: &ThetaVector, rng: &mut dyn RngCore) -> Result<DataSample> {
        let t = Self::transmission(phi[0]);
        let counts = self
            .source_rates(theta[0])
            .into_iter()
            .map(|ck| {
                let lambda = ck * t;
                if lambda <= 0.0 {
                    return Ok(0);
                }
                let dist =
                    Poisson::new(lambda).map_err(|e| Error::InvalidParameter(format!("Poisson rate {lambda}: {e}")))?;
                Ok(dist.sample(rng) as u64)
            })
            .collect::<Result<Vec<u64>>>()?;
        Ok(DataSample::Counts(counts))
    }

    /// Enumerates every count vector with `g_k <= ceil(mu_k + 12 sqrt(mu_k)) + 2`,
    /// `mu_k` the largest bin mean over `phis`. The `+2` keeps the states on
    /// which the first two nuisance derivatives of the pmf are supported.
    fn data_rule(&self, phis: &[PhiVector], theta: &ThetaVector) -> Option<DataRule> {
        if phis.is_empty() {
            return None;
        }
        let t_max = phis.iter().map(|p| Self::transmission(p[0])).fold(0.0, f64::max);
        let limits: Vec<u64> = self
            .source_rates(theta[0])
            .iter()
            .map(|ck| {
                let mu = ck * t_max;
                (mu + 12.0 * mu.sqrt()).ceil() as u64 + 2
            })
            .collect();
        let mut states: usize = 1;
        for l in &limits {
            states = states.checked_mul(*l as usize + 1)?;
            if states > MAX_ENUMERATED_STATES {
                return None;
            }
        }
        let mut nodes = Vec::with_capacity(states);
        let mut current = vec![0u64; limits.len()];
        'outer: loop {
            nodes.push(DataSample::Counts(current.clone()));
            for (k, limit) in limits.iter().enumerate() {
                if current[k] < *limit {
                    current[k] += 1;
                    continue 'outer;
                }
                current[k] = 0;
            }
            break;
        }
        Some(DataRule { weights: vec![1.0; nodes.len()], nodes })
    }
}
