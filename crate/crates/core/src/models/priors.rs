use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::contracts::{NuisancePrior, Support, ThetaPrior};
use crate::error::{Error, Result};
use crate::types::{PhiVector, ThetaVector};

/// Smallest allowed theta-prior standard deviation; below it the prior
/// information `1/s^2` is treated as unbounded.
pub const MIN_THETA_PRIOR_SD: f64 = 1e-6;

fn check_sd(sd: &DVector<f64>) -> Result<()> {
    if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidParameter(format!("standard deviations must be positive, got {:?}", sd.as_slice())));
    }
    Ok(())
}

/// `phi | theta ~ N(offset + coupling * theta, diag(sd^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNuisancePrior {
    offset: DVector<f64>,
    coupling: DMatrix<f64>,
    sd: DVector<f64>,
}

impl GaussianNuisancePrior {
    pub fn new(offset: DVector<f64>, coupling: DMatrix<f64>, sd: DVector<f64>) -> Result<Self> {
        check_sd(&sd)?;
        if offset.len() != sd.len() || coupling.nrows() != sd.len() || coupling.ncols() == 0 {
            return Err(Error::Dimension("offset, coupling rows and sd must agree".into()));
        }
        Ok(Self { offset, coupling, sd })
    }

    /// Scalar `N(mean, sd^2)` that ignores a scalar theta.
    pub fn independent(mean: f64, sd: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::zeros(1, 1), DVector::from_element(1, sd))
    }

    /// Scalar `N(a * theta, tau^2)`.
    pub fn dependent(a: f64, tau: f64) -> Result<Self> {
        Self::new(DVector::zeros(1), DMatrix::from_element(1, 1, a), DVector::from_element(1, tau))
    }

    pub fn mean(&self, theta: &ThetaVector) -> DVector<f64> {
        &self.offset + &self.coupling * &**theta
    }

    pub fn sd(&self) -> &DVector<f64> {
        &self.sd
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.sd.map(|s| s * s))
    }

    fn standardized(&self, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64> {
        (&**phi - self.mean(theta)).component_div(&self.sd.map(|s| s * s))
    }
}

impl NuisancePrior for GaussianNuisancePrior {
    fn dim(&self) -> usize {
        self.sd.len()
    }

    fn log_density(&self, phi: &PhiVector, theta: &ThetaVector) -> f64 {
        let mean = self.mean(theta);
        (0..self.sd.len())
            .map(|i| {
                let z = (phi[i] - mean[i]) / self.sd[i];
                -0.5 * z * z - self.sd[i].ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    fn score_theta(&self, phi: &PhiVector, theta: &ThetaVector) -> DVector<f64> {
        if !self.depends_on_theta() {
            return DVector::zeros(self.coupling.ncols());
        }
        self.coupling.transpose() * self.standardized(phi, theta)
    }

    fn score_phi(&self, phi: &PhiVector, theta: &ThetaVector) -> Option<DVector<f64>> {
        Some(-self.standardized(phi, theta))
    }

    fn sample(&self, theta: &ThetaVector, rng: &mut dyn RngCore) -> PhiVector {
        let mean = self.mean(theta);
        let v = DVector::from_fn(self.sd.len(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            mean[i] + self.sd[i] * z
        });
        PhiVector::from_raw(v)
    }

    fn support(&self, theta: &ThetaVector) -> Support {
        Support::Unbounded { mean: self.mean(theta), sd: self.sd.clone() }
    }

    fn depends_on_theta(&self) -> bool {
        self.coupling.iter().any(|c| *c != 0.0)
    }
}

/// All prior mass at a single nuisance value.
///
/// `log_density` is taken with respect to counting measure: `0` at the
/// point, `-inf` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassPrior {
    point: PhiVector,
    theta_dim: usize,
}

impl PointMassPrior {
    pub fn new(point: PhiVector, theta_dim: usize) -> Self {
        Self { point, theta_dim }
    }
}

impl NuisancePrior for PointMassPrior {
    fn dim(&self) -> usize {
        self.point.len()
    }

    fn log_density(&self, phi: &PhiVector, _theta: &ThetaVector) -> f64 {
        if *phi == self.point {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn score_theta(&self, _phi: &PhiVector, _theta: &ThetaVector) -> DVector<f64> {
        DVector::zeros(self.theta_dim)
    }

    fn score_phi(&self, _phi: &PhiVector, _theta: &ThetaVector) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.point.len()))
    }

    fn sample(&self, _theta: &ThetaVector, _rng: &mut dyn RngCore) -> PhiVector {
        self.point.clone()
    }

    fn support(&self, _theta: &ThetaVector) -> Support {
        Support::Point(self.point.clone())
    }

    fn depends_on_theta(&self) -> bool {
        false
    }
}

/// Uniform on a hyper-rectangle, independent of theta.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformNuisancePrior {
    lo: DVector<f64>,
    hi: DVector<f64>,
    theta_dim: usize,
}

impl UniformNuisancePrior {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>, theta_dim: usize) -> Result<Self> {
        if lo.len() != hi.len()
            || lo.is_empty()
            || lo.iter().zip(hi.iter()).any(|(l, h)| l.is_nan() || h.is_nan() || l >= h)
        {
            return Err(Error::InvalidParameter("uniform prior needs lo < hi on every axis".into()));
        }
        Ok(Self { lo, hi, theta_dim })
    }

    fn contains(&self, phi: &PhiVector) -> bool {
        phi.iter().zip(self.lo.iter().zip(self.hi.iter())).all(|(p, (l, h))| p >= l && p <= h)
    }
}

impl NuisancePrior for UniformNuisancePrior {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn log_density(&self, phi: &PhiVector, _theta: &ThetaVector) -> f64 {
        if self.contains(phi) {
            -(&self.hi - &self.lo).iter().map(|w| w.ln()).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn score_theta(&self, _phi: &PhiVector, _theta: &ThetaVector) -> DVector<f64> {
        DVector::zeros(self.theta_dim)
    }

    fn score_phi(&self, _phi: &PhiVector, _theta: &ThetaVector) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.lo.len()))
    }

    fn sample(&self, _theta: &ThetaVector, rng: &mut dyn RngCore) -> PhiVector {
        let v = DVector::from_fn(self.lo.len(), |i, _| {
            Uniform::new_inclusive(self.lo[i], self.hi[i]).expect("validated bounds").sample(rng)
        });
        PhiVector::from_raw(v)
    }

    fn support(&self, _theta: &ThetaVector) -> Support {
        Support::Bounded { lo: self.lo.clone(), hi: self.hi.clone() }
    }

    fn depends_on_theta(&self) -> bool {
        false
    }
}

/// `theta ~ N(mean, diag(sd^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianThetaPrior {
    mean: DVector<f64>,
    sd: DVector<f64>,
}

impl GaussianThetaPrior {
    pub fn new(mean: DVector<f64>, sd: DVector<f64>) -> Result<Self> {
        check_sd(&sd)?;
        if sd.iter().any(|s| *s < MIN_THETA_PRIOR_SD) {
            return Err(Error::InvalidParameter(format!(
                "theta prior sd below {MIN_THETA_PRIOR_SD:e} has unbounded prior information"
            )));
        }
        if mean.len() != sd.len() {
            return Err(Error::Dimension("theta prior mean and sd differ in length".into()));
        }
        Ok(Self { mean, sd })
    }

    pub fn scalar(mean: f64, sd: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DVector::from_element(1, sd))
    }
}

impl ThetaPrior for GaussianThetaPrior {
    fn dim(&self) -> usize {
        self.sd.len()
    }

    fn log_density(&self, theta: &ThetaVector) -> f64 {
        (0..self.sd.len())
            .map(|i| {
                let z = (theta[i] - self.mean[i]) / self.sd[i];
                -0.5 * z * z - self.sd[i].ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    fn score(&self, theta: &ThetaVector) -> DVector<f64> {
        -(&**theta - &self.mean).component_div(&self.sd.map(|s| s * s))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> ThetaVector {
        let v = DVector::from_fn(self.sd.len(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            self.mean[i] + self.sd[i] * z
        });
        ThetaVector::from_raw(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{check_gradient, DEFAULT_STEP};
    use crate::quadrature::gauss_legendre;

    #[test]
    fn dependent_prior_scores_match_finite_differences() {
        let prior = GaussianNuisancePrior::dependent(2.0, 0.5).unwrap();
        let phi = PhiVector::scalar(0.3);
        let f = |t: &DVector<f64>| prior.log_density(&phi, &ThetaVector::from_raw(t.clone()));
        let g = |t: &DVector<f64>| prior.score_theta(&phi, &ThetaVector::from_raw(t.clone()));
        assert!(check_gradient(&f, &g, &DVector::from_element(1, 0.4), DEFAULT_STEP).unwrap() < 1e-6);

        let theta = ThetaVector::scalar(0.4);
        let f = |p: &DVector<f64>| prior.log_density(&PhiVector::from_raw(p.clone()), &theta);
        let g = |p: &DVector<f64>| prior.score_phi(&PhiVector::from_raw(p.clone()), &theta).unwrap();
        assert!(check_gradient(&f, &g, &DVector::from_element(1, 0.3), DEFAULT_STEP).unwrap() < 1e-6);
    }

    #[test]
    fn independent_prior_has_exactly_zero_theta_score() {
        let prior = GaussianNuisancePrior::independent(0.0, 1.0).unwrap();
        assert!(!prior.depends_on_theta());
        let s = prior.score_theta(&PhiVector::scalar(1.3), &ThetaVector::scalar(-0.7));
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn gaussian_prior_normalizes() {
        let prior = GaussianNuisancePrior::dependent(1.5, 0.7).unwrap();
        let theta = ThetaVector::scalar(0.6);
        let m = 0.9;
        let rule = gauss_legendre(64, m - 10.0 * 0.7, m + 10.0 * 0.7);
        let total = rule.integrate(|x| prior.log_density(&PhiVector::scalar(x), &theta).exp());
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn theta_prior_score_and_validation() {
        let tp = GaussianThetaPrior::scalar(0.5, 2.0).unwrap();
        let f = |t: &DVector<f64>| tp.log_density(&ThetaVector::from_raw(t.clone()));
        let g = |t: &DVector<f64>| tp.score(&ThetaVector::from_raw(t.clone()));
        assert!(check_gradient(&f, &g, &DVector::from_element(1, -1.2), DEFAULT_STEP).unwrap() < 1e-6);
        assert!(GaussianThetaPrior::scalar(0.0, 1e-9).is_err());
        assert!(GaussianThetaPrior::scalar(0.0, 0.0).is_err());
    }

    #[test]
    fn uniform_prior_support() {
        let u = UniformNuisancePrior::new(DVector::from_element(1, -1.0), DVector::from_element(1, 3.0), 1).unwrap();
        let theta = ThetaVector::scalar(0.0);
        assert!((u.log_density(&PhiVector::scalar(0.0), &theta) + 4f64.ln()).abs() < 1e-15);
        assert_eq!(u.log_density(&PhiVector::scalar(3.5), &theta), f64::NEG_INFINITY);
        assert!(UniformNuisancePrior::new(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0), 1).is_err());
    }
}
