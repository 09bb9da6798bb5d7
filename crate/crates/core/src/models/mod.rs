//! Model zoo with closed-form Fisher information oracles.
//!
//! | id | data | nuisance prior | oracle |
//! |----|------|----------------|--------|
//! | `gaussian_location` | `N` events `~ N(theta + phi, sigma^2)` | `N(phi0, tau^2)` | `F(theta) = N / (sigma^2 + N tau^2)` |
//! | `dependent_prior` | one event `~ N(phi, sigma^2)` | `N(a theta, tau^2)` | `F(theta) = a^2 / (sigma^2 + tau^2)` |
//! | `poisson_door` | Poisson counts behind a door | `N(phi0, spread^2)` | quadrature over the total count |
//! | `gaussian_conjugate` | one event `~ N(theta + phi, sigma^2)` | `N(0, tau^2)`, `theta ~ N(0, s^2)` | Bayesian blocks |
//! | `phi_free_gaussian` | one event `~ N(theta, sigma^2)` | `N(0, tau^2)` | `F(theta) = 1 / sigma^2` |

mod door;
mod gaussian;
mod priors;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

pub use door::{PoissonDoor, MAX_ENUMERATED_STATES};
pub use gaussian::{GaussianLocation, NuisanceOnlyGaussian, PhiFreeGaussian};
pub use priors::{GaussianNuisancePrior, GaussianThetaPrior, PointMassPrior, UniformNuisancePrior, MIN_THETA_PRIOR_SD};

use crate::contracts::{ConditionalModel, NuisancePrior, ThetaPrior};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::rng::{stage, stream};
use crate::types::{DataSample, PhiVector, ThetaVector};

/// Named real parameters of a zoo model.
pub type ParamMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelId {
    GaussianLocation,
    DependentPrior,
    PoissonDoor,
    GaussianConjugate,
    PhiFreeGaussian,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [
        ModelId::GaussianLocation,
        ModelId::DependentPrior,
        ModelId::PoissonDoor,
        ModelId::GaussianConjugate,
        ModelId::PhiFreeGaussian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::GaussianLocation => "gaussian_location",
            ModelId::DependentPrior => "dependent_prior",
            ModelId::PoissonDoor => "poisson_door",
            ModelId::GaussianConjugate => "gaussian_conjugate",
            ModelId::PhiFreeGaussian => "phi_free_gaussian",
        }
    }

    /// Parameter names with their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            ModelId::GaussianLocation => &[("n_obs", 1.0), ("sigma", 1.0), ("tau", 1.0), ("phi0", 0.0)],
            ModelId::DependentPrior => &[("a", 1.0), ("sigma", 1.0), ("tau", 1.0)],
            ModelId::PoissonDoor => &[
                ("intensity", 100.0),
                ("bins", 5.0),
                ("x_min", -2.0),
                ("x_max", 2.0),
                ("width", 1.0),
                ("phi0", FRAC_PI_2),
                ("spread", 0.1),
            ],
            ModelId::GaussianConjugate => &[("sigma", 1.0), ("tau", 1.0), ("s", 1.0), ("theta_mean", 0.0)],
            ModelId::PhiFreeGaussian => &[("sigma", 1.0), ("tau", 1.0)],
        }
    }

    /// Fills in defaults and rejects unknown keys.
    pub fn resolve(self, params: &ParamMap) -> Result<ParamMap> {
        let defaults = self.defaults();
        for key in params.keys() {
            if !defaults.iter().any(|(k, _)| k == key) {
                return Err(Error::InvalidParameter(format!("model {} has no parameter `{key}`", self.as_str())));
            }
        }
        Ok(defaults.iter().map(|(k, v)| (k.to_string(), params.get(*k).copied().unwrap_or(*v))).collect())
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL.iter().copied().find(|m| m.as_str() == s).ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

fn count_param(params: &ParamMap, key: &str) -> Result<usize> {
    let v = params[key];
    if v.fract() != 0.0 || !(1.0..=1e6).contains(&v) {
        return Err(Error::InvalidParameter(format!("`{key}` must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

/// Prior with standard deviation `sd * scale` around `mean`; a zero scale
/// (or zero sd) collapses to a point mass.
pub fn scaled_gaussian_prior(mean: f64, sd: f64, scale: f64) -> Result<Box<dyn NuisancePrior>> {
    if !(scale.is_finite() && scale >= 0.0) || !(sd.is_finite() && sd >= 0.0) {
        return Err(Error::InvalidParameter(format!("prior scale {scale} and sd {sd} must be nonnegative")));
    }
    if sd * scale == 0.0 {
        Ok(Box::new(PointMassPrior::new(PhiVector::scalar(mean), 1)))
    } else {
        Ok(Box::new(GaussianNuisancePrior::independent(mean, sd * scale)?))
    }
}

/// A fully built zoo entry.
pub struct ZooModel {
    pub id: ModelId,
    pub params: ParamMap,
    pub model: Box<dyn ConditionalModel>,
    pub prior: Box<dyn NuisancePrior>,
    pub theta_prior: Option<Box<dyn ThetaPrior>>,
    /// Centre of the nuisance prior, used as the nominal value by the
    /// small-uncertainty expansion. `None` for signal-dependent priors.
    pub nominal_phi: Option<PhiVector>,
    /// Standard deviation of the nuisance prior, when it is a fixed scalar Gaussian.
    pub prior_sd: Option<f64>,
}

impl fmt::Debug for ZooModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZooModel").field("id", &self.id).field("params", &self.params).finish_non_exhaustive()
    }
}

impl ZooModel {
    pub fn build(id: ModelId, params: &ParamMap) -> Result<Self> {
        let p = id.resolve(params)?;
        let entry = match id {
            ModelId::GaussianLocation => {
                let (phi0, tau) = (p["phi0"], p["tau"]);
                ZooModel {
                    model: Box::new(GaussianLocation::new(count_param(&p, "n_obs")?, p["sigma"])?),
                    prior: scaled_gaussian_prior(phi0, tau, 1.0)?,
                    theta_prior: None,
                    nominal_phi: Some(PhiVector::scalar(phi0)),
                    prior_sd: Some(tau),
                    id,
                    params: p,
                }
            }
            ModelId::DependentPrior => ZooModel {
                model: Box::new(NuisanceOnlyGaussian::new(p["sigma"])?),
                prior: Box::new(GaussianNuisancePrior::dependent(p["a"], p["tau"])?),
                theta_prior: None,
                nominal_phi: None,
                prior_sd: None,
                id,
                params: p,
            },
            ModelId::PoissonDoor => {
                let (phi0, spread) = (p["phi0"], p["spread"]);
                let door = PoissonDoor::evenly_spaced(
                    p["intensity"],
                    count_param(&p, "bins")?,
                    p["x_min"],
                    p["x_max"],
                    p["width"],
                )?;
                ZooModel {
                    model: Box::new(door),
                    prior: scaled_gaussian_prior(phi0, spread, 1.0)?,
                    theta_prior: None,
                    nominal_phi: Some(PhiVector::scalar(phi0)),
                    prior_sd: Some(spread),
                    id,
                    params: p,
                }
            }
            ModelId::GaussianConjugate => ZooModel {
                model: Box::new(GaussianLocation::new(1, p["sigma"])?),
                prior: Box::new(GaussianNuisancePrior::independent(0.0, p["tau"])?),
                theta_prior: Some(Box::new(GaussianThetaPrior::scalar(p["theta_mean"], p["s"])?)),
                nominal_phi: Some(PhiVector::scalar(0.0)),
                prior_sd: Some(p["tau"]),
                id,
                params: p,
            },
            ModelId::PhiFreeGaussian => ZooModel {
                model: Box::new(PhiFreeGaussian::new(p["sigma"])?),
                prior: scaled_gaussian_prior(0.0, p["tau"], 1.0)?,
                theta_prior: None,
                nominal_phi: Some(PhiVector::scalar(0.0)),
                prior_sd: Some(p["tau"]),
                id,
                params: p,
            },
        };
        Ok(entry)
    }

    pub fn from_name(name: &str, params: &ParamMap) -> Result<Self> {
        Self::build(name.parse()?, params)
    }
}

/// Closed-form FIMs of a zoo model at `theta`, keyed by quantity:
/// `conditional` (at the prior centre), `averaged`, `marginal`,
/// `nuisance_info`, and for `gaussian_conjugate` also `f_tt`, `f_tp`,
/// `f_pp`, `f_m` and `f11`.
pub fn oracle_fims(id: ModelId, params: &ParamMap, theta: f64) -> Result<BTreeMap<&'static str, DMatrix<f64>>> {
    let p = id.resolve(params)?;
    let m = |v: f64| DMatrix::from_element(1, 1, v);
    let mut out = BTreeMap::new();
    match id {
        ModelId::GaussianLocation => {
            let n = count_param(&p, "n_obs")? as f64;
            let (s2, t2) = (p["sigma"].powi(2), p["tau"].powi(2));
            out.insert("conditional", m(n / s2));
            out.insert("averaged", m(n / s2));
            out.insert("marginal", m(n / (s2 + n * t2)));
            out.insert("nuisance_info", m(0.0));
        }
        ModelId::DependentPrior => {
            let (a, s2, t2) = (p["a"], p["sigma"].powi(2), p["tau"].powi(2));
            out.insert("conditional", m(0.0));
            out.insert("averaged", m(0.0));
            out.insert("marginal", m(a * a / (s2 + t2)));
            out.insert("nuisance_info", m(a * a / t2));
        }
        ModelId::GaussianConjugate => {
            let (s2, t2, sp2) = (p["sigma"].powi(2), p["tau"].powi(2), p["s"].powi(2));
            out.insert("conditional", m(1.0 / s2));
            out.insert("averaged", m(1.0 / s2));
            out.insert("marginal", m(1.0 / (s2 + t2)));
            out.insert("nuisance_info", m(0.0));
            out.insert("f_tt", m(1.0 / s2 + 1.0 / sp2));
            out.insert("f_tp", m(1.0 / s2));
            out.insert("f_pp", m(1.0 / s2 + 1.0 / t2));
            out.insert("f_m", m(1.0 / (s2 + t2) + 1.0 / sp2));
            out.insert("f11", m(1.0 / sp2));
        }
        ModelId::PhiFreeGaussian => {
            let s2 = p["sigma"].powi(2);
            for key in ["conditional", "averaged", "marginal"] {
                out.insert(key, m(1.0 / s2));
            }
            out.insert("nuisance_info", m(0.0));
        }
        ModelId::PoissonDoor => {
            let door = PoissonDoor::evenly_spaced(
                p["intensity"],
                count_param(&p, "bins")?,
                p["x_min"],
                p["x_max"],
                p["width"],
            )?;
            let (phi0, spread) = (p["phi0"], p["spread"]);
            let c = door.source_rates(theta);
            let u = door.rate_log_slopes(theta);
            let per_transmission: f64 = c.iter().zip(&u).map(|(ck, uk)| ck * uk * uk).sum();
            // E[sin^2 d] for d ~ N(mu, s^2) is (1 - cos(2 mu) exp(-2 s^2)) / 2
            let mu = phi0 - FRAC_PI_2;
            let mean_t = 0.5 * (1.0 - (2.0 * mu).cos() * (-2.0 * spread * spread).exp());
            out.insert("conditional", m(PoissonDoor::transmission(phi0) * per_transmission));
            out.insert("averaged", m(mean_t * per_transmission));
            out.insert("marginal", m(door_marginal_fim(&door, theta, phi0, spread)));
            out.insert("nuisance_info", m(0.0));
        }
    }
    Ok(out)
}

/// Marginal FIM of the door model by splitting the counts into their total
/// `G` and a multinomial allocation, which does not depend on the door:
/// `F = E[G] * I_mult + E[(d/dtheta ln Q(G))^2]` with
/// `Q(G) = int Poisson(G; C t(phi)) pr(phi) dphi`.
fn door_marginal_fim(door: &PoissonDoor, theta: f64, phi0: f64, spread: f64) -> f64 {
    let c = door.source_rates(theta);
    let u = door.rate_log_slopes(theta);
    let big_c: f64 = c.iter().sum();
    let probs: Vec<f64> = c.iter().map(|ck| ck / big_c).collect();
    let u_bar: f64 = probs.iter().zip(&u).map(|(p, uk)| p * uk).sum();
    let i_mult: f64 = probs.iter().zip(&u).map(|(p, uk)| p * (uk - u_bar).powi(2)).sum();
    let dc = big_c * u_bar;

    if spread == 0.0 {
        let t = PoissonDoor::transmission(phi0);
        return t * big_c * i_mult + dc * dc * t / big_c;
    }
    let rule = gauss_legendre(400, phi0 - 10.0 * spread, phi0 + 10.0 * spread);
    let dens: Vec<(f64, f64)> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&phi, &w)| {
            let z = (phi - phi0) / spread;
            let pdf = (-0.5 * z * z).exp() / (spread * (2.0 * std::f64::consts::PI).sqrt());
            (PoissonDoor::transmission(phi), w * pdf)
        })
        .collect();
    let mean_t: f64 = dens.iter().map(|(t, w)| t * w).sum();
    let t_max = dens.iter().map(|(t, _)| *t).fold(0.0, f64::max);
    let lam_max = big_c * t_max;
    let g_max = (lam_max + 20.0 * lam_max.sqrt()).ceil() as u64 + 10;

    let ln_pois = |g: u64, lam: f64| -> f64 {
        if lam == 0.0 {
            if g == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            g as f64 * lam.ln() - lam - statrs::function::factorial::ln_factorial(g)
        }
    };
    let mut info_total = 0.0;
    for g in 0..=g_max {
        let mut q = 0.0;
        let mut dq = 0.0;
        for (t, w) in &dens {
            let lam = big_c * t;
            let pg = ln_pois(g, lam).exp();
            let pg1 = if g == 0 { 0.0 } else { ln_pois(g - 1, lam).exp() };
            q += w * pg;
            dq += w * t * (pg1 - pg);
        }
        if q > 0.0 {
            info_total += dq * dq / q;
        }
    }
    big_c * mean_t * i_mult + dc * dc * info_total
}

/// `n` reproducible draws from `pr(A | phi, theta)` of a zoo model.
pub fn sample_dataset(
    id: ModelId,
    params: &ParamMap,
    phi: &PhiVector,
    theta: &ThetaVector,
    n: usize,
    seed: u64,
) -> Result<Vec<DataSample>> {
    if n == 0 {
        return Err(Error::InvalidParameter("dataset size must be at least 1".into()));
    }
    let zoo = ZooModel::build(id, params)?;
    (0..n).map(|i| zoo.model.sample(phi, theta, &mut stream(seed, stage::DATASET, i as u64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, f64)]) -> ParamMap {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn gaussian_location_oracles() {
        let o = oracle_fims(ModelId::GaussianLocation, &params(&[("n_obs", 4.0), ("sigma", 1.0), ("tau", 0.5)]), 0.0)
            .unwrap();
        assert_eq!(o["conditional"][(0, 0)], 4.0);
        assert_eq!(o["marginal"][(0, 0)], 2.0);
        assert_eq!(o["averaged"][(0, 0)], 4.0);
    }

    #[test]
    fn dependent_prior_oracles() {
        let o =
            oracle_fims(ModelId::DependentPrior, &params(&[("a", 2.0), ("sigma", 1.0), ("tau", 0.5)]), 0.0).unwrap();
        assert!((o["marginal"][(0, 0)] - 3.2).abs() < 1e-15);
        assert_eq!(o["nuisance_info"][(0, 0)], 16.0);
        assert_eq!(o["averaged"][(0, 0)], 0.0);
    }

    #[test]
    fn conjugate_oracles() {
        let o = oracle_fims(ModelId::GaussianConjugate, &ParamMap::new(), 0.0).unwrap();
        assert_eq!(o["f_tt"][(0, 0)], 2.0);
        assert_eq!(o["f_tp"][(0, 0)], 1.0);
        assert_eq!(o["f_pp"][(0, 0)], 2.0);
        assert_eq!(o["f_m"][(0, 0)], 1.5);
    }

    #[test]
    fn door_oracle_orders() {
        let o = oracle_fims(ModelId::PoissonDoor, &ParamMap::new(), 0.0).unwrap();
        assert_eq!(o["conditional"][(0, 0)], 0.0);
        let (marg, avg) = (o["marginal"][(0, 0)], o["averaged"][(0, 0)]);
        assert!(marg > 0.0 && marg <= avg, "{marg} vs {avg}");
    }

    #[test]
    fn door_oracle_without_spread_is_the_conditional_fim() {
        // Poisson bins: F = t * sum c_k u_k^2; the G-split must reproduce it
        let door = PoissonDoor::default();
        let t = PoissonDoor::transmission(0.7);
        let c = door.source_rates(0.3);
        let u = door.rate_log_slopes(0.3);
        let direct: f64 = c.iter().zip(&u).map(|(ck, uk)| t * ck * uk * uk).sum();
        let split = door_marginal_fim(&door, 0.3, 0.7, 0.0);
        assert!((split - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn door_oracle_small_spread_limit() {
        // spread -> 0 around an open door approaches the conditional FIM
        let door = PoissonDoor::default();
        let t = PoissonDoor::transmission(0.7);
        let direct: f64 =
            door.source_rates(0.0).iter().zip(door.rate_log_slopes(0.0)).map(|(c, u)| t * c * u * u).sum();
        let narrow = door_marginal_fim(&door, 0.0, 0.7, 1e-4);
        assert!((narrow - direct).abs() < 1e-4 * direct, "{narrow} vs {direct}");
    }

    #[test]
    fn unknown_model_and_parameter() {
        assert!(matches!("nope".parse::<ModelId>(), Err(Error::UnknownModel(_))));
        assert!(ModelId::GaussianLocation.resolve(&params(&[("bogus", 1.0)])).is_err());
        assert!(ZooModel::build(ModelId::GaussianLocation, &params(&[("n_obs", 1.5)])).is_err());
    }

    #[test]
    fn datasets_are_reproducible() {
        let p = ParamMap::new();
        let phi = PhiVector::scalar(0.2);
        let theta = ThetaVector::scalar(0.0);
        let a = sample_dataset(ModelId::GaussianLocation, &p, &phi, &theta, 5, 9).unwrap();
        let b = sample_dataset(ModelId::GaussianLocation, &p, &phi, &theta, 5, 9).unwrap();
        assert_eq!(a, b);
        let closed = PhiVector::scalar(FRAC_PI_2);
        let g = sample_dataset(ModelId::PoissonDoor, &p, &closed, &theta, 10, 1).unwrap();
        assert!(g.iter().all(|s| s.counts().unwrap().iter().all(|&c| c == 0)));
        assert!(sample_dataset(ModelId::PoissonDoor, &p, &closed, &theta, 0, 1).is_err());
    }
}
