//! Marginalization over the nuisance parameters.
//!
//! `pr(A | theta) = int pr(A | phi, theta) pr(phi | theta) dphi` is evaluated
//! on a [`NuisanceRule`]: either a tensor Gauss–Legendre grid over the prior
//! support or prior draws. Integrands are kept in log space throughout, since
//! list-mode likelihoods over many events underflow as plain products.

use nalgebra::{DMatrix, DVector};

use crate::contracts::{ConditionalModel, NuisancePrior, Support};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, log_sum_exp};
use crate::rng::{stage, stream};
use crate::types::{DataSample, PhiVector, ThetaVector};

/// Grid truncation half-width for unbounded priors, in prior standard deviations.
pub const TRUNCATION_SDS: f64 = 6.0;
/// Tensor grids are refused above this nuisance dimension.
pub const MAX_GRID_DIM: usize = 3;
pub const MIN_MC_DRAWS: usize = 100;

/// How integrals over the nuisance space are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Tensorized Gauss–Legendre with `nodes_per_axis` nodes per axis.
    Grid { nodes_per_axis: usize },
    /// Importance sampling from the prior.
    MonteCarlo { n_draws: usize, seed: u64 },
}

impl Integrator {
    pub fn validate(&self, phi_dim: usize) -> Result<()> {
        match *self {
            Integrator::Grid { nodes_per_axis } => {
                if nodes_per_axis == 0 {
                    return Err(Error::InvalidParameter("grid needs at least one node per axis".into()));
                }
                if phi_dim > MAX_GRID_DIM {
                    return Err(Error::InvalidParameter(format!(
                        "grid integration supports at most {MAX_GRID_DIM} nuisance dimensions, got {phi_dim}"
                    )));
                }
            }
            Integrator::MonteCarlo { n_draws, .. } => {
                if n_draws < MIN_MC_DRAWS {
                    return Err(Error::InvalidParameter(format!(
                        "Monte Carlo integration needs at least {MIN_MC_DRAWS} draws, got {n_draws}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Builds the node set for the prior at `theta`.
    pub fn realize(&self, prior: &dyn NuisancePrior, theta: &ThetaVector) -> Result<NuisanceRule> {
        self.validate(prior.dim())?;
        match *self {
            Integrator::Grid { nodes_per_axis } => grid_rule(prior, theta, nodes_per_axis),
            Integrator::MonteCarlo { n_draws, seed } => {
                let nodes: Vec<PhiVector> =
                    (0..n_draws).map(|j| prior.sample(theta, &mut stream(seed, stage::INTEGRATOR, j as u64))).collect();
                let w = 1.0 / n_draws as f64;
                Ok(NuisanceRule {
                    nodes,
                    weights: vec![w; n_draws],
                    log_mass: vec![w.ln(); n_draws],
                    monte_carlo: true,
                })
            }
        }
    }
}

fn grid_rule(prior: &dyn NuisancePrior, theta: &ThetaVector, n: usize) -> Result<NuisanceRule> {
    let axes: Vec<(f64, f64)> = match prior.support(theta) {
        Support::Point(p) => {
            return Ok(NuisanceRule { nodes: vec![p], weights: vec![1.0], log_mass: vec![0.0], monte_carlo: false });
        }
        Support::Unbounded { mean, sd } => {
            mean.iter().zip(sd.iter()).map(|(m, s)| (m - TRUNCATION_SDS * s, m + TRUNCATION_SDS * s)).collect()
        }
        Support::Bounded { lo, hi } => lo.iter().copied().zip(hi.iter().copied()).collect(),
    };
    let rules: Vec<_> = axes.iter().map(|&(lo, hi)| gauss_legendre(n, lo, hi)).collect();
    let total = n.pow(axes.len() as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut log_mass = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut point = DVector::zeros(axes.len());
        let mut w = 1.0;
        for (axis, rule) in rules.iter().enumerate() {
            let k = rem % n;
            rem /= n;
            point[axis] = rule.nodes[k];
            w *= rule.weights[k];
        }
        let phi = PhiVector::new(point)?;
        let lp = prior.log_density(&phi, theta);
        log_mass.push(w.ln() + lp);
        weights.push(w);
        nodes.push(phi);
    }
    // the prior is truncated to the grid box and renormalized there
    let total_mass = log_sum_exp(&log_mass);
    if !total_mass.is_finite() {
        return Err(Error::DegenerateMarginal);
    }
    for lm in &mut log_mass {
        *lm -= total_mass;
    }
    Ok(NuisanceRule { nodes, weights, log_mass, monte_carlo: false })
}

/// Nodes and masses approximating `int f(phi) pr(phi | theta) dphi` as
/// `sum_i exp(log_mass_i) f(phi_i)`.
#[derive(Debug, Clone)]
pub struct NuisanceRule {
    pub nodes: Vec<PhiVector>,
    /// Raw quadrature weights (`1/n` for Monte Carlo).
    pub weights: Vec<f64>,
    /// `ln w_i + ln pr(phi_i | theta)` on a grid, `-ln n` for prior draws.
    pub log_mass: Vec<f64>,
    pub monte_carlo: bool,
}

/// The nuisance posterior `pr(phi | A, theta)` on a node set.
#[derive(Debug, Clone)]
pub struct PosteriorWeights {
    pub nodes: Vec<PhiVector>,
    pub weights: Vec<f64>,
    pub log_marginal: f64,
}

/// Posterior mean and covariance of the total score
/// `s(A | phi, theta) + s(phi | theta)`.
#[derive(Debug, Clone)]
pub struct ScoreMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_marginal: f64,
}

impl NuisanceRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn log_terms(&self, model: &dyn ConditionalModel, data: &DataSample, theta: &ThetaVector) -> Result<Vec<f64>> {
        let terms: Vec<f64> =
            self.nodes.iter().zip(&self.log_mass).map(|(phi, lm)| model.log_density(data, phi, theta) + lm).collect();
        if terms.iter().any(|t| t.is_nan()) {
            return Err(Error::NonFinite("marginal integrand".into()));
        }
        Ok(terms)
    }

    pub fn log_marginal(&self, model: &dyn ConditionalModel, data: &DataSample, theta: &ThetaVector) -> Result<f64> {
        let lse = log_sum_exp(&self.log_terms(model, data, theta)?);
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateMarginal);
        }
        Ok(lse)
    }

    /// Log-marginal and, for prior draws, the delta-method standard error of
    /// the log of the sample mean (zero for grids).
    pub fn log_marginal_with_stderr(
        &self,
        model: &dyn ConditionalModel,
        data: &DataSample,
        theta: &ThetaVector,
    ) -> Result<(f64, f64)> {
        let terms = self.log_terms(model, data, theta)?;
        let lse = log_sum_exp(&terms);
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateMarginal);
        }
        if !self.monte_carlo {
            return Ok((lse, 0.0));
        }
        let n = terms.len() as f64;
        // values relative to their mean: r_i = n * exp(t_i - lse)
        let rel: Vec<f64> = terms.iter().map(|t| n * (t - lse).exp()).collect();
        let var = rel.iter().map(|r| (r - 1.0) * (r - 1.0)).sum::<f64>() / (n - 1.0);
        Ok((lse, (var / n).sqrt()))
    }

    pub fn posterior(
        &self,
        model: &dyn ConditionalModel,
        data: &DataSample,
        theta: &ThetaVector,
    ) -> Result<PosteriorWeights> {
        let terms = self.log_terms(model, data, theta)?;
        let lse = log_sum_exp(&terms);
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateMarginal);
        }
        let weights = terms.iter().map(|t| (t - lse).exp()).collect();
        Ok(PosteriorWeights { nodes: self.nodes.clone(), weights, log_marginal: lse })
    }

    pub fn score_moments(
        &self,
        model: &dyn ConditionalModel,
        prior: &dyn NuisancePrior,
        data: &DataSample,
        theta: &ThetaVector,
    ) -> Result<ScoreMoments> {
        let terms = self.log_terms(model, data, theta)?;
        let lse = log_sum_exp(&terms);
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateMarginal);
        }
        let d = theta.len();
        let mut mean = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        let dependent = prior.depends_on_theta();
        let mut scores = Vec::new();
        for (phi, t) in self.nodes.iter().zip(&terms) {
            let w = (t - lse).exp();
            if w == 0.0 {
                continue;
            }
            let mut s = model.score_theta(data, phi, theta);
            if dependent {
                s += prior.score_theta(phi, theta);
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("score at a posterior node".into()));
            }
            mean.axpy(w, &s, 1.0);
            scores.push((w, s));
        }
        // centered second moment: stays PSD and avoids cancellation
        for (w, s) in &scores {
            let c = s - &mean;
            second.ger(*w, &c, &c, 1.0);
        }
        let covariance = (&second + second.transpose()) * 0.5;
        Ok(ScoreMoments { mean, covariance, log_marginal: lse })
    }
}

/// `ln pr(A | theta)`.
pub fn log_marginal_density(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    data: &DataSample,
    theta: &ThetaVector,
    integrator: &Integrator,
) -> Result<f64> {
    check_dims(model, prior, theta)?;
    integrator.realize(prior, theta)?.log_marginal(model, data, theta)
}

/// `pr(phi | A, theta)` on the integrator's nodes.
pub fn posterior_weights(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    data: &DataSample,
    theta: &ThetaVector,
    integrator: &Integrator,
) -> Result<PosteriorWeights> {
    check_dims(model, prior, theta)?;
    integrator.realize(prior, theta)?.posterior(model, data, theta)
}

/// The marginal score `grad_theta ln pr(A | theta)`, evaluated as the
/// posterior mean of `s(A | phi, theta) + s(phi | theta)`.
pub fn global_score(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    data: &DataSample,
    theta: &ThetaVector,
    integrator: &Integrator,
) -> Result<DVector<f64>> {
    check_dims(model, prior, theta)?;
    Ok(integrator.realize(prior, theta)?.score_moments(model, prior, data, theta)?.mean)
}

/// Posterior covariance of `s(A | phi, theta) + s(phi | theta)` given `A`.
pub fn posterior_score_variance(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    data: &DataSample,
    theta: &ThetaVector,
    integrator: &Integrator,
) -> Result<DMatrix<f64>> {
    check_dims(model, prior, theta)?;
    Ok(integrator.realize(prior, theta)?.score_moments(model, prior, data, theta)?.covariance)
}

pub(crate) fn check_dims(model: &dyn ConditionalModel, prior: &dyn NuisancePrior, theta: &ThetaVector) -> Result<()> {
    let dims = model.dims();
    if dims.phi != prior.dim() {
        return Err(Error::Dimension(format!(
            "model expects {} nuisance parameters, prior has {}",
            dims.phi,
            prior.dim()
        )));
    }
    if dims.theta != theta.len() {
        return Err(Error::Dimension(format!(
            "model expects {} parameters of interest, got {}",
            dims.theta,
            theta.len()
        )));
    }
    Ok(())
}
