//! Fisher information estimators and the inequality
//! `F(theta) <= <F(phi, theta)>_phi + F_phi(theta)`.
//!
//! All estimators average raw outer products of scores (no mean subtraction)
//! and report the empirical score mean separately as a diagnostic. Nested
//! expectations are estimated cluster by cluster, so the standard error across
//! cluster means accounts for both sampling stages.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::contracts::{ConditionalModel, NuisancePrior};
use crate::error::{Error, Result};
use crate::marginal::{check_dims, Integrator};
use crate::matrix::{loewner_leq_raw, spd_inverse, symmetric_eigenvalues, LoewnerVerdict};
use crate::rng::{stage, stream};
use crate::stats::{matrix_estimate, mean_and_stderr, outer};
use crate::types::{BlockTag, FisherMatrix, MatrixEstimate, PhiVector, ThetaVector};

/// Largest condition number [`crb`] accepts.
pub const MAX_CRB_CONDITION: f64 = 1e12;

/// Slack, in standard errors, applied to every Monte Carlo verdict.
pub const SIGMA_SLACK: f64 = 3.0;

pub(crate) fn require_samples(name: &str, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("{name} must be at least 2, got {n}")));
    }
    Ok(())
}

pub(crate) fn ensure_finite(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Evaluates `f(0..n)` in parallel and returns the results in index order.
/// The first error by index wins, whatever the thread count.
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let out: Vec<Result<T>> = (0..n as u64).into_par_iter().map(f).collect();
    out.into_iter().collect()
}

fn check_point(model: &dyn ConditionalModel, phi: &PhiVector, theta: &ThetaVector) -> Result<()> {
    let dims = model.dims();
    if dims.phi != phi.len() || dims.theta != theta.len() {
        return Err(Error::Dimension(format!(
            "model expects (theta {}, phi {}), got ({}, {})",
            dims.theta,
            dims.phi,
            theta.len(),
            phi.len()
        )));
    }
    Ok(())
}

fn outer_estimate(scores: &[DVector<f64>], tag: BlockTag) -> Result<MatrixEstimate> {
    let samples: Vec<DMatrix<f64>> = scores.iter().map(|s| outer(s, s)).collect();
    matrix_estimate(&samples, scores, tag)
}

/// `F(phi, theta) = E[s s^T]` over `A ~ pr(. | phi, theta)`.
pub fn conditional_fim(
    model: &dyn ConditionalModel,
    phi: &PhiVector,
    theta: &ThetaVector,
    n: usize,
    seed: u64,
) -> Result<MatrixEstimate> {
    require_samples("n", n)?;
    check_point(model, phi, theta)?;
    let scores = par_map(n, |i| {
        let data = model.sample(phi, theta, &mut stream(seed, stage::CONDITIONAL, i))?;
        let s = model.score_theta(&data, phi, theta);
        ensure_finite(&s, "conditional score")?;
        Ok(s)
    })?;
    outer_estimate(&scores, BlockTag::Theta)
}

/// `<F(phi, theta)>_{phi | theta}`: `n_phi` prior draws, each with `n_data`
/// data draws.
pub fn averaged_conditional_fim(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    theta: &ThetaVector,
    n_phi: usize,
    n_data: usize,
    seed: u64,
) -> Result<MatrixEstimate> {
    require_samples("n_phi", n_phi)?;
    require_samples("n_data", n_data)?;
    check_dims(model, prior, theta)?;
    let d = theta.len();
    let clusters = par_map(n_phi, |j| {
        let phi = prior.sample(theta, &mut stream(seed, stage::AVERAGED_PHI, j));
        let mut rng = stream(seed, stage::AVERAGED_DATA, j);
        let mut f = DMatrix::zeros(d, d);
        let mut score_sum = DVector::zeros(d);
        for _ in 0..n_data {
            let data = model.sample(&phi, theta, &mut rng)?;
            let s = model.score_theta(&data, &phi, theta);
            ensure_finite(&s, "conditional score")?;
            f.ger(1.0, &s, &s, 1.0);
            score_sum += &s;
        }
        let k = n_data as f64;
        Ok((f / k, score_sum / k))
    })?;
    let (fs, scores): (Vec<_>, Vec<_>) = clusters.into_iter().unzip();
    let mut est = matrix_estimate(&fs, &scores, BlockTag::Theta)?;
    est.n_samples = n_phi * n_data;
    Ok(est)
}

struct MarginalDraw {
    score: DVector<f64>,
    covariance: DMatrix<f64>,
}

fn marginal_draws(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    theta: &ThetaVector,
    n: usize,
    integrator: &Integrator,
    seed: u64,
) -> Result<Vec<MarginalDraw>> {
    require_samples("n", n)?;
    check_dims(model, prior, theta)?;
    let rule = integrator.realize(prior, theta)?;
    par_map(n, |i| {
        let mut rng = stream(seed, stage::MARGINAL, i);
        let phi = prior.sample(theta, &mut rng);
        let data = model.sample(&phi, theta, &mut rng)?;
        let m = rule.score_moments(model, prior, &data, theta)?;
        ensure_finite(&m.mean, "global score")?;
        Ok(MarginalDraw { score: m.mean, covariance: m.covariance })
    })
}

/// `F(theta) = E[g g^T]` with `g` the global score, over `A ~ pr(. | theta)`.
pub fn marginal_fim(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    theta: &ThetaVector,
    n: usize,
    integrator: &Integrator,
    seed: u64,
) -> Result<MatrixEstimate> {
    let draws = marginal_draws(model, prior, theta, n, integrator, seed)?;
    let scores: Vec<_> = draws.into_iter().map(|d| d.score).collect();
    outer_estimate(&scores, BlockTag::Theta)
}

/// `F_phi(theta) = E[s(phi|theta) s(phi|theta)^T]` over `phi ~ pr(. | theta)`.
pub fn nuisance_info_fim(
    prior: &dyn NuisancePrior,
    theta: &ThetaVector,
    n: usize,
    seed: u64,
) -> Result<MatrixEstimate> {
    require_samples("n", n)?;
    let scores = par_map(n, |i| {
        let phi = prior.sample(theta, &mut stream(seed, stage::NUISANCE_INFO, i));
        let s = prior.score_theta(&phi, theta);
        if s.len() != theta.len() {
            return Err(Error::Dimension(format!("prior score has length {}, expected {}", s.len(), theta.len())));
        }
        ensure_finite(&s, "prior score")?;
        Ok(s)
    })?;
    outer_estimate(&scores, BlockTag::Theta)
}

/// Sample sizes for [`verify_inequality`].
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityConfig {
    /// Draws for the marginal FIM and the nuisance-prior FIM.
    pub n_data: usize,
    /// Outer prior draws for the averaged conditional FIM.
    pub n_phi: usize,
    pub integrator: Integrator,
    pub seed: u64,
}

impl InequalityConfig {
    /// Data draws per prior draw in the averaged FIM, so that its total cost
    /// matches `n_data`.
    pub fn inner_data(&self) -> usize {
        (self.n_data / self.n_phi.max(1)).max(2)
    }
}

#[derive(Debug, Clone)]
pub struct InequalityReport {
    /// Marginal FIM `F(theta)`.
    pub lhs: MatrixEstimate,
    pub averaged: MatrixEstimate,
    pub nuisance_info: MatrixEstimate,
    /// `averaged + nuisance_info`.
    pub rhs: MatrixEstimate,
    /// `rhs - lhs`.
    pub gap: MatrixEstimate,
    /// Average posterior covariance of the total score, estimated on the
    /// same data draws as `lhs`.
    pub direct_gap: MatrixEstimate,
    pub holds: bool,
    pub min_gap_eigenvalue: f64,
    /// `3 * max stderr of gap`.
    pub gap_tolerance: f64,
    /// Max-abs entry of `gap - direct_gap`.
    pub identity_residual: f64,
    /// Largest entrywise 3-sigma bound on `gap - direct_gap`.
    pub identity_tolerance: f64,
    pub identity_holds: bool,
}

impl InequalityReport {
    pub fn all_hold(&self) -> bool {
        self.holds && self.identity_holds
    }
}

pub fn verify_inequality(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    theta: &ThetaVector,
    config: &InequalityConfig,
) -> Result<InequalityReport> {
    require_samples("n_data", config.n_data)?;
    require_samples("n_phi", config.n_phi)?;
    let draws = marginal_draws(model, prior, theta, config.n_data, &config.integrator, config.seed)?;
    let scores: Vec<_> = draws.iter().map(|d| d.score.clone()).collect();
    let lhs = outer_estimate(&scores, BlockTag::Theta)?;

    let d = theta.len();
    let covs: Vec<DMatrix<f64>> = draws.iter().map(|d| d.covariance.clone()).collect();
    let (cov_mean, cov_se) = mean_and_stderr(&covs);
    let direct_gap = MatrixEstimate {
        mean: FisherMatrix::new(cov_mean, BlockTag::Theta)?,
        stderr: cov_se,
        n_samples: draws.len(),
        score_mean_diagnostic: DVector::zeros(d),
        score_mean_stderr: DVector::zeros(d),
    };
    // E_post[s s^T] per draw: lhs + direct_gap with their correlation kept
    let totals: Vec<DMatrix<f64>> = draws.iter().map(|d| outer(&d.score, &d.score) + &d.covariance).collect();
    let (_, total_se) = mean_and_stderr(&totals);

    let averaged = averaged_conditional_fim(model, prior, theta, config.n_phi, config.inner_data(), config.seed)?;
    let nuisance_info = nuisance_info_fim(prior, theta, config.n_data, config.seed)?;
    let rhs = averaged.add_independent(&nuisance_info)?;
    let mut gap = rhs.sub_independent(&lhs)?;
    gap.score_mean_diagnostic = lhs.score_mean_diagnostic.clone();
    gap.score_mean_stderr = lhs.score_mean_stderr.clone();

    let min_gap_eigenvalue = symmetric_eigenvalues(gap.mean.entries())[0];
    let gap_tolerance = SIGMA_SLACK * gap.max_stderr();
    let holds = min_gap_eigenvalue >= -gap_tolerance;

    let residual = gap.mean.entries() - direct_gap.mean.entries();
    let bound = rhs.stderr.zip_map(&total_se, |a, b| SIGMA_SLACK * a.hypot(b));
    let floor = 1e-12 * (1.0 + rhs.mean.entries().amax());
    let identity_holds = residual.iter().zip(bound.iter()).all(|(r, b)| r.abs() <= b + floor);
    let identity_residual = residual.amax();
    let identity_tolerance = bound.max() + floor;

    Ok(InequalityReport {
        lhs,
        averaged,
        nuisance_info,
        rhs,
        gap,
        direct_gap,
        holds,
        min_gap_eigenvalue,
        gap_tolerance,
        identity_residual,
        identity_tolerance,
        identity_holds,
    })
}

/// Cramér–Rao bound `F^{-1}`; refuses condition numbers of
/// [`MAX_CRB_CONDITION`] or more.
pub fn crb(m: &MatrixEstimate) -> Result<DMatrix<f64>> {
    spd_inverse(m.mean.entries(), MAX_CRB_CONDITION)
}

/// Inverse of an estimated FIM with first-order propagated standard errors
/// `|F^{-1}| se |F^{-1}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbEstimate {
    pub bound: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
}

pub fn crb_with_stderr(m: &MatrixEstimate) -> Result<CrbEstimate> {
    let bound = crb(m)?;
    let abs = bound.abs();
    let stderr = &abs * &m.stderr * &abs;
    Ok(CrbEstimate { bound, stderr })
}

/// Checks `crb(hi) <= crb(lo)` given `lo <= hi` for FIMs, with 3-sigma
/// propagated slack.
pub fn crb_ordering(lo: &MatrixEstimate, hi: &MatrixEstimate) -> Result<LoewnerVerdict> {
    let big = crb_with_stderr(lo)?;
    let small = crb_with_stderr(hi)?;
    let tol = SIGMA_SLACK * big.stderr.zip_map(&small.stderr, f64::hypot).max();
    loewner_leq_raw(&small.bound, &big.bound, tol)
}

/// Per-coordinate check that the score mean sits within `k` standard errors of zero.
pub fn score_mean_within(est: &MatrixEstimate, k: f64) -> bool {
    est.score_mean_diagnostic.iter().zip(est.score_mean_stderr.iter()).all(|(m, s)| m.abs() <= k * s || *m == 0.0)
}
