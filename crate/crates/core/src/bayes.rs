//! Bayesian Fisher information: posterior scores, the joint block matrix
//! `F_J` for `(theta, phi)` with its term-by-term decomposition, and the
//! marginalized Bayesian FIM `F_M`.
//!
//! Block components are named after the terms they estimate:
//!
//! | name | expectation |
//! |------|-------------|
//! | `f11_theta_phi` | `<<s_d s_d^T>>`, data score in `theta` |
//! | `f11_theta` | `<s_p s_p^T>`, nuisance-prior score in `theta` |
//! | `f11` | `<s_t s_t^T>`, parameter-prior score |
//! | `f22_theta_phi` | `<<u_d u_d^T>>`, data score in `phi` |
//! | `f22_theta` | `<u_p u_p^T>`, nuisance-prior score in `phi` |
//! | `f12_theta_phi` | `<<s_d u_d^T>>` |
//! | `f12_theta` | `<s_p u_p^T>` |
//!
//! Each component and each full block is accumulated separately from the
//! same draws; the residuals `block - sum(components)` are cross terms whose
//! vanishing in expectation is what the decomposition asserts.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::contracts::{ConditionalModel, NuisancePrior, ThetaPrior};
use crate::diff::{fd_gradient, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::fim::{ensure_finite, par_map, require_samples, SIGMA_SLACK};
use crate::marginal::{check_dims, Integrator};
use crate::matrix::{loewner_leq_raw, LoewnerVerdict};
use crate::rng::{stage, stream};
use crate::stats::{block_estimate, mean_and_stderr, outer};
use crate::types::{BlockEstimate, BlockTag, DataSample, FisherMatrix, MatrixEstimate, PhiVector, ThetaVector};

/// Component names in output order.
pub const COMPONENTS: [&str; 7] =
    ["f11_theta_phi", "f11_theta", "f11", "f22_theta_phi", "f22_theta", "f12_theta_phi", "f12_theta"];

/// Residual names: `theta_theta = f_tt - (f11_theta_phi + f11_theta + f11)` and so on.
pub const RESIDUALS: [&str; 3] = ["theta_theta", "phi_phi", "theta_phi"];

#[derive(Debug, Clone, PartialEq)]
pub struct BayesConfig {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_data: usize,
    /// Inner integrator for the marginal score in `F_M`.
    pub integrator: Integrator,
    pub seed: u64,
}

impl BayesConfig {
    fn validate(&self) -> Result<()> {
        require_samples("n_theta", self.n_theta)?;
        require_samples("n_phi", self.n_phi)?;
        require_samples("n_data", self.n_data)
    }
}

fn check_all(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    tprior: &dyn ThetaPrior,
    theta: &ThetaVector,
) -> Result<()> {
    check_dims(model, prior, theta)?;
    if tprior.dim() != theta.len() {
        return Err(Error::Dimension(format!(
            "parameter prior has dimension {}, expected {}",
            tprior.dim(),
            theta.len()
        )));
    }
    Ok(())
}

/// `grad_phi ln pr(phi | theta)`, from the prior when it supplies one.
fn prior_score_phi(prior: &dyn NuisancePrior, phi: &PhiVector, theta: &ThetaVector) -> Result<DVector<f64>> {
    if let Some(s) = prior.score_phi(phi, theta) {
        return Ok(s);
    }
    let f = |x: &DVector<f64>| match PhiVector::new(x.clone()) {
        Ok(p) => prior.log_density(&p, theta),
        Err(_) => f64::NAN,
    };
    fd_gradient(&f, phi, DEFAULT_STEP)
}

/// The score pieces of one `(theta, phi, A)` draw.
struct ScoreParts {
    /// data score in theta
    sd: DVector<f64>,
    /// nuisance-prior score in theta
    sp: DVector<f64>,
    /// parameter-prior score
    st: DVector<f64>,
    /// data score in phi
    ud: DVector<f64>,
    /// nuisance-prior score in phi
    up: DVector<f64>,
}

fn score_parts(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    tprior: &dyn ThetaPrior,
    data: &DataSample,
    theta: &ThetaVector,
    phi: &PhiVector,
) -> Result<ScoreParts> {
    let parts = ScoreParts {
        sd: model.score_theta(data, phi, theta),
        sp: prior.score_theta(phi, theta),
        st: tprior.score(theta),
        ud: model.score_phi(data, phi, theta),
        up: prior_score_phi(prior, phi, theta)?,
    };
    for (v, what) in [
        (&parts.sd, "data score"),
        (&parts.sp, "nuisance prior score"),
        (&parts.st, "parameter prior score"),
        (&parts.ud, "data nuisance score"),
        (&parts.up, "nuisance prior nuisance score"),
    ] {
        ensure_finite(v, what)?;
    }
    Ok(parts)
}

/// Posterior scores `(grad_theta, grad_phi) ln pr(theta, phi | A)`.
pub fn posterior_scores(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    tprior: &dyn ThetaPrior,
    data: &DataSample,
    theta: &ThetaVector,
    phi: &PhiVector,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_all(model, prior, tprior, theta)?;
    if phi.len() != prior.dim() {
        return Err(Error::Dimension(format!("phi has length {}, expected {}", phi.len(), prior.dim())));
    }
    let p = score_parts(model, prior, tprior, data, theta, phi)?;
    Ok((&p.sd + &p.sp + &p.st, &p.ud + &p.up))
}

#[derive(Debug, Clone)]
pub struct JointBayesFim {
    pub f_tt: MatrixEstimate,
    pub f_tp: BlockEstimate,
    /// Transpose of `f_tp`, built from it.
    pub f_pt: DMatrix<f64>,
    pub f_pp: MatrixEstimate,
    /// `[[f_tt, f_tp], [f_tp^T, f_pp]]`.
    pub assembled: MatrixEstimate,
    pub components: BTreeMap<&'static str, BlockEstimate>,
    pub residuals: BTreeMap<&'static str, BlockEstimate>,
}

impl JointBayesFim {
    /// True when every decomposition residual is within `k` standard errors of zero.
    pub fn decomposition_holds(&self, k: f64) -> bool {
        self.residuals.values().all(|r| r.within_sigma_of_zero(k))
    }
}

struct Accum {
    sums: Vec<DMatrix<f64>>,
}

// indices into Accum::sums
const TT: usize = 0;
const TP: usize = 1;
const PP: usize = 2;
const C0: usize = 3;
const R0: usize = C0 + COMPONENTS.len();
const SLOTS: usize = R0 + RESIDUALS.len();

impl Accum {
    fn new(dt: usize, dp: usize) -> Self {
        let shape = |slot: usize| -> (usize, usize) {
            match slot {
                TT => (dt, dt),
                TP => (dt, dp),
                PP => (dp, dp),
                s if s < R0 => match COMPONENTS[s - C0] {
                    "f11_theta_phi" | "f11_theta" | "f11" => (dt, dt),
                    "f22_theta_phi" | "f22_theta" => (dp, dp),
                    _ => (dt, dp),
                },
                s => match RESIDUALS[s - R0] {
                    "theta_theta" => (dt, dt),
                    "phi_phi" => (dp, dp),
                    _ => (dt, dp),
                },
            }
        };
        Accum {
            sums: (0..SLOTS)
                .map(|s| {
                    let (r, c) = shape(s);
                    DMatrix::zeros(r, c)
                })
                .collect(),
        }
    }

    fn add(&mut self, p: &ScoreParts) {
        let s_theta = &p.sd + &p.sp + &p.st;
        let s_phi = &p.ud + &p.up;
        let tt = outer(&s_theta, &s_theta);
        let tp = outer(&s_theta, &s_phi);
        let pp = outer(&s_phi, &s_phi);
        let comps = [
            outer(&p.sd, &p.sd),
            outer(&p.sp, &p.sp),
            outer(&p.st, &p.st),
            outer(&p.ud, &p.ud),
            outer(&p.up, &p.up),
            outer(&p.sd, &p.ud),
            outer(&p.sp, &p.up),
        ];
        let res =
            [&tt - (&comps[0] + &comps[1] + &comps[2]), &pp - (&comps[3] + &comps[4]), &tp - (&comps[5] + &comps[6])];
        self.sums[TT] += tt;
        self.sums[TP] += tp;
        self.sums[PP] += pp;
        for (k, c) in comps.into_iter().enumerate() {
            self.sums[C0 + k] += c;
        }
        for (k, r) in res.into_iter().enumerate() {
            self.sums[R0 + k] += r;
        }
    }

    fn scaled(mut self, n: f64) -> Vec<DMatrix<f64>> {
        for s in &mut self.sums {
            *s /= n;
        }
        self.sums
    }
}

/// `F_J` by nested Monte Carlo: `n_theta` parameter draws, each with `n_phi`
/// nuisance draws and `n_data` data draws per nuisance draw.
pub fn joint_bayes_fim(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    tprior: &dyn ThetaPrior,
    config: &BayesConfig,
) -> Result<JointBayesFim> {
    config.validate()?;
    let dt = tprior.dim();
    let dp = prior.dim();
    let dims = model.dims();
    if dims.theta != dt || dims.phi != dp {
        return Err(Error::Dimension(format!(
            "model expects (theta {}, phi {}), priors give ({dt}, {dp})",
            dims.theta, dims.phi
        )));
    }
    let clusters = par_map(config.n_theta, |i| {
        let mut rng = stream(config.seed, stage::BAYES_THETA, i);
        let theta = tprior.sample(&mut rng);
        let mut acc = Accum::new(dt, dp);
        let mut score_sum = DVector::zeros(dt);
        for _ in 0..config.n_phi {
            let phi = prior.sample(&theta, &mut rng);
            for _ in 0..config.n_data {
                let data = model.sample(&phi, &theta, &mut rng)?;
                let parts = score_parts(model, prior, tprior, &data, &theta, &phi)?;
                score_sum += &parts.sd + &parts.sp + &parts.st;
                acc.add(&parts);
            }
        }
        let n = (config.n_phi * config.n_data) as f64;
        Ok((acc.scaled(n), score_sum / n))
    })?;

    let slot = |k: usize| -> Vec<DMatrix<f64>> { clusters.iter().map(|(c, _)| c[k].clone()).collect() };
    let scores: Vec<DVector<f64>> = clusters.iter().map(|(_, s)| s.clone()).collect();
    let total = config.n_theta * config.n_phi * config.n_data;

    let tt = block_estimate(&slot(TT));
    let tp = block_estimate(&slot(TP));
    let pp = block_estimate(&slot(PP));
    let (score_mean, score_se) = crate::stats::vector_mean_and_stderr(&scores);

    let square = |b: &BlockEstimate, tag: BlockTag, diag: (DVector<f64>, DVector<f64>)| -> Result<MatrixEstimate> {
        Ok(MatrixEstimate {
            mean: FisherMatrix::new(b.mean.clone(), tag)?,
            stderr: b.stderr.clone(),
            n_samples: total,
            score_mean_diagnostic: diag.0,
            score_mean_stderr: diag.1,
        })
    };
    let f_tt = square(&tt, BlockTag::Theta, (score_mean.clone(), score_se.clone()))?;
    let f_pp = square(&pp, BlockTag::Phi, (DVector::zeros(dp), DVector::zeros(dp)))?;

    let mut mean = DMatrix::zeros(dt + dp, dt + dp);
    let mut se = DMatrix::zeros(dt + dp, dt + dp);
    mean.view_mut((0, 0), (dt, dt)).copy_from(&tt.mean);
    mean.view_mut((0, dt), (dt, dp)).copy_from(&tp.mean);
    mean.view_mut((dt, 0), (dp, dt)).copy_from(&tp.mean.transpose());
    mean.view_mut((dt, dt), (dp, dp)).copy_from(&pp.mean);
    se.view_mut((0, 0), (dt, dt)).copy_from(&tt.stderr);
    se.view_mut((0, dt), (dt, dp)).copy_from(&tp.stderr);
    se.view_mut((dt, 0), (dp, dt)).copy_from(&tp.stderr.transpose());
    se.view_mut((dt, dt), (dp, dp)).copy_from(&pp.stderr);
    let mut joint_diag = DVector::zeros(dt + dp);
    joint_diag.rows_mut(0, dt).copy_from(&score_mean);
    let mut joint_diag_se = DVector::zeros(dt + dp);
    joint_diag_se.rows_mut(0, dt).copy_from(&score_se);
    let assembled = MatrixEstimate {
        mean: FisherMatrix::new(mean, BlockTag::Joint)?,
        stderr: se,
        n_samples: total,
        score_mean_diagnostic: joint_diag,
        score_mean_stderr: joint_diag_se,
    };

    let components = COMPONENTS.iter().enumerate().map(|(k, name)| (*name, block_estimate(&slot(C0 + k)))).collect();
    let residuals = RESIDUALS.iter().enumerate().map(|(k, name)| (*name, block_estimate(&slot(R0 + k)))).collect();
    let f_pt = tp.mean.transpose();
    Ok(JointBayesFim { f_tt, f_tp: tp, f_pt, f_pp, assembled, components, residuals })
}

#[derive(Debug, Clone)]
pub struct MarginalBayesFim {
    /// `F_M = <[g + s_t][g + s_t]^T>` over joint draws of `(theta, A)`.
    pub f_m: MatrixEstimate,
    /// `<F(theta)>_theta`, from the same draws.
    pub averaged_marginal: MatrixEstimate,
    /// `F11 = <s_t s_t^T>`, from the same draws.
    pub f11: MatrixEstimate,
    /// `F_M - <F(theta)>_theta - F11`, per draw.
    pub identity_residual: BlockEstimate,
}

/// `F_M` from `n_theta` parameter draws with `n_data` marginal data draws
/// each (a fresh nuisance draw per data set).
pub fn marginal_bayes_fim(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    tprior: &dyn ThetaPrior,
    config: &BayesConfig,
) -> Result<MarginalBayesFim> {
    config.validate()?;
    let dt = tprior.dim();
    let clusters = par_map(config.n_theta, |i| {
        let mut rng = stream(config.seed, stage::BAYES_MARGINAL, i);
        let theta = tprior.sample(&mut rng);
        check_all(model, prior, tprior, &theta)?;
        let rule = config.integrator.realize(prior, &theta)?;
        let st = tprior.score(&theta);
        ensure_finite(&st, "parameter prior score")?;
        let mut sums = [DMatrix::zeros(dt, dt), DMatrix::zeros(dt, dt), DMatrix::zeros(dt, dt), DMatrix::zeros(dt, dt)];
        let mut diag = [DVector::zeros(dt), DVector::zeros(dt)];
        for _ in 0..config.n_data {
            let phi = prior.sample(&theta, &mut rng);
            let data = model.sample(&phi, &theta, &mut rng)?;
            let g = rule.score_moments(model, prior, &data, &theta)?.mean;
            ensure_finite(&g, "global score")?;
            let total = &g + &st;
            let fm = outer(&total, &total);
            let fg = outer(&g, &g);
            let f11 = outer(&st, &st);
            sums[3] += &fm - &fg - &f11;
            sums[0] += fm;
            sums[1] += fg;
            sums[2] += f11;
            diag[0] += total;
            diag[1] += g;
        }
        let n = config.n_data as f64;
        Ok((sums.map(|s| s / n), diag.map(|d| d / n)))
    })?;
    let total = config.n_theta * config.n_data;
    let estimate = |k: usize, diag: Option<usize>| -> Result<MatrixEstimate> {
        let samples: Vec<DMatrix<f64>> = clusters.iter().map(|(s, _)| s[k].clone()).collect();
        let (mean, stderr) = mean_and_stderr(&samples);
        let (dm, ds) = match diag {
            Some(j) => {
                crate::stats::vector_mean_and_stderr(&clusters.iter().map(|(_, d)| d[j].clone()).collect::<Vec<_>>())
            }
            None => (DVector::zeros(dt), DVector::zeros(dt)),
        };
        Ok(MatrixEstimate {
            mean: FisherMatrix::new(mean, BlockTag::Theta)?,
            stderr,
            n_samples: total,
            score_mean_diagnostic: dm,
            score_mean_stderr: ds,
        })
    };
    let residual_samples: Vec<DMatrix<f64>> = clusters.iter().map(|(s, _)| s[3].clone()).collect();
    Ok(MarginalBayesFim {
        f_m: estimate(0, Some(0))?,
        averaged_marginal: estimate(1, Some(1))?,
        f11: estimate(2, None)?,
        identity_residual: block_estimate(&residual_samples),
    })
}

#[derive(Debug, Clone)]
pub struct BayesReport {
    pub joint: JointBayesFim,
    pub marginal: MarginalBayesFim,
    /// Max-abs entry of `F_M - <F(theta)>_theta - F11`.
    pub identity_residual: f64,
    pub identity_holds: bool,
    pub decomposition_holds: bool,
    /// `F_M <= f_tt`.
    pub ordering: LoewnerVerdict,
    pub ordering_tolerance: f64,
    pub delta_theta: DVector<f64>,
    pub quadratic_marginal: f64,
    pub quadratic_joint: f64,
    pub quadratic_tolerance: f64,
    pub quadratic_holds: bool,
}

impl BayesReport {
    pub fn all_hold(&self) -> bool {
        self.identity_holds && self.decomposition_holds && self.ordering.holds && self.quadratic_holds
    }
}

/// `x^T M x` with a conservative standard error `|x|^T se |x|`.
fn quadratic(m: &DMatrix<f64>, se: &DMatrix<f64>, x: &DVector<f64>) -> (f64, f64) {
    let ax = x.abs();
    (x.dot(&(m * x)), ax.dot(&(se * &ax)))
}

pub fn verify_bayes_relations(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    tprior: &dyn ThetaPrior,
    config: &BayesConfig,
    delta_theta: &DVector<f64>,
) -> Result<BayesReport> {
    if delta_theta.len() != tprior.dim() {
        return Err(Error::Dimension(format!(
            "delta theta has length {}, expected {}",
            delta_theta.len(),
            tprior.dim()
        )));
    }
    if delta_theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("delta theta".into()));
    }
    let joint = joint_bayes_fim(model, prior, tprior, config)?;
    let marginal = marginal_bayes_fim(model, prior, tprior, config)?;

    let res = &marginal.identity_residual;
    let identity_residual = res.max_abs();
    let identity_holds = res.within_sigma_of_zero(SIGMA_SLACK);
    let decomposition_holds = joint.decomposition_holds(SIGMA_SLACK);

    let ordering_tolerance = SIGMA_SLACK * marginal.f_m.stderr.zip_map(&joint.f_tt.stderr, f64::hypot).max();
    let ordering = loewner_leq_raw(marginal.f_m.mean.entries(), joint.f_tt.mean.entries(), ordering_tolerance)?;

    // [dtheta; 0]^T F_J [dtheta; 0] only sees the theta-theta block
    let (qm, qm_se) = quadratic(marginal.f_m.mean.entries(), &marginal.f_m.stderr, delta_theta);
    let (qj, qj_se) = quadratic(joint.f_tt.mean.entries(), &joint.f_tt.stderr, delta_theta);
    let quadratic_tolerance = SIGMA_SLACK * qm_se.hypot(qj_se);
    let quadratic_holds = qm <= qj + quadratic_tolerance;

    Ok(BayesReport {
        joint,
        marginal,
        identity_residual,
        identity_holds,
        decomposition_holds,
        ordering,
        ordering_tolerance,
        delta_theta: delta_theta.clone(),
        quadratic_marginal: qm,
        quadratic_joint: qj,
        quadratic_tolerance,
        quadratic_holds,
    })
}
