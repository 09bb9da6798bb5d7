//! Study runners: each turns a validated [`RunConfig`] into a report payload.

use std::fmt::Write as _;

use nalgebra::DVector;

use nuisfim::approx::{approx_fim, scaling_study, ApproxConfig, GaussianPriorFamily, NuisanceCovariance};
use nuisfim::bayes::{verify_bayes_relations, BayesConfig};
use nuisfim::fim::{
    crb_ordering, crb_with_stderr, score_mean_within, verify_inequality, InequalityConfig, SIGMA_SLACK,
};
use nuisfim::marginal::TRUNCATION_SDS;
use nuisfim::models::{GaussianThetaPrior, ZooModel};
use nuisfim::{BlockTag, ThetaPrior, ThetaVector};

use crate::config::{IntegratorSpec, RunConfig, Study};
use crate::report::{
    vector, ApproxPayload, ApproxPoint, BayesPayload, IntegratorJson, MatrixJson, Payload, ScalingPayload,
    ScalingPoint, ScalingRowJson, VerifyPayload, VerifyPoint,
};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    /// The study cannot run on this model (exit 64).
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] nuisfim::Error),
}

fn integrator_json(spec: IntegratorSpec) -> IntegratorJson {
    match spec {
        IntegratorSpec::Grid { nodes } => IntegratorJson {
            kind: "grid".into(),
            nodes_per_axis: Some(nodes),
            n_draws: None,
            truncation: format!(
                "unbounded priors truncated to mean +- {TRUNCATION_SDS} sd per axis and renormalized over the box"
            ),
        },
        IntegratorSpec::MonteCarlo { n_draws } => IntegratorJson {
            kind: "monte_carlo".into(),
            nodes_per_axis: None,
            n_draws: Some(n_draws),
            truncation: "none".into(),
        },
    }
}

fn build(cfg: &RunConfig) -> Result<ZooModel, StudyError> {
    Ok(ZooModel::build(cfg.model, &cfg.params)?)
}

fn thetas(cfg: &RunConfig) -> Vec<ThetaVector> {
    cfg.theta.iter().map(|t| ThetaVector::scalar(*t)).collect()
}

pub fn run_study(study: Study, cfg: &RunConfig) -> Result<Payload, StudyError> {
    match study {
        Study::Verify => verify(cfg).map(Payload::Verify),
        Study::Bayes => bayes(cfg).map(|p| Payload::Bayes(Box::new(p))),
        Study::Approx => approx(cfg).map(Payload::Approx),
        Study::Scaling => scaling(cfg).map(Payload::Scaling),
    }
}

pub fn verify(cfg: &RunConfig) -> Result<VerifyPayload, StudyError> {
    let zoo = build(cfg)?;
    let ic = InequalityConfig {
        n_data: cfg.n_data,
        n_phi: cfg.n_phi,
        integrator: cfg.integrator.build(cfg.seed),
        seed: cfg.seed,
    };
    let mut points = Vec::new();
    for theta in thetas(cfg) {
        let r = verify_inequality(zoo.model.as_ref(), zoo.prior.as_ref(), &theta, &ic)?;
        // singular information has no bound to report
        let crb_marginal = crb_with_stderr(&r.lhs).ok();
        let crb_rhs = crb_with_stderr(&r.rhs).ok();
        let crb_ordering_holds = crb_ordering(&r.lhs, &r.rhs).ok().map(|v| v.holds);
        let score_means = score_mean_within(&r.lhs, SIGMA_SLACK) && score_mean_within(&r.averaged, SIGMA_SLACK);
        points.push(VerifyPoint {
            theta: vector(&theta.clone().into_inner()),
            marginal: MatrixJson::from_estimate(&r.lhs),
            averaged_conditional: MatrixJson::from_estimate(&r.averaged),
            nuisance_info: MatrixJson::from_estimate(&r.nuisance_info),
            rhs: MatrixJson::from_estimate(&r.rhs),
            gap: MatrixJson::from_estimate(&r.gap),
            direct_gap: MatrixJson::from_estimate(&r.direct_gap),
            min_gap_eigenvalue: r.min_gap_eigenvalue,
            gap_tolerance: r.gap_tolerance,
            holds: r.holds,
            identity_residual: r.identity_residual,
            identity_tolerance: r.identity_tolerance,
            identity_holds: r.identity_holds,
            crb_marginal: crb_marginal.map(|c| MatrixJson::exact("theta", &c.bound, Some(&c.stderr), r.lhs.n_samples)),
            crb_rhs: crb_rhs.map(|c| MatrixJson::exact("theta", &c.bound, Some(&c.stderr), r.rhs.n_samples)),
            crb_ordering_holds,
            score_means_within_3sigma: score_means,
            all_hold: r.all_hold(),
        });
    }
    let all_hold = points.iter().all(|p| p.all_hold);
    Ok(VerifyPayload { integrator: integrator_json(cfg.integrator), points, all_hold })
}

fn component_tag(name: &str) -> &'static str {
    if name.starts_with("f12") {
        "theta_phi"
    } else if name.starts_with("f22") {
        "phi"
    } else {
        "theta"
    }
}

pub fn bayes(cfg: &RunConfig) -> Result<BayesPayload, StudyError> {
    let zoo = build(cfg)?;
    let fallback;
    let (tprior, tprior_name): (&dyn ThetaPrior, String) = match zoo.theta_prior.as_deref() {
        Some(tp) => (tp, format!("model ({})", cfg.model)),
        None => {
            fallback = GaussianThetaPrior::scalar(cfg.bayes.prior_mean, cfg.bayes.prior_sd)?;
            (&fallback, format!("normal(mean = {}, sd = {})", cfg.bayes.prior_mean, cfg.bayes.prior_sd))
        }
    };
    let bc = BayesConfig {
        n_theta: cfg.n_theta,
        n_phi: cfg.n_phi,
        n_data: cfg.n_data,
        integrator: cfg.integrator.build(cfg.seed),
        seed: cfg.seed,
    };
    let delta = DVector::from_vec(cfg.bayes.delta_theta.clone());
    let r = verify_bayes_relations(zoo.model.as_ref(), zoo.prior.as_ref(), tprior, &bc, &delta)?;
    let j = &r.joint;
    Ok(BayesPayload {
        integrator: integrator_json(cfg.integrator),
        theta_prior: tprior_name,
        f_tt: MatrixJson::from_estimate(&j.f_tt),
        f_tp: MatrixJson::from_block("theta_phi", &j.f_tp),
        f_pp: MatrixJson::from_estimate(&j.f_pp),
        assembled: MatrixJson::from_estimate(&j.assembled),
        components: j
            .components
            .iter()
            .map(|(k, v)| (k.to_string(), MatrixJson::from_block(component_tag(k), v)))
            .collect(),
        decomposition_residuals: j
            .residuals
            .iter()
            .map(|(k, v)| (k.to_string(), MatrixJson::from_block("residual", v)))
            .collect(),
        f_m: MatrixJson::from_estimate(&r.marginal.f_m),
        averaged_marginal: MatrixJson::from_estimate(&r.marginal.averaged_marginal),
        f11: MatrixJson::from_estimate(&r.marginal.f11),
        marginal_identity_residual: MatrixJson::from_block("residual", &r.marginal.identity_residual),
        identity_residual: r.identity_residual,
        identity_holds: r.identity_holds,
        decomposition_holds: r.decomposition_holds,
        ordering_holds: r.ordering.holds,
        ordering_min_eigenvalue: r.ordering.min_eigenvalue_of_gap,
        ordering_tolerance: r.ordering_tolerance,
        delta_theta: vector(&r.delta_theta),
        quadratic_marginal: r.quadratic_marginal,
        quadratic_joint: r.quadratic_joint,
        quadratic_tolerance: r.quadratic_tolerance,
        quadratic_holds: r.quadratic_holds,
        all_hold: r.all_hold(),
    })
}

fn approx_config(cfg: &RunConfig) -> ApproxConfig {
    ApproxConfig {
        n_samples: cfg.approx.n_samples,
        exact_samples: cfg.approx.exact_samples,
        h_theta: cfg.approx.h_theta,
        h_phi: cfg.approx.h_phi,
        integrator: cfg.integrator.build(cfg.seed),
        seed: cfg.seed,
    }
}

/// Nominal nuisance value and prior sd of a model with a fixed Gaussian prior.
fn expansion_point(zoo: &ZooModel) -> Result<(nuisfim::PhiVector, f64), StudyError> {
    match (&zoo.nominal_phi, zoo.prior_sd) {
        (Some(phi), Some(sd)) => Ok((phi.clone(), sd)),
        _ => Err(StudyError::Usage(format!(
            "model `{}` has a nuisance prior that depends on theta; the expansion needs a fixed nominal value",
            zoo.id
        ))),
    }
}

pub fn approx(cfg: &RunConfig) -> Result<ApproxPayload, StudyError> {
    let zoo = build(cfg)?;
    let (phi0, sd) = expansion_point(&zoo)?;
    let k = NuisanceCovariance::scalar(sd * sd)?;
    let ac = approx_config(cfg);
    let mut points = Vec::new();
    for theta in thetas(cfg) {
        let r = approx_fim(zoo.model.as_ref(), zoo.prior.as_ref(), &k, &phi0, &theta, &ac)?;
        let n_exact = r.exact.n_samples;
        points.push(ApproxPoint {
            theta: vector(&theta.clone().into_inner()),
            base: MatrixJson::exact("theta", r.base.entries(), None, ac.n_samples),
            f1: MatrixJson::exact("theta", &r.f1, None, ac.n_samples),
            f3: MatrixJson::exact("theta", &r.f3, None, ac.n_samples),
            approx: MatrixJson::exact(
                BlockTag::Theta.as_str(),
                r.approx.entries(),
                Some(&r.approx_stderr),
                ac.n_samples,
            ),
            exact: MatrixJson::exact("theta", r.exact.mean.entries(), Some(&r.exact.stderr), n_exact),
            exact_method: r.exact_method.as_str().to_string(),
            error_norm: r.error_norm,
            error_stderr: r.error_stderr,
            tolerance: cfg.tolerance.approx_error,
            holds: r.error_norm < cfg.tolerance.approx_error,
        });
    }
    let all_hold = points.iter().all(|p| p.holds);
    Ok(ApproxPayload {
        integrator: integrator_json(cfg.integrator),
        nominal_phi: vector(&phi0.into_inner()),
        prior_variance: sd * sd,
        points,
        all_hold,
    })
}

pub fn scaling(cfg: &RunConfig) -> Result<ScalingPayload, StudyError> {
    let zoo = build(cfg)?;
    let (phi0, sd) = expansion_point(&zoo)?;
    let family = GaussianPriorFamily { mean: phi0[0], sd, theta_dim: 1 };
    let ac = approx_config(cfg);
    let mut points = Vec::new();
    for theta in thetas(cfg) {
        let t = scaling_study(zoo.model.as_ref(), &family, &theta, &cfg.approx.scales, &ac)?;
        let first_ratio_in_range = t
            .ratios
            .first()
            .copied()
            .flatten()
            .is_some_and(|r| (cfg.tolerance.ratio_min..=cfg.tolerance.ratio_max).contains(&r));
        points.push(ScalingPoint {
            theta: vector(&theta.clone().into_inner()),
            rows: t
                .rows
                .iter()
                .map(|r| ScalingRowJson {
                    scale: r.scale,
                    error_norm: r.error_norm,
                    error_stderr: r.error_stderr,
                    approx: MatrixJson::exact("theta", &r.approx, None, ac.n_samples),
                    exact: MatrixJson::exact("theta", &r.exact, None, ac.exact_samples),
                })
                .collect(),
            slope: t.slope,
            ratios: t.ratios,
            monotone: t.monotone,
            first_ratio_in_range,
        });
    }
    let all_hold = points.iter().all(|p| p.monotone);
    Ok(ScalingPayload {
        integrator: integrator_json(cfg.integrator),
        nominal_phi: vector(&phi0.into_inner()),
        prior_sd: sd,
        ratio_min: cfg.tolerance.ratio_min,
        ratio_max: cfg.tolerance.ratio_max,
        points,
        all_hold,
    })
}

/// Flat CSV of a scaling payload: one line per (theta, scale).
pub fn scaling_csv(p: &ScalingPayload) -> String {
    let mut out = String::from("theta,scale,error_norm,error_stderr,ratio_to_next\n");
    for pt in &p.points {
        let theta = pt.theta.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
        for (i, row) in pt.rows.iter().enumerate() {
            let ratio = pt.ratios.get(i).copied().flatten().map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{theta},{},{},{},{ratio}", row.scale, row.error_norm, row.error_stderr);
        }
    }
    out
}
