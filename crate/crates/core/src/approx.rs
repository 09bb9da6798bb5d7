//! Second-order small-uncertainty expansion of the marginal FIM.
//!
//! With `L = 1/2 grad_phi^T K grad_phi` acting on the density at the nominal
//! nuisance value, `pr(A | theta) ~ pr + L pr` and
//!
//! `F(theta) ~ F(phi, theta) + F1 + F1^T - F3`,
//! `F1 = int s (grad_theta L pr)^T dA`, `F3 = int s s^T L pr dA`.
//!
//! When the model supplies a data-space quadrature rule these integrals are
//! evaluated deterministically; otherwise they are rewritten as expectations
//! over `A ~ pr(. | phi, theta)` and estimated by Monte Carlo.

use nalgebra::{DMatrix, DVector};

use crate::contracts::{ConditionalModel, DataRule, NuisancePrior, Support};
use crate::diff::fd_hessian;
use crate::error::{Error, Result};
use crate::fim::{conditional_fim, ensure_finite, marginal_fim, par_map, require_samples, SIGMA_SLACK};
use crate::marginal::{check_dims, Integrator};
use crate::matrix::relative_asymmetry;
use crate::models::{GaussianNuisancePrior, PointMassPrior};
use crate::rng::{stage, stream};
use crate::stats::{mean_and_stderr, outer};
use crate::types::{BlockTag, DataSample, FisherMatrix, MatrixEstimate, PhiVector, ThetaVector, SYMMETRY_TOL};

/// Densities below this make `L pr / pr` meaningless.
pub const MIN_DENSITY: f64 = 1e-300;

/// Covariance `K` of the nuisance error around its nominal value.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceCovariance(DMatrix<f64>);

impl NuisanceCovariance {
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if !k.is_square() || k.nrows() == 0 {
            return Err(Error::Dimension(format!("covariance must be square and nonempty, got {:?}", k.shape())));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nuisance covariance".into()));
        }
        let asym = relative_asymmetry(&k);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry: asym, tolerance: SYMMETRY_TOL });
        }
        let tol = 1e-12 * k.diagonal().abs().max().max(f64::MIN_POSITIVE);
        let verdict = crate::matrix::psd_check_raw(&k, tol)?;
        if !verdict.is_psd {
            return Err(Error::InvalidParameter(format!(
                "nuisance covariance has eigenvalue {}",
                verdict.min_eigenvalue
            )));
        }
        Ok(Self(k))
    }

    pub fn scalar(variance: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, variance))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxConfig {
    /// Monte Carlo draws for the corrections when no data rule exists.
    pub n_samples: usize,
    /// Monte Carlo draws for the exact reference when quadrature is unavailable.
    pub exact_samples: usize,
    pub h_theta: f64,
    pub h_phi: f64,
    /// Nuisance integrator for the exact reference.
    pub integrator: Integrator,
    pub seed: u64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            exact_samples: 20_000,
            h_theta: 1e-4,
            h_phi: 1e-4,
            integrator: Integrator::Grid { nodes_per_axis: 64 },
            seed: 0,
        }
    }
}

impl ApproxConfig {
    fn validate(&self) -> Result<()> {
        require_samples("n_samples", self.n_samples)?;
        require_samples("exact_samples", self.exact_samples)?;
        for (name, h) in [("h_theta", self.h_theta), ("h_phi", self.h_phi)] {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

fn density_hessian(
    model: &dyn ConditionalModel,
    data: &DataSample,
    phi: &PhiVector,
    theta: &ThetaVector,
    h_phi: f64,
) -> Result<DMatrix<f64>> {
    if let Some(h) = model.hessian_phi_density(data, phi, theta) {
        return Ok(h);
    }
    let f = |x: &DVector<f64>| match PhiVector::new(x.clone()) {
        Ok(p) => model.log_density(data, &p, theta).exp(),
        Err(_) => f64::NAN,
    };
    fd_hessian(&f, phi, h_phi)
}

fn l_phi_with_step(
    model: &dyn ConditionalModel,
    k: &NuisanceCovariance,
    data: &DataSample,
    phi: &PhiVector,
    theta: &ThetaVector,
    h_phi: f64,
) -> Result<f64> {
    if k.dim() != phi.len() {
        return Err(Error::Dimension(format!("covariance is {0}x{0}, phi has length {1}", k.dim(), phi.len())));
    }
    if k.is_zero() {
        return Ok(0.0);
    }
    let h = density_hessian(model, data, phi, theta, h_phi)?;
    let v = 0.5 * (k.matrix() * h).trace();
    if !v.is_finite() {
        return Err(Error::NonFinite("L_phi pr".into()));
    }
    Ok(v)
}

/// `L pr = 1/2 tr(K H)` with `H` the `phi`-Hessian of the density.
pub fn l_phi_apply(
    model: &dyn ConditionalModel,
    k: &NuisanceCovariance,
    data: &DataSample,
    phi: &PhiVector,
    theta: &ThetaVector,
) -> Result<f64> {
    l_phi_with_step(model, k, data, phi, theta, ApproxConfig::default().h_phi)
}

/// `ln pr + L pr / pr`, the first-order expansion of `ln pr(A | theta)`.
pub fn expanded_log_density(
    model: &dyn ConditionalModel,
    k: &NuisanceCovariance,
    data: &DataSample,
    phi: &PhiVector,
    theta: &ThetaVector,
) -> Result<f64> {
    let ln_pr = model.log_density(data, phi, theta);
    let pr = ln_pr.exp();
    if pr.is_nan() || pr < MIN_DENSITY {
        return Err(Error::ExpansionUndefined { density: pr });
    }
    Ok(ln_pr + l_phi_apply(model, k, data, phi, theta)? / pr)
}

fn grad_theta_l(
    model: &dyn ConditionalModel,
    k: &NuisanceCovariance,
    data: &DataSample,
    phi: &PhiVector,
    theta: &ThetaVector,
    config: &ApproxConfig,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(theta.len());
    for i in 0..theta.len() {
        let h = config.h_theta * theta[i].abs().max(1.0);
        let mut up = theta.clone().into_inner();
        let mut down = up.clone();
        up[i] += h;
        down[i] -= h;
        let lu = l_phi_with_step(model, k, data, phi, &ThetaVector::new(up)?, config.h_phi)?;
        let ld = l_phi_with_step(model, k, data, phi, &ThetaVector::new(down)?, config.h_phi)?;
        g[i] = (lu - ld) / (2.0 * h);
    }
    Ok(g)
}

/// The correction matrices with their standard errors (zero when evaluated
/// by quadrature). `F2` is `f1^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionTerms {
    pub base: DMatrix<f64>,
    pub base_stderr: DMatrix<f64>,
    pub f1: DMatrix<f64>,
    pub f1_stderr: DMatrix<f64>,
    pub f3: DMatrix<f64>,
    pub f3_stderr: DMatrix<f64>,
    pub deterministic: bool,
}

fn rule_corrections(
    model: &dyn ConditionalModel,
    k: &NuisanceCovariance,
    phi: &PhiVector,
    theta: &ThetaVector,
    rule: &DataRule,
    config: &ApproxConfig,
) -> Result<CorrectionTerms> {
    let d = theta.len();
    let per_node = par_map(rule.nodes.len(), |i| {
        let data = &rule.nodes[i as usize];
        let w = rule.weights[i as usize];
        let pr = model.log_density(data, phi, theta).exp();
        let s = model.score_theta(data, phi, theta);
        ensure_finite(&s, "score")?;
        let base = if pr > 0.0 { outer(&s, &s) * (w * pr) } else { DMatrix::zeros(d, d) };
        if k.is_zero() {
            return Ok((base, DMatrix::zeros(d, d), DMatrix::zeros(d, d)));
        }
        let l = l_phi_with_step(model, k, data, phi, theta, config.h_phi)?;
        let gl = grad_theta_l(model, k, data, phi, theta, config)?;
        Ok((base, outer(&s, &gl) * w, outer(&s, &s) * (w * l)))
    })?;
    let mut base = DMatrix::zeros(d, d);
    let mut f1 = DMatrix::zeros(d, d);
    let mut f3 = DMatrix::zeros(d, d);
    for (b, a, c) in per_node {
        base += b;
        f1 += a;
        f3 += c;
    }
    let z = DMatrix::zeros(d, d);
    Ok(CorrectionTerms {
        base,
        base_stderr: z.clone(),
        f1,
        f1_stderr: z.clone(),
        f3,
        f3_stderr: z,
        deterministic: true,
    })
}

fn sampled_corrections(
    model: &dyn ConditionalModel,
    k: &NuisanceCovariance,
    phi: &PhiVector,
    theta: &ThetaVector,
    config: &ApproxConfig,
) -> Result<CorrectionTerms> {
    let d = theta.len();
    let base = conditional_fim(model, phi, theta, config.n_samples, config.seed)?;
    let draws = par_map(config.n_samples, |i| {
        let data = model.sample(phi, theta, &mut stream(config.seed, stage::APPROX, i))?;
        if k.is_zero() {
            return Ok((DMatrix::zeros(d, d), DMatrix::zeros(d, d)));
        }
        let pr = model.log_density(&data, phi, theta).exp();
        if pr.is_nan() || pr < MIN_DENSITY {
            return Err(Error::ExpansionUndefined { density: pr });
        }
        let s = model.score_theta(&data, phi, theta);
        ensure_finite(&s, "score")?;
        let l = l_phi_with_step(model, k, &data, phi, theta, config.h_phi)?;
        let gl = grad_theta_l(model, k, &data, phi, theta, config)?;
        Ok((outer(&s, &gl) / pr, outer(&s, &s) * (l / pr)))
    })?;
    let (a, c): (Vec<_>, Vec<_>) = draws.into_iter().unzip();
    let (f1, f1_stderr) = mean_and_stderr(&a);
    let (f3, f3_stderr) = mean_and_stderr(&c);
    Ok(CorrectionTerms {
        base: base.mean.into_entries(),
        base_stderr: base.stderr,
        f1,
        f1_stderr,
        f3,
        f3_stderr,
        deterministic: false,
    })
}

/// `F(phi, theta)`, `F1` and `F3` at the nominal point.
pub fn correction_terms(
    model: &dyn ConditionalModel,
    k: &NuisanceCovariance,
    phi: &PhiVector,
    theta: &ThetaVector,
    config: &ApproxConfig,
) -> Result<CorrectionTerms> {
    config.validate()?;
    let dims = model.dims();
    if dims.phi != phi.len() || dims.theta != theta.len() || k.dim() != phi.len() {
        return Err(Error::Dimension("model, covariance and evaluation point disagree".into()));
    }
    match model.data_rule(std::slice::from_ref(phi), theta) {
        Some(rule) => rule_corrections(model, k, phi, theta, &rule, config),
        None => sampled_corrections(model, k, phi, theta, config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMethod {
    Quadrature,
    MonteCarlo,
}

impl ExactMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ExactMethod::Quadrature => "quadrature",
            ExactMethod::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApproxFimResult {
    pub base: FisherMatrix,
    pub f1: DMatrix<f64>,
    pub f3: DMatrix<f64>,
    /// `base + f1 + f1^T - f3`; tagged as an approximation, so not required
    /// to be positive semidefinite.
    pub approx: FisherMatrix,
    /// Entrywise standard error of `approx` (zero for quadrature).
    pub approx_stderr: DMatrix<f64>,
    pub exact: MatrixEstimate,
    pub exact_method: ExactMethod,
    /// Max-abs entry of `approx - exact`.
    pub error_norm: f64,
    /// Standard error bound on `error_norm`.
    pub error_stderr: f64,
}

/// Exact marginal FIM by quadrature over `phi` and the data space.
fn quadrature_marginal_fim(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    theta: &ThetaVector,
    integrator: &Integrator,
) -> Result<Option<MatrixEstimate>> {
    if prior.dim() != 1 || !matches!(integrator, Integrator::Grid { .. }) {
        return Ok(None);
    }
    let rule = integrator.realize(prior, theta)?;
    let Some(data_rule) = model.data_rule(&rule.nodes, theta) else {
        return Ok(None);
    };
    let d = theta.len();
    let terms = par_map(data_rule.nodes.len(), |i| {
        let data = &data_rule.nodes[i as usize];
        let moments = match rule.score_moments(model, prior, data, theta) {
            Ok(m) => m,
            // data points outside the support of every nuisance node carry no mass
            Err(Error::DegenerateMarginal) => return Ok(DMatrix::zeros(d, d)),
            Err(e) => return Err(e),
        };
        ensure_finite(&moments.mean, "global score")?;
        let mass = data_rule.weights[i as usize] * moments.log_marginal.exp();
        Ok(outer(&moments.mean, &moments.mean) * mass)
    })?;
    let mut f = DMatrix::zeros(d, d);
    for t in terms {
        f += t;
    }
    let n = data_rule.nodes.len() * rule.len();
    Ok(Some(MatrixEstimate::exact(FisherMatrix::new(f, BlockTag::Theta)?, n.max(2))))
}

/// Mean and diagonal covariance implied by the prior's support, when it has them.
fn prior_moments(prior: &dyn NuisancePrior, theta: &ThetaVector) -> (DVector<f64>, DVector<f64>) {
    match prior.support(theta) {
        Support::Point(p) => {
            let n = p.len();
            (p.into_inner(), DVector::zeros(n))
        }
        Support::Unbounded { mean, sd } => (mean, sd.map(|s| s * s)),
        Support::Bounded { lo, hi } => ((&lo + &hi) * 0.5, (&hi - &lo).map(|w| w * w / 12.0)),
    }
}

fn check_prior_matches(
    prior: &dyn NuisancePrior,
    k: &NuisanceCovariance,
    nominal: &PhiVector,
    theta: &ThetaVector,
) -> Result<()> {
    let (mean, var) = prior_moments(prior, theta);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    if mean.len() != nominal.len() || mean.iter().zip(nominal.iter()).any(|(a, b)| !close(*a, *b)) {
        return Err(Error::InvalidParameter("nominal phi must equal the prior mean".into()));
    }
    let km = k.matrix();
    for r in 0..km.nrows() {
        for c in 0..km.ncols() {
            let want = if r == c { var[r] } else { 0.0 };
            if !close(km[(r, c)], want) {
                return Err(Error::InvalidParameter("covariance must equal the prior covariance".into()));
            }
        }
    }
    Ok(())
}

/// Expansion at `phi_nominal` compared with the exact marginal FIM under `prior`.
pub fn approx_fim(
    model: &dyn ConditionalModel,
    prior: &dyn NuisancePrior,
    k: &NuisanceCovariance,
    phi_nominal: &PhiVector,
    theta: &ThetaVector,
    config: &ApproxConfig,
) -> Result<ApproxFimResult> {
    config.validate()?;
    check_dims(model, prior, theta)?;
    check_prior_matches(prior, k, phi_nominal, theta)?;
    let terms = correction_terms(model, k, phi_nominal, theta, config)?;

    let sym = &terms.f1 + terms.f1.transpose();
    let approx = FisherMatrix::approximation(&terms.base + &sym - &terms.f3, BlockTag::Theta)?;
    let f1_se_sym = terms.f1_stderr.zip_map(&terms.f1_stderr.transpose(), |a, b| a + b);
    let approx_stderr = terms.base_stderr.zip_map(&f1_se_sym, f64::hypot).zip_map(&terms.f3_stderr, f64::hypot);

    let (exact, exact_method) = match quadrature_marginal_fim(model, prior, theta, &config.integrator)? {
        Some(e) => (e, ExactMethod::Quadrature),
        None => {
            let integ = match config.integrator {
                Integrator::Grid { .. } => config.integrator,
                Integrator::MonteCarlo { .. } => Integrator::Grid { nodes_per_axis: 64 },
            };
            (marginal_fim(model, prior, theta, config.exact_samples, &integ, config.seed)?, ExactMethod::MonteCarlo)
        }
    };
    let diff = approx.entries() - exact.mean.entries();
    let error_norm = diff.amax();
    let error_stderr = approx_stderr.zip_map(&exact.stderr, f64::hypot).max();
    Ok(ApproxFimResult {
        base: FisherMatrix::new(terms.base, BlockTag::Theta)?,
        f1: terms.f1,
        f3: terms.f3,
        approx,
        approx_stderr,
        exact,
        exact_method,
        error_norm,
        error_stderr,
    })
}

/// A family of nuisance priors with covariance `scale^2 K(1)` around a fixed
/// nominal value.
pub trait ScaledPriorFamily: Send + Sync {
    fn prior(&self, scale: f64) -> Result<Box<dyn NuisancePrior>>;
    fn covariance(&self, scale: f64) -> Result<NuisanceCovariance>;
    fn nominal(&self) -> PhiVector;
}

/// Scalar Gaussian priors `N(mean, (scale * sd)^2)`; scale 0 is a point mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPriorFamily {
    pub mean: f64,
    pub sd: f64,
    pub theta_dim: usize,
}

impl ScaledPriorFamily for GaussianPriorFamily {
    fn prior(&self, scale: f64) -> Result<Box<dyn NuisancePrior>> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be nonnegative, got {scale}")));
        }
        if scale * self.sd == 0.0 {
            return Ok(Box::new(PointMassPrior::new(self.nominal(), self.theta_dim)));
        }
        let offset = DVector::from_element(1, self.mean);
        let coupling = DMatrix::zeros(1, self.theta_dim);
        Ok(Box::new(GaussianNuisancePrior::new(offset, coupling, DVector::from_element(1, scale * self.sd))?))
    }

    fn covariance(&self, scale: f64) -> Result<NuisanceCovariance> {
        NuisanceCovariance::scalar((scale * self.sd).powi(2))
    }

    fn nominal(&self) -> PhiVector {
        PhiVector::scalar(self.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub scale: f64,
    pub error_norm: f64,
    pub error_stderr: f64,
    pub approx: DMatrix<f64>,
    pub exact: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `ln error` against `ln scale` over rows with
    /// positive scale and error; `None` with fewer than two such rows.
    pub slope: Option<f64>,
    /// `error[i] / error[i + 1]` for consecutive rows (`None` when the
    /// denominator is zero).
    pub ratios: Vec<Option<f64>>,
    /// Errors nonincreasing down the ladder up to 3-sigma slack.
    pub monotone: bool,
}

pub fn scaling_study(
    model: &dyn ConditionalModel,
    family: &dyn ScaledPriorFamily,
    theta: &ThetaVector,
    scales: &[f64],
    config: &ApproxConfig,
) -> Result<ScalingTable> {
    if scales.len() < 2 {
        return Err(Error::InvalidParameter("a scaling study needs at least two scales".into()));
    }
    if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || scales.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidParameter("scales must be nonnegative and strictly descending".into()));
    }
    let nominal = family.nominal();
    let rows = par_map(scales.len(), |i| {
        let scale = scales[i as usize];
        let prior = family.prior(scale)?;
        let k = family.covariance(scale)?;
        let r = approx_fim(model, prior.as_ref(), &k, &nominal, theta, config)?;
        Ok(ScalingRow {
            scale,
            error_norm: r.error_norm,
            error_stderr: r.error_stderr,
            approx: r.approx.into_entries(),
            exact: r.exact.mean.into_entries(),
        })
    })?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.scale > 0.0 && r.error_norm > 0.0)
        .map(|r| (r.scale.ln(), r.error_norm.ln()))
        .collect();
    let slope = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    let ratios = rows.windows(2).map(|w| (w[1].error_norm > 0.0).then(|| w[0].error_norm / w[1].error_norm)).collect();
    let monotone = rows
        .windows(2)
        .all(|w| w[1].error_norm <= w[0].error_norm + SIGMA_SLACK * w[0].error_stderr.hypot(w[1].error_stderr));
    Ok(ScalingTable { rows, slope, ratios, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussianLocation, PhiFreeGaussian, PoissonDoor};
    use std::f64::consts::FRAC_PI_2;

    fn obs(v: f64) -> DataSample {
        DataSample::Attributes(DMatrix::from_element(1, 1, v))
    }

    fn ln_normal(x: f64, m: f64, s: f64) -> f64 {
        -0.5 * ((x - m) / s).powi(2) - (s * (2.0 * std::f64::consts::PI).sqrt()).ln()
    }

    #[test]
    fn l_phi_vanishes_for_zero_covariance() {
        let m = GaussianLocation::new(1, 1.0).unwrap();
        let v = l_phi_apply(
            &m,
            &NuisanceCovariance::zeros(1),
            &obs(0.3),
            &PhiVector::scalar(0.1),
            &ThetaVector::scalar(0.0),
        );
        assert_eq!(v.unwrap(), 0.0);
    }

    #[test]
    fn l_phi_gaussian_hermite_form() {
        // d^2/dphi^2 N(a; theta + phi, 1) = N (z^2 - 1), z = a - theta - phi
        let m = GaussianLocation::new(1, 1.0).unwrap();
        let (a, phi, c) = (0.9, 0.2, 0.3);
        let z: f64 = a - phi;
        let expected = 0.5 * c * ln_normal(a, phi, 1.0).exp() * (z * z - 1.0);
        let k = NuisanceCovariance::scalar(c).unwrap();
        let v = l_phi_apply(&m, &k, &obs(a), &PhiVector::scalar(phi), &ThetaVector::scalar(0.0)).unwrap();
        assert!((v - expected).abs() < 1e-14, "{v} vs {expected}");
    }

    #[test]
    fn finite_difference_l_phi_matches_analytic() {
        struct NoHessian(GaussianLocation);
        impl ConditionalModel for NoHessian {
            fn dims(&self) -> crate::contracts::ModelDims {
                self.0.dims()
            }
            fn log_density(&self, d: &DataSample, p: &PhiVector, t: &ThetaVector) -> f64 {
                self.0.log_density(d, p, t)
            }
            fn score_theta(&self, d: &DataSample, p: &PhiVector, t: &ThetaVector) -> DVector<f64> {
                self.0.score_theta(d, p, t)
            }
            fn score_phi(&self, d: &DataSample, p: &PhiVector, t: &ThetaVector) -> DVector<f64> {
                self.0.score_phi(d, p, t)
            }
            fn sample(&self, p: &PhiVector, t: &ThetaVector, rng: &mut dyn rand::RngCore) -> Result<DataSample> {
                self.0.sample(p, t, rng)
            }
        }
        let inner = GaussianLocation::new(1, 1.0).unwrap();
        let k = NuisanceCovariance::scalar(0.5).unwrap();
        let args = (obs(1.3), PhiVector::scalar(0.1), ThetaVector::scalar(0.2));
        let a = l_phi_apply(&inner, &k, &args.0, &args.1, &args.2).unwrap();
        let n = l_phi_apply(&NoHessian(inner), &k, &args.0, &args.1, &args.2).unwrap();
        assert!((a - n).abs() < 1e-5 * a.abs().max(1.0), "{a} vs {n}");
    }

    #[test]
    fn expansion_of_the_log_density() {
        let m = GaussianLocation::new(1, 1.0).unwrap();
        let theta = ThetaVector::scalar(0.4);
        let phi = PhiVector::scalar(0.0);
        assert_eq!(
            expanded_log_density(&m, &NuisanceCovariance::zeros(1), &obs(0.1), &phi, &theta).unwrap(),
            m.log_density(&obs(0.1), &phi, &theta)
        );
        let tau: f64 = 0.1;
        let k = NuisanceCovariance::scalar(tau * tau).unwrap();
        let v = expanded_log_density(&m, &k, &obs(0.4), &phi, &theta).unwrap();
        let exact = ln_normal(0.4, 0.4, (1.0 + tau * tau).sqrt());
        assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");

        let free = PhiFreeGaussian::new(1.0).unwrap();
        let big = NuisanceCovariance::scalar(7.0).unwrap();
        assert_eq!(
            expanded_log_density(&free, &big, &obs(0.1), &phi, &theta).unwrap(),
            free.log_density(&obs(0.1), &phi, &theta)
        );
    }

    #[test]
    fn expansion_undefined_at_zero_density() {
        let door = PoissonDoor::default();
        let data = DataSample::Counts(vec![1, 0, 0, 0, 0]);
        let k = NuisanceCovariance::scalar(0.01).unwrap();
        let r = expanded_log_density(&door, &k, &data, &PhiVector::scalar(FRAC_PI_2), &ThetaVector::scalar(0.0));
        assert!(matches!(r, Err(Error::ExpansionUndefined { .. })));
    }

    fn gaussian_case(tau: f64) -> ApproxFimResult {
        let m = GaussianLocation::new(1, 1.0).unwrap();
        let family = GaussianPriorFamily { mean: 0.0, sd: tau, theta_dim: 1 };
        let prior = family.prior(1.0).unwrap();
        approx_fim(
            &m,
            prior.as_ref(),
            &family.covariance(1.0).unwrap(),
            &family.nominal(),
            &ThetaVector::scalar(0.0),
            &ApproxConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_expansion_accuracy() {
        let r = gaussian_case(0.1);
        assert_eq!(r.exact_method, ExactMethod::Quadrature);
        let exact = r.exact.mean.entries()[(0, 0)];
        assert!((exact - 1.0 / 1.01).abs() < 1e-8, "{exact}");
        assert!(r.error_norm < 5e-4, "{}", r.error_norm);
        assert!(r.approx.is_approximation());
        // f1 + f1^T is symmetric exactly
        let sym = &r.f1 + r.f1.transpose();
        assert_eq!(sym, sym.transpose());
    }

    #[test]
    fn zero_covariance_gives_the_conditional_fim() {
        let r = gaussian_case(0.0);
        assert_eq!(r.approx.entries(), r.base.entries());
        assert_eq!(r.error_norm, 0.0);
    }

    #[test]
    fn phi_free_corrections_vanish() {
        let m = PhiFreeGaussian::new(1.0).unwrap();
        let k = NuisanceCovariance::scalar(0.3).unwrap();
        let t = correction_terms(&m, &k, &PhiVector::scalar(0.0), &ThetaVector::scalar(0.0), &ApproxConfig::default())
            .unwrap();
        assert_eq!(t.f1[(0, 0)], 0.0);
        assert_eq!(t.f3[(0, 0)], 0.0);
    }

    #[test]
    fn closed_door_expansion_is_positive() {
        let door = PoissonDoor::default();
        let spread: f64 = 0.1;
        let k = NuisanceCovariance::scalar(spread * spread).unwrap();
        let theta = ThetaVector::scalar(0.0);
        let t = correction_terms(&door, &k, &PhiVector::scalar(FRAC_PI_2), &theta, &ApproxConfig::default()).unwrap();
        assert!(t.deterministic);
        assert_eq!(t.base[(0, 0)], 0.0);
        let approx = t.base[(0, 0)] + 2.0 * t.f1[(0, 0)] - t.f3[(0, 0)];
        // L pr at the closed door is nonzero only for a single photon, giving
        // f1 = f3 = spread^2 sum c_k u_k^2
        let c = door.source_rates(0.0);
        let u = door.rate_log_slopes(0.0);
        let expected: f64 = spread * spread * c.iter().zip(&u).map(|(ck, uk)| ck * uk * uk).sum::<f64>();
        assert!((approx - expected).abs() < 1e-6 * expected, "{approx} vs {expected}");
        assert!(approx > 0.0);
    }

    #[test]
    fn scaling_ladder() {
        let m = GaussianLocation::new(1, 1.0).unwrap();
        let family = GaussianPriorFamily { mean: 0.0, sd: 0.1, theta_dim: 1 };
        let table =
            scaling_study(&m, &family, &ThetaVector::scalar(0.0), &[1.0, 0.5, 0.0], &ApproxConfig::default()).unwrap();
        let ratio = table.ratios[0].unwrap();
        assert!((8.0..=24.0).contains(&ratio), "{ratio}");
        assert_eq!(table.rows[2].error_norm, 0.0);
        assert!(table.monotone);
        assert!(scaling_study(&m, &family, &ThetaVector::scalar(0.0), &[0.5, 1.0], &ApproxConfig::default()).is_err());
    }

    #[test]
    fn prior_must_match_the_expansion_point() {
        let m = GaussianLocation::new(1, 1.0).unwrap();
        let prior = GaussianNuisancePrior::independent(0.0, 0.1).unwrap();
        let k = NuisanceCovariance::scalar(0.02).unwrap();
        let r =
            approx_fim(&m, &prior, &k, &PhiVector::scalar(0.0), &ThetaVector::scalar(0.0), &ApproxConfig::default());
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
        assert!(NuisanceCovariance::scalar(-1.0).is_err());
    }
}
