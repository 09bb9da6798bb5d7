//! JSON report layout.
//!
//! Field order is the declaration order below and never changes between runs.
//! Matrices are stored row-major with their block tag and dimensions.
//! `runtime_seconds` is always the last top-level field so that payloads can
//! be compared byte for byte after dropping that one line.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use nuisfim::{BlockEstimate, MatrixEstimate};

use crate::config::RunConfig;

pub const ARTIFACT_NAME: &str = "nuisfim";
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub block_tag: String,
    pub rows: usize,
    pub cols: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_mean_stderr: Option<Vec<f64>>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl MatrixJson {
    pub fn from_estimate(e: &MatrixEstimate) -> Self {
        let d = e.dim();
        Self {
            block_tag: e.mean.tag().as_str().to_string(),
            rows: d,
            cols: d,
            mean: row_major(e.mean.entries()),
            stderr: row_major(&e.stderr),
            n_samples: e.n_samples,
            score_mean: Some(e.score_mean_diagnostic.as_slice().to_vec()),
            score_mean_stderr: Some(e.score_mean_stderr.as_slice().to_vec()),
        }
    }

    pub fn from_block(tag: &str, b: &BlockEstimate) -> Self {
        Self {
            block_tag: tag.to_string(),
            rows: b.mean.nrows(),
            cols: b.mean.ncols(),
            mean: row_major(&b.mean),
            stderr: row_major(&b.stderr),
            n_samples: b.n_samples,
            score_mean: None,
            score_mean_stderr: None,
        }
    }

    /// A matrix without an uncertainty estimate (zero stderr).
    pub fn exact(tag: &str, m: &DMatrix<f64>, stderr: Option<&DMatrix<f64>>, n_samples: usize) -> Self {
        let zeros = DMatrix::zeros(m.nrows(), m.ncols());
        Self {
            block_tag: tag.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
            mean: row_major(m),
            stderr: row_major(stderr.unwrap_or(&zeros)),
            n_samples,
            score_mean: None,
            score_mean_stderr: None,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.mean)
    }

    fn check(&self, what: &str) -> Result<(), String> {
        let n = self.rows.checked_mul(self.cols).ok_or_else(|| format!("{what}: dimensions overflow"))?;
        if self.mean.len() != n || self.stderr.len() != n {
            return Err(format!("{what}: expected {n} entries for {}x{}", self.rows, self.cols));
        }
        if !matches!(self.block_tag.as_str(), "theta" | "phi" | "joint" | "theta_phi" | "phi_theta" | "residual") {
            return Err(format!("{what}: unknown block tag `{}`", self.block_tag));
        }
        for v in [&self.score_mean, &self.score_mean_stderr].into_iter().flatten() {
            if v.len() != self.rows {
                return Err(format!("{what}: score mean length {} for {} rows", v.len(), self.rows));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorJson {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes_per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_draws: Option<usize>,
    /// How unbounded priors are handled on a grid.
    pub truncation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyPoint {
    pub theta: Vec<f64>,
    pub marginal: MatrixJson,
    pub averaged_conditional: MatrixJson,
    pub nuisance_info: MatrixJson,
    pub rhs: MatrixJson,
    pub gap: MatrixJson,
    pub direct_gap: MatrixJson,
    pub min_gap_eigenvalue: f64,
    pub gap_tolerance: f64,
    pub holds: bool,
    pub identity_residual: f64,
    pub identity_tolerance: f64,
    pub identity_holds: bool,
    pub crb_marginal: Option<MatrixJson>,
    pub crb_rhs: Option<MatrixJson>,
    pub crb_ordering_holds: Option<bool>,
    pub score_means_within_3sigma: bool,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyPayload {
    pub integrator: IntegratorJson,
    pub points: Vec<VerifyPoint>,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesPayload {
    pub integrator: IntegratorJson,
    pub theta_prior: String,
    pub f_tt: MatrixJson,
    pub f_tp: MatrixJson,
    pub f_pp: MatrixJson,
    pub assembled: MatrixJson,
    pub components: BTreeMap<String, MatrixJson>,
    pub decomposition_residuals: BTreeMap<String, MatrixJson>,
    pub f_m: MatrixJson,
    pub averaged_marginal: MatrixJson,
    pub f11: MatrixJson,
    pub marginal_identity_residual: MatrixJson,
    pub identity_residual: f64,
    pub identity_holds: bool,
    pub decomposition_holds: bool,
    pub ordering_holds: bool,
    pub ordering_min_eigenvalue: f64,
    pub ordering_tolerance: f64,
    pub delta_theta: Vec<f64>,
    pub quadratic_marginal: f64,
    pub quadratic_joint: f64,
    pub quadratic_tolerance: f64,
    pub quadratic_holds: bool,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxPoint {
    pub theta: Vec<f64>,
    pub base: MatrixJson,
    pub f1: MatrixJson,
    pub f3: MatrixJson,
    pub approx: MatrixJson,
    pub exact: MatrixJson,
    pub exact_method: String,
    pub error_norm: f64,
    pub error_stderr: f64,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxPayload {
    pub integrator: IntegratorJson,
    pub nominal_phi: Vec<f64>,
    pub prior_variance: f64,
    pub points: Vec<ApproxPoint>,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingRowJson {
    pub scale: f64,
    pub error_norm: f64,
    pub error_stderr: f64,
    pub approx: MatrixJson,
    pub exact: MatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingPoint {
    pub theta: Vec<f64>,
    pub rows: Vec<ScalingRowJson>,
    pub slope: Option<f64>,
    pub ratios: Vec<Option<f64>>,
    pub monotone: bool,
    pub first_ratio_in_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingPayload {
    pub integrator: IntegratorJson,
    pub nominal_phi: Vec<f64>,
    pub prior_sd: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub points: Vec<ScalingPoint>,
    pub all_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    Verify(VerifyPayload),
    Bayes(Box<BayesPayload>),
    Approx(ApproxPayload),
    Scaling(ScalingPayload),
}

impl Payload {
    pub fn all_hold(&self) -> bool {
        match self {
            Payload::Verify(p) => p.all_hold,
            Payload::Bayes(p) => p.all_hold,
            Payload::Approx(p) => p.all_hold,
            Payload::Scaling(p) => p.all_hold,
        }
    }

    fn matrices(&self) -> Vec<(&'static str, &MatrixJson)> {
        let mut out = Vec::new();
        match self {
            Payload::Verify(p) => {
                for pt in &p.points {
                    out.extend([
                        ("marginal", &pt.marginal),
                        ("averaged_conditional", &pt.averaged_conditional),
                        ("nuisance_info", &pt.nuisance_info),
                        ("rhs", &pt.rhs),
                        ("gap", &pt.gap),
                        ("direct_gap", &pt.direct_gap),
                    ]);
                    out.extend(pt.crb_marginal.iter().map(|m| ("crb_marginal", m)));
                    out.extend(pt.crb_rhs.iter().map(|m| ("crb_rhs", m)));
                }
            }
            Payload::Bayes(p) => {
                out.extend([
                    ("f_tt", &p.f_tt),
                    ("f_tp", &p.f_tp),
                    ("f_pp", &p.f_pp),
                    ("assembled", &p.assembled),
                    ("f_m", &p.f_m),
                    ("averaged_marginal", &p.averaged_marginal),
                    ("f11", &p.f11),
                    ("marginal_identity_residual", &p.marginal_identity_residual),
                ]);
                out.extend(p.components.values().map(|m| ("component", m)));
                out.extend(p.decomposition_residuals.values().map(|m| ("residual", m)));
            }
            Payload::Approx(p) => {
                for pt in &p.points {
                    out.extend([
                        ("base", &pt.base),
                        ("f1", &pt.f1),
                        ("f3", &pt.f3),
                        ("approx", &pt.approx),
                        ("exact", &pt.exact),
                    ]);
                }
            }
            Payload::Scaling(p) => {
                for row in p.points.iter().flat_map(|pt| &pt.rows) {
                    out.extend([("approx", &row.approx), ("exact", &row.exact)]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub artifact: Artifact,
    pub study: String,
    pub model: String,
    /// Canonical config text; re-running it reproduces the payload.
    pub config: String,
    pub payload: Payload,
    pub all_hold: bool,
    pub runtime_seconds: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    artifact: Artifact,
    study: String,
    model: String,
    config: String,
    payload: serde_json::Value,
    all_hold: bool,
    runtime_seconds: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inconsistent report: {0}")]
    Inconsistent(String),
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report fields are always serializable");
        s.push('\n');
        s
    }

    /// Parses a report and checks that it is self-consistent: matrix shapes
    /// match their data, the verdict matches the payload, and the echoed
    /// config re-parses.
    pub fn parse(text: &str) -> Result<Report, ReportError> {
        let raw: RawReport = serde_json::from_str(text)?;
        let payload = match raw.study.as_str() {
            "verify" => Payload::Verify(serde_json::from_value(raw.payload)?),
            "bayes" => Payload::Bayes(Box::new(serde_json::from_value(raw.payload)?)),
            "approx" => Payload::Approx(serde_json::from_value(raw.payload)?),
            "scaling" => Payload::Scaling(serde_json::from_value(raw.payload)?),
            other => return Err(ReportError::Inconsistent(format!("unknown study `{other}`"))),
        };
        for (what, m) in payload.matrices() {
            m.check(what).map_err(ReportError::Inconsistent)?;
        }
        if payload.all_hold() != raw.all_hold {
            return Err(ReportError::Inconsistent("top-level verdict disagrees with payload".into()));
        }
        let cfg = RunConfig::parse(&raw.config).map_err(|e| ReportError::Inconsistent(format!("config echo: {e}")))?;
        if cfg.model.as_str() != raw.model {
            return Err(ReportError::Inconsistent("model disagrees with config echo".into()));
        }
        Ok(Report {
            artifact: raw.artifact,
            study: raw.study,
            model: raw.model,
            config: raw.config,
            payload,
            all_hold: raw.all_hold,
            runtime_seconds: raw.runtime_seconds,
        })
    }
}

pub fn vector(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

/// Drops the `runtime_seconds` line of a pretty-printed report.
pub fn strip_runtime(json: &str) -> String {
    json.lines().filter(|l| !l.trim_start().starts_with("\"runtime_seconds\"")).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nuisfim::{BlockTag, FisherMatrix};

    fn estimate() -> MatrixEstimate {
        let m = FisherMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]), BlockTag::Joint).unwrap();
        let mut e = MatrixEstimate::exact(m, 10);
        e.stderr[(0, 1)] = 0.5;
        e
    }

    #[test]
    fn matrices_are_row_major() {
        let j = MatrixJson::from_estimate(&estimate());
        assert_eq!(j.block_tag, "joint");
        assert_eq!((j.rows, j.cols), (2, 2));
        assert_eq!(j.mean, vec![2.0, 1.0, 1.0, 3.0]);
        assert_eq!(j.stderr, vec![0.0, 0.5, 0.0, 0.0]);
        let b = BlockEstimate {
            mean: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            stderr: DMatrix::zeros(1, 2),
            n_samples: 3,
        };
        let j = MatrixJson::from_block("theta_phi", &b);
        assert_eq!(j.to_matrix(), b.mean);
        assert!(j.check("b").is_ok());
    }

    #[test]
    fn inconsistent_shapes_are_rejected() {
        let mut j = MatrixJson::from_estimate(&estimate());
        j.mean.pop();
        assert!(j.check("m").is_err());
        let mut j = MatrixJson::from_estimate(&estimate());
        j.block_tag = "banana".into();
        assert!(j.check("m").is_err());
    }

    #[test]
    fn strip_runtime_removes_one_line() {
        let s = "{\n  \"a\": 1,\n  \"runtime_seconds\": 0.25\n}";
        assert_eq!(strip_runtime(s), "{\n  \"a\": 1,\n}");
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(Report::parse("").is_err());
        assert!(Report::parse("{}").is_err());
        assert!(Report::parse("[1,2]").is_err());
    }
}
