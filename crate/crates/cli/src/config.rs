//! Run configuration: flat `key = value` text with dotted section names.
//!
//! ```text
//! # comments run to the end of the line
//! model.id = gaussian_location
//! model.tau = 0.5
//! theta = 0.0, 0.3
//! seed = 7
//! samples.n_data = 20000
//! integrator.kind = grid
//! integrator.nodes = 64
//! ```
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `model.id` | required | zoo model identifier |
//! | `model.<param>` | model default | model parameter |
//! | `study` | none | must match the subcommand when present |
//! | `theta` | `0` | evaluation points (scalar models: one value per point) |
//! | `seed` | required | 64-bit master seed |
//! | `samples.n_data` | 20000 | data draws |
//! | `samples.n_phi` | 200 | nuisance draws |
//! | `samples.n_theta` | 200 | parameter draws |
//! | `integrator.kind` | `grid` | `grid` or `monte_carlo` |
//! | `integrator.nodes` | 64 | Gauss–Legendre nodes per nuisance axis |
//! | `integrator.n_draws` | 1000 | prior draws for `monte_carlo` |
//! | `tolerance.approx_error` | 5e-4 | largest accepted expansion error |
//! | `tolerance.ratio_min`, `tolerance.ratio_max` | 8, 24 | accepted error ratio between the first two scales |
//! | `approx.scales` | `1, 0.5, 0.25` | descending prior scales |
//! | `approx.h_theta`, `approx.h_phi` | 1e-4 | finite-difference steps |
//! | `approx.n_samples` | 20000 | Monte Carlo draws for corrections without a data rule |
//! | `approx.exact_samples` | 20000 | Monte Carlo draws for the exact reference without a data rule |
//! | `bayes.delta_theta` | `1` | displacement for the quadratic figure of merit |
//! | `bayes.prior_mean`, `bayes.prior_sd` | 0, 1 | parameter prior for models without one |
//! | `output.report` | stdout | report path |
//! | `output.csv` | none | scaling table as CSV |
//!
//! Unknown and duplicate keys are errors. [`RunConfig::to_canonical`] writes
//! every key explicitly and re-parses to an equal config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nuisfim::marginal::{Integrator, MAX_GRID_DIM, MIN_MC_DRAWS};
use nuisfim::models::{ModelId, ParamMap, ZooModel};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("`{key}`: {msg}")]
    InvalidValue { key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown study `{0}`")]
    UnknownStudy(String),
    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    /// Unknown models and studies are usage errors; everything else is a
    /// malformed configuration.
    pub fn is_usage(&self) -> bool {
        matches!(self, ConfigError::UnknownModel(_) | ConfigError::UnknownStudy(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Study {
    Verify,
    Bayes,
    Approx,
    Scaling,
}

impl Study {
    pub const ALL: [Study; 4] = [Study::Verify, Study::Bayes, Study::Approx, Study::Scaling];

    pub fn as_str(self) -> &'static str {
        match self {
            Study::Verify => "verify",
            Study::Bayes => "bayes",
            Study::Approx => "approx",
            Study::Scaling => "scaling",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Study {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Study::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| ConfigError::UnknownStudy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegratorSpec {
    Grid { nodes: usize },
    MonteCarlo { n_draws: usize },
}

impl IntegratorSpec {
    /// The core integrator; Monte Carlo draws use the run seed.
    pub fn build(self, seed: u64) -> Integrator {
        match self {
            IntegratorSpec::Grid { nodes } => Integrator::Grid { nodes_per_axis: nodes },
            IntegratorSpec::MonteCarlo { n_draws } => Integrator::MonteCarlo { n_draws, seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub approx_error: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSettings {
    pub scales: Vec<f64>,
    pub h_theta: f64,
    pub h_phi: f64,
    pub n_samples: usize,
    pub exact_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesSettings {
    pub delta_theta: Vec<f64>,
    pub prior_mean: f64,
    pub prior_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelId,
    /// Model parameters with defaults filled in.
    pub params: ParamMap,
    pub study: Option<Study>,
    pub theta: Vec<f64>,
    pub seed: u64,
    pub n_data: usize,
    pub n_phi: usize,
    pub n_theta: usize,
    pub integrator: IntegratorSpec,
    pub tolerance: Tolerances,
    pub approx: ApproxSettings,
    pub bayes: BayesSettings,
    pub report_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "model.id",
    "study",
    "theta",
    "seed",
    "samples.n_data",
    "samples.n_phi",
    "samples.n_theta",
    "integrator.kind",
    "integrator.nodes",
    "integrator.n_draws",
    "tolerance.approx_error",
    "tolerance.ratio_min",
    "tolerance.ratio_max",
    "approx.scales",
    "approx.h_theta",
    "approx.h_phi",
    "approx.n_samples",
    "approx.exact_samples",
    "bayes.delta_theta",
    "bayes.prior_mean",
    "bayes.prior_sd",
    "output.report",
    "output.csv",
];

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|part| {
            !part.is_empty() && part.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        })
}

/// Raw `key -> (line, value)` entries of a config text.
fn entries(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax { line, msg: "expected `key = value`".into() });
        };
        let (key, value) = (key.trim(), value.trim());
        if !valid_key(key) {
            return Err(ConfigError::Syntax { line, msg: format!("malformed key `{key}`") });
        }
        if value.is_empty() {
            return Err(ConfigError::Syntax { line, msg: format!("empty value for `{key}`") });
        }
        if out.insert(key.to_string(), (line, value.to_string())).is_some() {
            return Err(ConfigError::Duplicate { line, key: key.to_string() });
        }
    }
    Ok(out)
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { key: key.to_string(), msg: msg.into() }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| invalid(key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(invalid(key, "must be finite"));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| invalid(key, format!("`{v}` is not a nonnegative integer")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|item| parse_f64(key, item.trim())).collect()
}

struct Fields(BTreeMap<String, (usize, String)>);

impl Fields {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key).map(|(_, v)| v)
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.take(key).map_or(Ok(default), |v| parse_f64(key, &v))
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.take(key).map_or(Ok(default), |v| parse_usize(key, &v))
    }

    fn list_or(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        self.take(key).map_or_else(|| Ok(default.to_vec()), |v| parse_list(key, &v))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw = entries(text)?;
        for (key, (line, _)) in &raw {
            let known = KEYS.contains(&key.as_str()) || (key.starts_with("model.") && key.matches('.').count() == 1);
            if !known {
                return Err(ConfigError::UnknownKey { line: *line, key: key.clone() });
            }
        }
        let mut f = Fields(raw);

        let model: ModelId = {
            let id = f.take("model.id").ok_or(ConfigError::Missing("model.id"))?;
            id.parse().map_err(|_| ConfigError::UnknownModel(id))?
        };
        let mut given = ParamMap::new();
        let model_keys: Vec<String> = f.0.keys().filter(|k| k.starts_with("model.")).cloned().collect();
        for key in model_keys {
            let (line, v) = f.0.remove(&key).expect("key listed above");
            let name = &key["model.".len()..];
            if !model.defaults().iter().any(|(k, _)| *k == name) {
                return Err(ConfigError::UnknownKey { line, key });
            }
            given.insert(name.to_string(), parse_f64(&key, &v)?);
        }
        let params = model.resolve(&given).map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let study = f.take("study").map(|s| s.parse()).transpose()?;
        let theta = f.list_or("theta", &[0.0])?;
        let seed = {
            let v = f.take("seed").ok_or(ConfigError::Missing("seed"))?;
            v.parse::<u64>().map_err(|_| invalid("seed", format!("`{v}` is not a 64-bit unsigned integer")))?
        };
        let n_data = f.usize_or("samples.n_data", 20_000)?;
        let n_phi = f.usize_or("samples.n_phi", 200)?;
        let n_theta = f.usize_or("samples.n_theta", 200)?;

        let kind = f.take("integrator.kind").unwrap_or_else(|| "grid".into());
        let nodes = f.take("integrator.nodes");
        let draws = f.take("integrator.n_draws");
        let integrator = match kind.as_str() {
            "grid" => {
                if draws.is_some() {
                    return Err(invalid("integrator.n_draws", "only valid with `integrator.kind = monte_carlo`"));
                }
                IntegratorSpec::Grid { nodes: nodes.map_or(Ok(64), |v| parse_usize("integrator.nodes", &v))? }
            }
            "monte_carlo" => {
                if nodes.is_some() {
                    return Err(invalid("integrator.nodes", "only valid with `integrator.kind = grid`"));
                }
                IntegratorSpec::MonteCarlo {
                    n_draws: draws.map_or(Ok(1000), |v| parse_usize("integrator.n_draws", &v))?,
                }
            }
            other => {
                return Err(invalid("integrator.kind", format!("expected `grid` or `monte_carlo`, got `{other}`")))
            }
        };

        let tolerance = Tolerances {
            approx_error: f.f64_or("tolerance.approx_error", 5e-4)?,
            ratio_min: f.f64_or("tolerance.ratio_min", 8.0)?,
            ratio_max: f.f64_or("tolerance.ratio_max", 24.0)?,
        };
        let approx = ApproxSettings {
            scales: f.list_or("approx.scales", &[1.0, 0.5, 0.25])?,
            h_theta: f.f64_or("approx.h_theta", 1e-4)?,
            h_phi: f.f64_or("approx.h_phi", 1e-4)?,
            n_samples: f.usize_or("approx.n_samples", 20_000)?,
            exact_samples: f.usize_or("approx.exact_samples", 20_000)?,
        };
        let bayes = BayesSettings {
            delta_theta: f.list_or("bayes.delta_theta", &[1.0])?,
            prior_mean: f.f64_or("bayes.prior_mean", 0.0)?,
            prior_sd: f.f64_or("bayes.prior_sd", 1.0)?,
        };
        let report_path = f.take("output.report").map(PathBuf::from);
        let csv_path = f.take("output.csv").map(PathBuf::from);
        debug_assert!(f.0.is_empty(), "unconsumed keys {:?}", f.0.keys());

        let cfg = RunConfig {
            model,
            params,
            study,
            theta,
            seed,
            n_data,
            n_phi,
            n_theta,
            integrator,
            tolerance,
            approx,
            bayes,
            report_path,
            csv_path,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every invariant that can be checked before sampling.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, n) in [
            ("samples.n_data", self.n_data),
            ("samples.n_phi", self.n_phi),
            ("samples.n_theta", self.n_theta),
            ("approx.n_samples", self.approx.n_samples),
            ("approx.exact_samples", self.approx.exact_samples),
        ] {
            if n < 2 {
                return Err(invalid(key, format!("must be at least 2, got {n}")));
            }
        }
        match self.integrator {
            IntegratorSpec::Grid { nodes } if nodes == 0 || nodes > 4096 => {
                return Err(invalid("integrator.nodes", format!("must be in 1..=4096, got {nodes}")));
            }
            IntegratorSpec::MonteCarlo { n_draws } if n_draws < MIN_MC_DRAWS => {
                return Err(invalid("integrator.n_draws", format!("must be at least {MIN_MC_DRAWS}, got {n_draws}")));
            }
            _ => {}
        }
        if self.theta.is_empty() {
            return Err(invalid("theta", "needs at least one value"));
        }
        for (key, v) in [
            ("tolerance.approx_error", self.tolerance.approx_error),
            ("tolerance.ratio_min", self.tolerance.ratio_min),
            ("tolerance.ratio_max", self.tolerance.ratio_max),
            ("approx.h_theta", self.approx.h_theta),
            ("approx.h_phi", self.approx.h_phi),
            ("bayes.prior_sd", self.bayes.prior_sd),
        ] {
            if v <= 0.0 {
                return Err(invalid(key, format!("must be positive, got {v}")));
            }
        }
        if self.tolerance.ratio_min > self.tolerance.ratio_max {
            return Err(invalid("tolerance.ratio_min", "exceeds tolerance.ratio_max"));
        }
        let s = &self.approx.scales;
        if s.len() < 2 || s.iter().any(|v| *v < 0.0) || s.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("approx.scales", "needs at least two nonnegative, strictly descending values"));
        }
        if self.bayes.delta_theta.len() != 1 {
            return Err(invalid("bayes.delta_theta", "zoo models have one parameter of interest"));
        }
        let zoo = ZooModel::build(self.model, &self.params).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if zoo.prior.dim() > MAX_GRID_DIM {
            return Err(ConfigError::Invalid("nuisance dimension too large for a grid".into()));
        }
        Ok(())
    }

    /// Every key written explicitly in a fixed order.
    pub fn to_canonical(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("model.id", self.model.to_string());
        for (k, v) in &self.params {
            put(&format!("model.{k}"), v.to_string());
        }
        if let Some(s) = self.study {
            put("study", s.to_string());
        }
        put("theta", list(&self.theta));
        put("seed", self.seed.to_string());
        put("samples.n_data", self.n_data.to_string());
        put("samples.n_phi", self.n_phi.to_string());
        put("samples.n_theta", self.n_theta.to_string());
        match self.integrator {
            IntegratorSpec::Grid { nodes } => {
                put("integrator.kind", "grid".into());
                put("integrator.nodes", nodes.to_string());
            }
            IntegratorSpec::MonteCarlo { n_draws } => {
                put("integrator.kind", "monte_carlo".into());
                put("integrator.n_draws", n_draws.to_string());
            }
        }
        put("tolerance.approx_error", self.tolerance.approx_error.to_string());
        put("tolerance.ratio_min", self.tolerance.ratio_min.to_string());
        put("tolerance.ratio_max", self.tolerance.ratio_max.to_string());
        put("approx.scales", list(&self.approx.scales));
        put("approx.h_theta", self.approx.h_theta.to_string());
        put("approx.h_phi", self.approx.h_phi.to_string());
        put("approx.n_samples", self.approx.n_samples.to_string());
        put("approx.exact_samples", self.approx.exact_samples.to_string());
        put("bayes.delta_theta", list(&self.bayes.delta_theta));
        put("bayes.prior_mean", self.bayes.prior_mean.to_string());
        put("bayes.prior_sd", self.bayes.prior_sd.to_string());
        if let Some(p) = &self.report_path {
            put("output.report", p.display().to_string());
        }
        if let Some(p) = &self.csv_path {
            put("output.csv", p.display().to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "model.id = gaussian_location\nseed = 1\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.params["tau"], 1.0);
        assert_eq!(c.theta, vec![0.0]);
        assert_eq!(c.integrator, IntegratorSpec::Grid { nodes: 64 });
        assert_eq!(c.n_data, 20_000);
    }

    #[test]
    fn comments_and_whitespace() {
        let c =
            RunConfig::parse("# header\n  model.id = dependent_prior   # trailing\n\nseed=3\nmodel.a = 2\n").unwrap();
        assert_eq!(c.model, ModelId::DependentPrior);
        assert_eq!(c.params["a"], 2.0);
    }

    #[test]
    fn errors() {
        let cases = [
            ("seed = 1\n", ConfigError::Missing("model.id")),
            ("model.id = gaussian_location\n", ConfigError::Missing("seed")),
            ("model.id = nope\nseed = 1\n", ConfigError::UnknownModel("nope".into())),
            (
                "model.id = gaussian_location\nseed = 1\nseed = 2\n",
                ConfigError::Duplicate { line: 3, key: "seed".into() },
            ),
            (
                "model.id = gaussian_location\nseed = 1\nsamples.bogus = 2\n",
                ConfigError::UnknownKey { line: 3, key: "samples.bogus".into() },
            ),
            (
                "model.id = gaussian_location\nseed = 1\nmodel.a = 2\n",
                ConfigError::UnknownKey { line: 3, key: "model.a".into() },
            ),
            (
                "model.id = gaussian_location\nseed = 1\nnonsense\n",
                ConfigError::Syntax { line: 3, msg: "expected `key = value`".into() },
            ),
        ];
        for (text, want) in cases {
            assert_eq!(RunConfig::parse(text).unwrap_err(), want, "{text}");
        }
        assert!(RunConfig::parse("model.id = gaussian_location\nseed = 1\nsamples.n_data = 1\n").is_err());
        assert!(RunConfig::parse("model.id = gaussian_location\nseed = -1\n").is_err());
        assert!(RunConfig::parse("model.id = gaussian_location\nseed = 1\nmodel.sigma = 0\n").is_err());
        assert!(RunConfig::parse("model.id = gaussian_location\nseed = 1\napprox.scales = 0.5, 1\n").is_err());
        assert!(RunConfig::parse("model.id = gaussian_location\nseed = 1\nstudy = plot\n").unwrap_err().is_usage());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "model.id = poisson_door\nseed = 18446744073709551615\ntheta = -0.3, 0.1\nintegrator.kind = monte_carlo\nintegrator.n_draws = 500\nstudy = approx\noutput.report = out/r.json\n";
        let c = RunConfig::parse(text).unwrap();
        let again = RunConfig::parse(&c.to_canonical()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_canonical(), c.to_canonical());
    }

    proptest! {
        #[test]
        fn canonical_text_reparses_to_the_same_config(
            seed in any::<u64>(),
            theta in proptest::collection::vec(-5.0f64..5.0, 1..4),
            tau in 0.0f64..3.0,
            n_data in 2usize..100_000,
            nodes in 1usize..200,
            first_scale in 0.5f64..4.0,
        ) {
            let mut c = RunConfig::parse(MINIMAL).unwrap();
            c.seed = seed;
            c.theta = theta;
            c.params.insert("tau".into(), tau);
            c.n_data = n_data;
            c.integrator = IntegratorSpec::Grid { nodes };
            c.approx.scales = vec![first_scale, first_scale / 3.0, 0.0];
            prop_assert_eq!(RunConfig::parse(&c.to_canonical()).unwrap(), c);
        }
    }
}
