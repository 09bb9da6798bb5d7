//! Batch runner for the `nuisfim` studies.
//!
//! `nuisfim <study> --config <path>` runs one study and writes a JSON report.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | every verdict in the report holds |
//! | 2 | the report was written but a verdict failed |
//! | 1 | execution error (I/O, numerical failure) |
//! | 64 | usage error: bad flags, unknown model or study, study not applicable |
//! | 65 | the config failed to parse or validate |

pub mod config;
pub mod report;
pub mod study;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

use config::{RunConfig, Study};
use report::{Artifact, Report, ARTIFACT_NAME, ARTIFACT_VERSION};
use study::StudyError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;

#[derive(Debug, Parser)]
#[command(name = "nuisfim", version, about = "Fisher information studies with marginalized nuisance parameters")]
pub struct Cli {
    /// Study to run.
    #[arg(value_enum)]
    pub study: Study,
    /// Config file (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Report path; overrides `output.report`. `-` writes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=1024))]
    pub threads: Option<u64>,
    /// Suppress the summary on stderr.
    #[arg(long)]
    pub quiet: bool,
}

/// Parses `args` (including the program name) and runs the study.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let quiet = cli.quiet;
    let (code, msg) = execute(cli);
    let is_summary = matches!(code, EXIT_OK | EXIT_FAILED);
    if let Some(m) = msg.filter(|_| !(quiet && is_summary)) {
        eprintln!("{m}");
    }
    code
}

fn execute(cli: Cli) -> (i32, Option<String>) {
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return (EXIT_ERROR, Some(format!("error: cannot read {}: {e}", cli.config.display()))),
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.is_usage() { EXIT_USAGE } else { EXIT_CONFIG };
            return (code, Some(format!("error: {}: {e}", cli.config.display())));
        }
    };
    if let Some(s) = cfg.study {
        if s != cli.study {
            return (EXIT_USAGE, Some(format!("error: config is for study `{s}`, not `{}`", cli.study)));
        }
    }
    cfg.study = Some(cli.study);
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.report_path = (out.as_os_str() != "-").then_some(out);
    }

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0) as usize).build() {
        Ok(p) => p,
        Err(e) => return (EXIT_ERROR, Some(format!("error: thread pool: {e}"))),
    };
    let start = Instant::now();
    let payload = match pool.install(|| study::run_study(cli.study, &cfg)) {
        Ok(p) => p,
        Err(StudyError::Usage(m)) => return (EXIT_USAGE, Some(format!("error: {m}"))),
        Err(e) => return (EXIT_ERROR, Some(format!("error: {} study failed: {e}", cli.study))),
    };
    let all_hold = payload.all_hold();
    let csv = match &payload {
        report::Payload::Scaling(p) => Some(study::scaling_csv(p)),
        _ => None,
    };
    let report = Report {
        artifact: Artifact { name: ARTIFACT_NAME.into(), version: ARTIFACT_VERSION.into() },
        study: cli.study.to_string(),
        model: cfg.model.to_string(),
        config: cfg.to_canonical(),
        payload,
        all_hold,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    let json = report.to_json();
    let written = match &cfg.report_path {
        Some(p) => std::fs::write(p, &json).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => std::io::stdout().lock().write_all(json.as_bytes()).map_err(|e| format!("stdout: {e}")),
    };
    if let Err(e) = written {
        return (EXIT_ERROR, Some(format!("error: {e}")));
    }
    if let (Some(p), Some(csv)) = (&cfg.csv_path, csv) {
        if let Err(e) = std::fs::write(p, csv) {
            return (EXIT_ERROR, Some(format!("error: cannot write {}: {e}", p.display())));
        }
    }
    let verdict = if all_hold { "all verdicts hold" } else { "a verdict FAILED" };
    let summary = format!("{} on {}: {verdict} ({:.2} s)", cli.study, cfg.model, report.runtime_seconds);
    (if all_hold { EXIT_OK } else { EXIT_FAILED }, Some(summary))
}
