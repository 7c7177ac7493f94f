//! Command-line front end: config parsing, dispatch to the analysis modules,
//! and atomic CSV/JSON output with a config hash in every file.
//!
//! Exit codes: 0 success, 1 analysis-negative result, 2 config parse error,
//! 3 precondition violation, 4 numeric failure.

mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

use crate::horseshoe_certifier::CertifyError;
use crate::manifolds_tangency::ManifoldError;
use crate::map_core::MapError;
use crate::melnikov_bridge::MelnikovError;
use crate::periodic_orbits::PeriodicError;
use crate::survival_sets::SurvivalError;
pub use commands::{execute, Regime, RegimeReport};
pub use config::{Command, Origin, RunConfig, Settings, OUT_DIR_ENV};
pub use output::Artifact;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub(crate) fn parse(origin: &Origin, msg: String) -> Self {
        CliError::Parse(format!("{origin}: {msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Numeric(_) | CliError::Io { .. } => 4,
        }
    }
}

fn map_error_kind(e: &MapError) -> fn(String) -> CliError {
    match e {
        MapError::NumericDomain { .. } => CliError::Numeric,
        _ => CliError::Precondition,
    }
}

impl From<MapError> for CliError {
    fn from(e: MapError) -> Self {
        map_error_kind(&e)(e.to_string())
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        match &e {
            CertifyError::Map(m) => map_error_kind(m)(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

/// A result that either completed or ended in a valid negative finding.
#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<Artifact>,
    pub negative: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.negative {
            1
        } else {
            0
        }
    }
}

/// Errors from the analysis modules, split into negative findings (which
/// still produce a report) and failures.
pub(crate) enum Analysis {
    Negative(String),
    Failed(CliError),
}

impl From<CliError> for Analysis {
    fn from(e: CliError) -> Self {
        Analysis::Failed(e)
    }
}

impl From<MapError> for Analysis {
    fn from(e: MapError) -> Self {
        Analysis::Failed(e.into())
    }
}

impl From<SurvivalError> for Analysis {
    fn from(e: SurvivalError) -> Self {
        match e {
            SurvivalError::AllEscaped { .. } | SurvivalError::OrbitEscaped { .. } => Analysis::Negative(e.to_string()),
            SurvivalError::Precondition(m) => Analysis::Failed(CliError::Precondition(m)),
            SurvivalError::Map(m) => m.into(),
        }
    }
}

impl From<PeriodicError> for Analysis {
    fn from(e: PeriodicError) -> Self {
        match e {
            PeriodicError::NotFixed { .. } => Analysis::Failed(CliError::Numeric(e.to_string())),
            PeriodicError::Precondition(m) => Analysis::Failed(CliError::Precondition(m)),
            PeriodicError::Map(m) => m.into(),
        }
    }
}

impl From<CertifyError> for Analysis {
    fn from(e: CertifyError) -> Self {
        Analysis::Failed(e.into())
    }
}

impl From<ManifoldError> for Analysis {
    fn from(e: ManifoldError) -> Self {
        match e {
            ManifoldError::NoBracket { .. }
            | ManifoldError::NoSaddle(_)
            | ManifoldError::FoldNotFound(_)
            | ManifoldError::NotHyperbolic
            | ManifoldError::Escaped => Analysis::Negative(e.to_string()),
            ManifoldError::DegenerateConformal { .. } | ManifoldError::Field { .. } => {
                Analysis::Failed(CliError::Numeric(e.to_string()))
            }
            ManifoldError::Precondition(m) => Analysis::Failed(CliError::Precondition(m)),
            ManifoldError::Map(m) => m.into(),
            ManifoldError::Periodic(p) => p.into(),
        }
    }
}

impl From<MelnikovError> for Analysis {
    fn from(e: MelnikovError) -> Self {
        match e {
            MelnikovError::NoHomoclinic { .. } | MelnikovError::HypothesisViolated(_) => Analysis::Negative(e.to_string()),
            MelnikovError::Divergent(_) | MelnikovError::Ode(_) => Analysis::Failed(CliError::Numeric(e.to_string())),
            MelnikovError::InvalidSystem(_) | MelnikovError::Precondition(_) => {
                Analysis::Failed(CliError::Precondition(e.to_string()))
            }
            MelnikovError::Map(m) => m.into(),
        }
    }
}

impl From<MelnikovError> for CliError {
    fn from(e: MelnikovError) -> Self {
        match Analysis::from(e) {
            Analysis::Failed(f) => f,
            Analysis::Negative(m) => CliError::Precondition(m),
        }
    }
}

/// Parses, runs on a pool of `threads` workers and writes the artifacts.
/// Returns the process exit code; the summary goes to stdout, errors to stderr.
pub fn main_with(config_file: Option<(String, String)>, flags: &[String], env_out_dir: Option<PathBuf>) -> i32 {
    match run(config_file, flags, env_out_dir) {
        Ok(o) => {
            println!("{}", o.summary);
            o.exit_code()
        }
        Err(e) => {
            eprintln!("tangle: {e}");
            e.exit_code()
        }
    }
}

pub fn run(config_file: Option<(String, String)>, flags: &[String], env_out_dir: Option<PathBuf>) -> Result<Outcome, CliError> {
    let mut settings = Settings::default();
    if let Some((name, text)) = &config_file {
        settings.parse_file(name, text)?;
    }
    settings.apply_flags(flags)?;
    let cfg = RunConfig::from_settings(settings, env_out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Precondition(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| execute(&cfg))?;
    output::write_all(&cfg.out_dir, &outcome.artifacts)?;
    Ok(outcome)
}
