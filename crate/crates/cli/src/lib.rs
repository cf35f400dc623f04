//! Command-line experiments over the `causal-hjb` library. Every command
//! produces a versioned JSON report (or a plot-ready CSV) and an exit code:
//! 0 pass, 1 gate failure, 2 usage or parse error, 3 numeric divergence.

pub mod args;
pub mod config;
mod convergence;
mod derivs;
mod itocheck;
mod lift;
mod qv;
pub mod report;
pub mod tau;
mod verify;

use std::ffi::OsString;

use clap::Parser;
use serde_json::Value;

use args::{Cli, Command, Format};
use causal_hjb::Error;
pub use report::{Gate, Report, SCHEMA_VERSION};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_GATE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Failure of a command before a report exists.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Divergence { .. } | Error::McDivergence { .. }) => EXIT_DIVERGENCE,
            _ => EXIT_USAGE,
        }
    }
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

/// Result of one invocation.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Option<Value>,
    /// Text meant for stdout when no `--out` file was given.
    pub stdout: Option<String>,
    pub error: Option<String>,
}

impl Outcome {
    fn failed(code: i32, msg: String) -> Self {
        Self { code, report: None, stdout: None, error: Some(msg) }
    }
}

/// Parses `args` (program name first), merges the config file under the
/// flags, runs the command on a pool of `--threads` workers and writes the
/// output file if one was requested.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let merged = match config::merge_config(raw) {
        Ok(a) => a,
        Err(e) => return Outcome::failed(EXIT_USAGE, e),
    };
    let cli = match Cli::try_parse_from(merged) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            return Outcome { code, report: None, stdout: Some(e.to_string()), error: None };
        }
    };
    let common = cli.command.common().clone();
    let pool = match common.threads {
        Some(0) => return Outcome::failed(EXIT_USAGE, "--threads must be positive".into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => return Outcome::failed(EXIT_USAGE, e.to_string()),
    };
    let result = pool.install(|| execute(&cli.command));
    let (report, csv) = match result {
        Ok(r) => r,
        Err(e) => return Outcome::failed(e.exit_code(), e.to_string()),
    };
    let code = if report.passed { EXIT_PASS } else { EXIT_GATE };
    let value = serde_json::to_value(&report).expect("reports serialize");
    let text = match common.format {
        Format::Json => serde_json::to_string_pretty(&value).expect("reports serialize") + "\n",
        Format::Csv => match csv {
            Some(t) => t,
            None => return Outcome::failed(EXIT_USAGE, format!("{} has no CSV output", report.command)),
        },
    };
    let stdout = match &common.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                return Outcome::failed(EXIT_USAGE, format!("cannot write {}: {e}", path.display()));
            }
            None
        }
        None => Some(text),
    };
    Outcome { code, report: Some(value), stdout, error: None }
}

fn execute(cmd: &Command) -> Result<(Report, Option<String>), CliError> {
    match cmd {
        Command::Lift(a) => lift::run(a),
        Command::Qv(a) => qv::run(a),
        Command::Verify(a) => verify::run(a).map(|r| (r, None)),
        Command::ItoCheck(a) => itocheck::run(a),
        Command::Integral(a) => convergence::integral(a),
        Command::Rde(a) => convergence::rde(a),
        Command::Derivatives(a) => derivs::run(a).map(|r| (r, None)),
    }
}

/// Drops the fields that legitimately differ between identical runs.
pub fn comparable(report: &Value) -> Value {
    let mut v = report.clone();
    if let Value::Object(m) = &mut v {
        m.remove("timestamp");
    }
    v
}
