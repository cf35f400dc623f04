use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "causal-hjb", version, about = "Pathwise control with time-changed noise: lifts, QV, Itô and HJB checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Lift a path (CSV or simulated Brownian) and report Chen defects and Hölder norms.
    Lift(LiftArgs),
    /// Cross quadratic variation of (W, W∘τ) along dyadic partitions.
    Qv(QvArgs),
    /// Residual, Monte Carlo and verification gates for a worked example.
    Verify(VerifyArgs),
    /// Functional Itô decomposition residuals under refinement.
    ItoCheck(ItoArgs),
    /// Rough integral of W against its Itô lift vs the Itô formula.
    Integral(ConvergenceArgs),
    /// Geometric RDE vs its closed form.
    Rde(ConvergenceArgs),
    /// Numeric vs analytic derivatives of the built-in causal functionals.
    Derivatives(DerivArgs),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Lift(a) => &a.common,
            Command::Qv(a) => &a.common,
            Command::Verify(a) => &a.common,
            Command::ItoCheck(a) => &a.common,
            Command::Integral(a) | Command::Rde(a) => &a.common,
            Command::Derivatives(a) => &a.common,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct Common {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Key-value config file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Ito,
    Stratonovich,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct LiftArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Path CSV with header t,x1,...,xd.
    #[arg(long, conflicts_with = "brownian")]
    pub input: Option<PathBuf>,
    /// Simulate Brownian lifts; a comma list cycles the dimension over samples.
    #[arg(long, value_delimiter = ',')]
    pub brownian: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Solver steps of each simulated lift.
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Number of simulated lifts.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    /// Fine steps per lift step (default 4 when simulating, 1 for file input).
    #[arg(long)]
    pub oversampling: Option<usize>,
    #[arg(long, default_value_t = 0.45)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Rule::Ito)]
    pub rule: Rule,
    /// Random index triples per lift when the grid is too large for all triples.
    #[arg(long, default_value_t = 10_000)]
    pub triples: usize,
    /// Largest grid checked over every triple.
    #[arg(long, default_value_t = 64)]
    pub exhaustive_max: usize,
    /// Lifts (from the first) that get Hölder diagnostics.
    #[arg(long, default_value_t = 4)]
    pub holder_samples: usize,
    /// Write the first lift as rough-path JSON.
    #[arg(long)]
    pub lift_out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct QvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// identity | full | lookahead:DELTA | table:t:v,t:v,...
    #[arg(long, default_value = "lookahead:0.1")]
    pub tau: String,
    /// Finest dyadic level.
    #[arg(long, default_value_t = 14)]
    pub levels: u32,
    /// Coarsest dyadic level reported.
    #[arg(long, default_value_t = 1)]
    pub min_level: u32,
    /// Number of independent Brownian samples.
    #[arg(long, default_value_t = 200)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    Frontrunner,
    Pathwise,
    Insider,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Transport,
    ZTrace,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Consistent,
    Printed,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub example: Example,
    /// Remove one term from the frontrunner check.
    #[arg(long, value_enum)]
    pub ablate: Option<Ablation>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Horizon (1 for frontrunner and insider, 0.5 for pathwise).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Residual probes (200 frontrunner, 50 pathwise, 100 insider).
    #[arg(long)]
    pub probes: Option<usize>,
    /// Grid steps of the probe drivers (200, 256, 500).
    #[arg(long)]
    pub probe_steps: Option<usize>,
    /// Solver steps for simulations (4000 frontrunner, 4096 pathwise).
    #[arg(long)]
    pub n: Option<usize>,
    /// Fine steps per solver step (1 frontrunner, 4 pathwise).
    #[arg(long)]
    pub oversampling: Option<usize>,
    /// Residual checks only.
    #[arg(long)]
    pub skip_mc: bool,

    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub phi0: f64,
    /// Monte Carlo samples per control.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 64)]
    pub outer: usize,
    #[arg(long, default_value_t = 64)]
    pub inner: usize,
    /// Solver steps of the martingale drift test.
    #[arg(long, default_value_t = 1000)]
    pub drift_n: usize,
    /// Steps between drift checkpoints.
    #[arg(long, default_value_t = 200)]
    pub drift_every: usize,
    #[arg(long, default_value_t = 50)]
    pub qv_seeds: usize,
    #[arg(long, default_value_t = 14)]
    pub qv_level: u32,

    /// Initial state on the reachable branch.
    #[arg(long, default_value_t = 0.5)]
    pub x_reach: f64,
    /// Initial state on the other branch.
    #[arg(long, default_value_t = 0.2)]
    pub x_other: f64,
    /// Paths per branch.
    #[arg(long, default_value_t = 50)]
    pub paths: usize,
    #[arg(long, default_value_t = 400)]
    pub counter_paths: usize,
    #[arg(long, default_value_t = 256)]
    pub counter_steps: usize,

    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma0: f64,
    #[arg(long, value_enum, default_value_t = Coefficient::Consistent)]
    pub coefficient: Coefficient,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    /// F = y².
    Square,
    /// F = y.
    Linear,
    /// F = y² + z(t)², exercising the time-changed slot.
    Mixed,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ItoArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = Functional::Square)]
    pub functional: Functional,
    /// Finest number of steps.
    #[arg(long, default_value_t = 16384)]
    pub n: usize,
    /// Number of halvings of `n` also reported.
    #[arg(long, default_value_t = 2)]
    pub refinements: u32,
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "identity")]
    pub tau: String,
    #[arg(long, default_value_t = 4)]
    pub oversampling: usize,
    /// Gate on the median |residual| at the finest level.
    #[arg(long, default_value_t = 2e-2)]
    pub tolerance: f64,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Step counts, coarse to fine.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1024usize, 4096, 16384])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub oversampling: usize,
    /// Gate on the RMS error at the finest level.
    #[arg(long, default_value_t = 1e-2)]
    pub tolerance: f64,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct DerivArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 100)]
    pub probes: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Grid steps of the probe paths.
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Horizontal step for the numeric time derivative.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Lookahead of the windowed and reconstruction functionals.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Grid steps of the reconstruction probes.
    #[arg(long, default_value_t = 1000)]
    pub reconstruction_n: usize,
    /// Horizontal step of the reconstruction probes, in grid steps.
    #[arg(long, default_value_t = 8)]
    pub reconstruction_step: usize,
    /// Flagged reconstruction probes required.
    #[arg(long, default_value_t = 95)]
    pub min_flagged: usize,
}
