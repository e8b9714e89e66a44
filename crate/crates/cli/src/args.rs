use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "odeup", version, about = "Uncertainty propagation through probabilistic ODE solvers")]
pub struct Cli {
    /// Worker threads for node and sample solves (0 = one per core).
    #[arg(long, global = true, env = "ODEUP_JOBS")]
    pub jobs: Option<usize>,

    /// JSON run configuration; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate parameter uncertainty through the ODE filter.
    Propagate(PropagateArgs),
    /// Monte Carlo reference over a classical RK4 solver.
    Reference(ReferenceArgs),
    /// Final-time variance decomposition across step sizes.
    Sweep(SweepArgs),
    /// Filtering versus marginalization in a two-step linear-Gaussian model.
    DemoFig1(DemoArgs),
    /// List the benchmark problems.
    ListProblems(ListArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Cubature,
    #[value(name = "gauss_hermite", alias = "gauss-hermite")]
    #[serde(alias = "gauss-hermite")]
    GaussHermite,
    #[value(name = "monte_carlo", alias = "monte-carlo")]
    #[serde(alias = "monte-carlo")]
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearizationArg {
    Ek0,
    Ek1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ListFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Benchmark name (see `list-problems`).
    #[arg(long)]
    pub problem: Option<String>,
    /// Start of the time span.
    #[arg(long)]
    pub t0: Option<f64>,
    /// End of the time span.
    #[arg(long)]
    pub t1: Option<f64>,
    /// Replace the parameter covariance by `VAR · I`.
    #[arg(long, value_name = "VAR")]
    pub init_var: Option<f64>,
    /// Use independent uniforms on `[μ − wσ, μ + wσ]` instead of the Gaussian.
    #[arg(long)]
    pub uniform: bool,
    /// Half-width `w` of the uniform box in standard deviations.
    #[arg(long, value_name = "W")]
    pub uniform_width: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RuleArgs {
    /// Quadrature rule.
    #[arg(long, value_enum)]
    pub rule: Option<RuleKind>,
    /// Gauss–Hermite order per dimension.
    #[arg(long)]
    pub order: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Prior order.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, value_enum)]
    pub linearization: Option<LinearizationArg>,
    /// Keep unit diffusion instead of calibrating it.
    #[arg(long)]
    pub no_calibrate: bool,
    /// Report filtering instead of smoothing marginals.
    #[arg(long)]
    pub no_smooth: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (standard output if absent).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub rule: RuleArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Solver step size.
    #[arg(long)]
    pub h: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Number of parameter samples.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Spacing of the output grid.
    #[arg(long)]
    pub h: Option<f64>,
    /// Internal RK4 step.
    #[arg(long)]
    pub rk_step: Option<f64>,
    /// Fraction of failed samples tolerated before aborting.
    #[arg(long)]
    pub max_failure_fraction: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub rule: RuleArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// `LO HI N`: N step sizes log-spaced between LO and HI.
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "N"], conflicts_with = "steps")]
    pub steps_logspace: Option<Vec<f64>>,
    /// Explicit comma-separated step sizes.
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<f64>>,
    /// Reference sample count.
    #[arg(long)]
    pub ref_n: Option<usize>,
    #[arg(long)]
    pub ref_seed: Option<u64>,
    #[arg(long)]
    pub rk_step: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    /// Comma-separated prior variances of `x₀`.
    #[arg(long, value_delimiter = ',')]
    pub prior_vars: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ListArgs {
    #[arg(long, value_enum, default_value_t = ListFormat::Text)]
    pub format: ListFormat,
}
