//! JSON run configuration and its merge with command-line flags.
//!
//! Every value is resolved as flag, then file, then built-in default.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use odeup::ivp::{benchmark, benchmark_info, BenchmarkInfo, IvProblem, ParameterDistribution};
use odeup::odefilter::{Linearization, SolverConfig};
use odeup::quadrature::{RuleSpec, MAX_GAUSS_HERMITE_ORDER};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::args::{Format, LinearizationArg, OutputArgs, ProblemArgs, RuleArgs, RuleKind, SolverArgs};
use crate::CliError;

pub const DEFAULT_GAUSS_HERMITE_ORDER: usize = 3;
pub const DEFAULT_MC_NODES: usize = 1000;
pub const DEFAULT_REFERENCE_SAMPLES: usize = 10_000;
pub const DEFAULT_RK_STEP: f64 = 1e-3;
pub const DEFAULT_UNIFORM_WIDTH: f64 = 1.96;
pub const DEFAULT_PRIOR_VARS: [f64; 2] = [1.0, 10.0];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub tspan: Option<[f64; 2]>,
    pub init_var: Option<f64>,
    pub uniform: Option<bool>,
    pub uniform_width: Option<f64>,
    #[serde(default)]
    pub rule: RuleSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub sweep: SweepSection,
    pub prior_vars: Option<Vec<f64>>,
    #[serde(default)]
    pub output: OutputSection,
    pub jobs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSection {
    pub kind: Option<RuleKind>,
    pub order: Option<usize>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub q: Option<usize>,
    pub h: Option<f64>,
    pub linearization: Option<LinearizationArg>,
    pub calibrate: Option<bool>,
    pub smooth: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub h: Option<f64>,
    pub rk_step: Option<f64>,
    pub max_failure_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub steps: Option<Vec<f64>>,
    pub steps_logspace: Option<(f64, f64, usize)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

/// A benchmark with any overrides applied.
pub struct ResolvedProblem {
    pub info: &'static BenchmarkInfo,
    pub problem: IvProblem,
    pub dist: ParameterDistribution,
}

impl ResolvedProblem {
    pub fn echo(&self) -> Value {
        json!({
            "problem": self.info.name,
            "tspan": [self.problem.tspan().0, self.problem.tspan().1],
            "distribution": self.dist.to_string(),
        })
    }
}

pub fn problem(
    args: &ProblemArgs,
    file: &FileConfig,
    sweep: bool,
) -> Result<ResolvedProblem, CliError> {
    let name = args
        .problem
        .clone()
        .or_else(|| file.problem.clone())
        .ok_or_else(|| usage("no problem given (use --problem)"))?;
    let info = benchmark_info(&name).map_err(|e| usage(e.to_string()))?;
    let (problem, mut dist) = benchmark(&name).map_err(|e| usage(e.to_string()))?;

    let default_span = if sweep { info.sweep_tspan } else { info.tspan };
    let file_span = file.tspan.map(|[a, b]| (a, b));
    let t0 = args.t0.or(file_span.map(|s| s.0)).unwrap_or(default_span.0);
    let t1 = args.t1.or(file_span.map(|s| s.1)).unwrap_or(default_span.1);
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(usage(format!("invalid time span [{t0}, {t1}]")));
    }
    let problem = problem.with_tspan((t0, t1)).map_err(|e| usage(e.to_string()))?;

    if let Some(var) = args.init_var.or(file.init_var) {
        if !(var >= 0.0 && var.is_finite()) {
            return Err(usage(format!("--init-var must be nonnegative, got {var}")));
        }
        let e = dist.dim();
        dist = ParameterDistribution::gaussian(dist.mean(), DMatrix::identity(e, e) * var)
            .map_err(|e| usage(e.to_string()))?;
    }
    if args.uniform || file.uniform.unwrap_or(false) {
        let width = positive(
            "--uniform-width",
            args.uniform_width.or(file.uniform_width).unwrap_or(DEFAULT_UNIFORM_WIDTH),
        )?;
        dist = dist.to_uniform_box(width).map_err(|e| usage(e.to_string()))?;
    }
    Ok(ResolvedProblem { info, problem, dist })
}

pub fn rule(args: &RuleArgs, file: &FileConfig) -> Result<RuleSpec, CliError> {
    let kind = args.rule.or(file.rule.kind).unwrap_or(RuleKind::Cubature);
    Ok(match kind {
        RuleKind::Cubature => RuleSpec::Cubature,
        RuleKind::GaussHermite => {
            let order = args.order.or(file.rule.order).unwrap_or(DEFAULT_GAUSS_HERMITE_ORDER);
            if !(1..=MAX_GAUSS_HERMITE_ORDER).contains(&order) {
                return Err(usage(format!(
                    "--order must be in 1..={MAX_GAUSS_HERMITE_ORDER}, got {order}"
                )));
            }
            RuleSpec::GaussHermite { order }
        }
        RuleKind::MonteCarlo => {
            let n = args.n.or(file.rule.n).unwrap_or(DEFAULT_MC_NODES);
            if n == 0 {
                return Err(usage("--n must be at least 1"));
            }
            RuleSpec::MonteCarlo { n, seed: args.seed.or(file.rule.seed).unwrap_or(0) }
        }
    })
}

pub fn rule_echo(rule: &RuleSpec) -> Value {
    match rule {
        RuleSpec::Cubature => json!({ "kind": "cubature" }),
        RuleSpec::GaussHermite { order } => json!({ "kind": "gauss_hermite", "order": order }),
        RuleSpec::MonteCarlo { n, seed } => json!({ "kind": "monte_carlo", "n": n, "seed": seed }),
    }
}

pub fn solver(
    args: &SolverArgs,
    h: Option<f64>,
    file: &FileConfig,
    info: &BenchmarkInfo,
) -> Result<SolverConfig, CliError> {
    let q = args.q.or(file.solver.q).unwrap_or(1);
    if q == 0 {
        return Err(usage("--q must be at least 1"));
    }
    let step = positive("--h", h.or(file.solver.h).unwrap_or(info.step))?;
    let mut cfg = SolverConfig::new(q, step);
    cfg.linearization = match args.linearization.or(file.solver.linearization) {
        Some(LinearizationArg::Ek0) => Linearization::Ek0,
        Some(LinearizationArg::Ek1) | None => Linearization::Ek1,
    };
    cfg.calibrate = !args.no_calibrate && file.solver.calibrate.unwrap_or(true);
    cfg.smooth = !args.no_smooth && file.solver.smooth.unwrap_or(true);
    Ok(cfg)
}

pub fn solver_echo(cfg: &SolverConfig, with_step: bool) -> Value {
    let mut v = json!({
        "q": cfg.order,
        "linearization": match cfg.linearization {
            Linearization::Ek0 => "ek0",
            Linearization::Ek1 => "ek1",
        },
        "calibrate": cfg.calibrate,
        "smooth": cfg.smooth,
    });
    if with_step {
        v["h"] = json!(cfg.step);
    }
    v
}

pub struct OutputTarget {
    pub path: Option<PathBuf>,
    pub format: Format,
}

pub fn output(args: &OutputArgs, file: &FileConfig) -> OutputTarget {
    OutputTarget {
        path: args.output.clone().or_else(|| file.output.path.clone()),
        format: args.format.or(file.output.format).unwrap_or(Format::Csv),
    }
}

pub fn jobs(flag: Option<usize>, file: &FileConfig) -> usize {
    flag.or(file.jobs).unwrap_or(0)
}
