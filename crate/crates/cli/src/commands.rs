use std::path::PathBuf;

use odeup::ivp::{benchmark, BENCHMARKS};
use odeup::odefilter::time_grid;
use odeup::propagate::{log_spaced, step_size_sweep};
use odeup::reference::{fig1_demo, mc_reference, McSettings};
use serde_json::{json, Map, Value};

use crate::args::{DemoArgs, Format, ListArgs, ListFormat, PropagateArgs, ReferenceArgs, SweepArgs};
use crate::config::{self, FileConfig, OutputTarget};
use crate::table::{Cell, Table};
use crate::CliError;

/// Text ready to be written, and where to.
pub struct Rendered {
    pub content: String,
    pub path: Option<PathBuf>,
}

const Z95: f64 = 1.96;

fn render(table: &Table, echo: Value, target: OutputTarget) -> Rendered {
    let content = match target.format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(echo),
    };
    Rendered { content, path: target.path }
}

fn merge(parts: impl IntoIterator<Item = (&'static str, Value)>, base: Value) -> Value {
    let mut map = match base {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    for (k, v) in parts {
        map.insert(k.to_string(), v);
    }
    Value::Object(map)
}

fn moment_columns(d: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for k in 0..d {
        for name in ["mean", "var_total", "var_pn", "var_nonpn", "ci_lo", "ci_hi"] {
            cols.push(format!("{name}_{k}"));
        }
    }
    cols
}

fn moment_cells(row: &mut Vec<Cell>, mean: f64, var_total: f64, var_pn: f64, var_nonpn: f64) {
    let half = Z95 * var_total.max(0.0).sqrt();
    row.extend([mean, var_total, var_pn, var_nonpn, mean - half, mean + half].map(Cell::Num));
}

pub fn propagate(args: &PropagateArgs, file: &FileConfig) -> Result<Rendered, CliError> {
    let rp = config::problem(&args.problem, file, false)?;
    let rule = config::rule(&args.rule, file)?;
    let solver = config::solver(&args.solver, args.h, file, rp.info)?;
    let target = config::output(&args.output, file);

    let result = odeup::propagate::propagate(&rp.problem, &rp.dist, &rule, &solver)?;
    let d = rp.problem.dim();
    let mut table = Table::new(moment_columns(d));
    for (i, &t) in result.times.iter().enumerate() {
        let mut row = vec![Cell::Num(t)];
        for k in 0..d {
            moment_cells(
                &mut row,
                result.mean[i][k],
                result.cov_total[i][(k, k)],
                result.cov_pn[i][(k, k)],
                result.cov_non_pn[i][(k, k)],
            );
        }
        table.push(row);
    }
    let echo = merge(
        [
            ("command", json!("propagate")),
            ("rule", config::rule_echo(&rule)),
            ("solver", config::solver_echo(&solver, true)),
            ("kappa2_per_node", json!(result.kappa2_per_node)),
        ],
        rp.echo(),
    );
    Ok(render(&table, echo, target))
}

pub fn reference(args: &ReferenceArgs, file: &FileConfig) -> Result<Rendered, CliError> {
    let rp = config::problem(&args.problem, file, false)?;
    let target = config::output(&args.output, file);
    let sec = &file.reference;
    let n = args.n.or(sec.n).unwrap_or(config::DEFAULT_REFERENCE_SAMPLES);
    if n < 2 {
        return Err(CliError::Usage(format!("--n must be at least 2, got {n}")));
    }
    let h = args.h.or(sec.h).unwrap_or(rp.info.step);
    let rk_step = args.rk_step.or(sec.rk_step).unwrap_or(config::DEFAULT_RK_STEP);
    let max_fail = args.max_failure_fraction.or(sec.max_failure_fraction).unwrap_or(0.0);
    if !(h > 0.0 && rk_step > 0.0) {
        return Err(CliError::Usage("--h and --rk-step must be positive".into()));
    }
    if !(0.0..=1.0).contains(&max_fail) {
        return Err(CliError::Usage("--max-failure-fraction must lie in [0, 1]".into()));
    }
    let settings = McSettings {
        n,
        seed: args.seed.or(sec.seed).unwrap_or(0),
        step: rk_step,
        max_failure_fraction: max_fail,
    };

    let grid = time_grid(rp.problem.tspan(), h)?;
    let r = mc_reference(&rp.problem, &rp.dist, &settings, &grid)?;
    let d = rp.problem.dim();
    let mut columns = moment_columns(d);
    columns.extend((0..d).map(|k| format!("se_mean_{k}")));
    let mut table = Table::new(columns);
    for (i, &t) in r.times.iter().enumerate() {
        let mut row = vec![Cell::Num(t)];
        for k in 0..d {
            let var = r.cov[i][(k, k)];
            moment_cells(&mut row, r.mean[i][k], var, 0.0, var);
        }
        row.extend(r.mean_se[i].iter().map(|v| Cell::Num(*v)));
        table.push(row);
    }
    let echo = merge(
        [
            ("command", json!("reference")),
            ("n", json!(settings.n)),
            ("seed", json!(settings.seed)),
            ("h", json!(h)),
            ("rk_step", json!(settings.step)),
            ("max_failure_fraction", json!(settings.max_failure_fraction)),
            ("failed", json!(r.failed)),
        ],
        rp.echo(),
    );
    Ok(render(&table, echo, target))
}

fn sweep_steps(args: &SweepArgs, file: &FileConfig) -> Result<Vec<f64>, CliError> {
    let from_logspace = |lo: f64, hi: f64, n: f64| {
        if !(n >= 1.0 && n.fract() == 0.0) {
            return Err(CliError::Usage(format!("step count must be a positive integer, got {n}")));
        }
        log_spaced(lo, hi, n as usize).map_err(|e| CliError::Usage(e.to_string()))
    };
    let steps = if let Some(v) = &args.steps_logspace {
        from_logspace(v[0], v[1], v[2])?
    } else if let Some(v) = &args.steps {
        v.clone()
    } else if let Some((lo, hi, n)) = file.sweep.steps_logspace {
        from_logspace(lo, hi, n as f64)?
    } else if let Some(v) = &file.sweep.steps {
        v.clone()
    } else {
        return Err(CliError::Usage("no step sizes given (use --steps-logspace or --steps)".into()));
    };
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(CliError::Usage("step sizes must be positive".into()));
    }
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(CliError::Usage("step sizes must be sorted ascending".into()));
    }
    Ok(steps)
}

pub fn sweep(args: &SweepArgs, file: &FileConfig) -> Result<Rendered, CliError> {
    let rp = config::problem(&args.problem, file, true)?;
    let rule = config::rule(&args.rule, file)?;
    let steps = sweep_steps(args, file)?;
    let solver = config::solver(&args.solver, Some(steps[0]), file, rp.info)?;
    let target = config::output(&args.output, file);
    let sec = &file.reference;
    let ref_n = args.ref_n.or(sec.n).unwrap_or(config::DEFAULT_REFERENCE_SAMPLES);
    if ref_n < 2 {
        return Err(CliError::Usage(format!("--ref-n must be at least 2, got {ref_n}")));
    }
    let rk_step = args.rk_step.or(sec.rk_step).unwrap_or(config::DEFAULT_RK_STEP);
    if !(rk_step > 0.0) {
        return Err(CliError::Usage("--rk-step must be positive".into()));
    }
    let settings = McSettings::new(ref_n, args.ref_seed.or(sec.seed).unwrap_or(0), rk_step);

    let rows = step_size_sweep(&rp.problem, &rp.dist, &rule, &solver, &steps)?;
    let t_end = rp.problem.tspan().1;
    let reference = mc_reference(&rp.problem, &rp.dist, &settings, &[t_end])?;
    let var_ref = &reference.cov[0];

    let d = rp.problem.dim();
    let mut columns = vec!["h".to_string()];
    for k in 0..d {
        for name in ["var_pn", "var_nonpn", "var_total", "var_ref"] {
            columns.push(format!("{name}_{k}"));
        }
    }
    columns.push("status".into());
    let mut table = Table::new(columns);
    for row in &rows {
        let mut cells = vec![Cell::Num(row.step)];
        for k in 0..d {
            let (pn, non_pn, total) = match &row.values {
                Ok(v) => (v.cov_pn[(k, k)], v.cov_non_pn[(k, k)], v.cov_total[(k, k)]),
                Err(_) => (f64::NAN, f64::NAN, f64::NAN),
            };
            cells.extend([pn, non_pn, total, var_ref[(k, k)]].map(Cell::Num));
        }
        cells.push(Cell::Text(match &row.values {
            Ok(_) => "ok".into(),
            Err(e) => format!("failed: {e}"),
        }));
        table.push(cells);
    }
    let echo = merge(
        [
            ("command", json!("sweep")),
            ("rule", config::rule_echo(&rule)),
            ("solver", config::solver_echo(&solver, false)),
            ("steps", json!(steps)),
            ("reference", json!({ "n": settings.n, "seed": settings.seed, "rk_step": settings.step })),
        ],
        rp.echo(),
    );
    Ok(render(&table, echo, target))
}

pub fn demo_fig1(args: &DemoArgs, file: &FileConfig) -> Result<Rendered, CliError> {
    let prior_vars = args
        .prior_vars
        .clone()
        .or_else(|| file.prior_vars.clone())
        .unwrap_or_else(|| config::DEFAULT_PRIOR_VARS.to_vec());
    if prior_vars.is_empty() || prior_vars.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::Usage("prior variances must be positive".into()));
    }
    let target = config::output(&args.output, file);
    let mut table =
        Table::new(["prior_var", "filter_mean", "filter_var", "marginal_mean", "marginal_var"]);
    for &pv in &prior_vars {
        let demo = fig1_demo(pv)?;
        table.push(
            [
                pv,
                demo.filter.mean()[0],
                demo.filter.cov()[(0, 0)],
                demo.marginal.mean()[0],
                demo.marginal.cov()[(0, 0)],
            ]
            .map(Cell::Num)
            .to_vec(),
        );
    }
    let echo = json!({ "command": "demo-fig1", "prior_vars": prior_vars });
    Ok(render(&table, echo, target))
}

pub fn list_problems(args: &ListArgs) -> Result<Rendered, CliError> {
    let mut entries = Vec::new();
    for info in &BENCHMARKS {
        let (_, dist) = benchmark(info.name)?;
        entries.push((info, dist.to_string()));
    }
    let content = match args.format {
        ListFormat::Text => entries
            .iter()
            .map(|(info, dist)| {
                format!(
                    "{:<16} d={}  theta ({}) ~ {}  t in [{}, {}]\n",
                    info.name, info.dim, info.theta_role, dist, info.tspan.0, info.tspan.1
                )
            })
            .collect(),
        ListFormat::Csv => {
            let mut table = Table::new(["name", "dim", "theta_dim", "theta", "distribution", "t0", "t1"]);
            for (info, dist) in &entries {
                table.push(vec![
                    Cell::Text(info.name.into()),
                    Cell::Text(info.dim.to_string()),
                    Cell::Text(info.theta_dim.to_string()),
                    Cell::Text(info.theta_role.into()),
                    Cell::Text(dist.clone()),
                    Cell::Num(info.tspan.0),
                    Cell::Num(info.tspan.1),
                ]);
            }
            table.to_csv()
        }
        ListFormat::Json => {
            let list: Vec<Value> = entries
                .iter()
                .map(|(info, dist)| {
                    json!({
                        "name": info.name,
                        "dim": info.dim,
                        "theta_dim": info.theta_dim,
                        "theta": info.theta_role,
                        "distribution": dist,
                        "tspan": [info.tspan.0, info.tspan.1],
                    })
                })
                .collect();
            let mut text = serde_json::to_string_pretty(&list).expect("JSON values serialize");
            text.push('\n');
            text
        }
    };
    Ok(Rendered { content, path: None })
}
