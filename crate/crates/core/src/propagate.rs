//! Two-step uncertainty propagation: solve every quadrature node with the ODE
//! filter, then moment-match the resulting Gaussian mixture pointwise in time.
//!
//! The matched covariance `Σ wᵢ Σᵢ(t) + Σ wᵢ (μᵢ(t) − μ̄(t))(μᵢ(t) − μ̄(t))ᵀ`
//! is reported split into its numerical (PN) and parametric (non-PN) terms.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussians::{Gaussian, GaussianMixture};
use crate::ivp::{IvProblem, ParameterDistribution};
use crate::odefilter::{solve, time_grid, SolverConfig};
use crate::quadrature::{QuadratureRule, RuleSpec};
use crate::reference::rk4_solve;

/// Per-time mixtures over `y(t)` and their moments.
#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub times: Vec<f64>,
    pub mixtures: Vec<GaussianMixture>,
    pub mean: Vec<DVector<f64>>,
    pub cov_total: Vec<DMatrix<f64>>,
    pub cov_pn: Vec<DMatrix<f64>>,
    pub cov_non_pn: Vec<DMatrix<f64>>,
    /// Calibrated diffusion of each node solve; zero for classical solves.
    pub kappa2_per_node: Vec<f64>,
    pub rule: RuleSpec,
}

impl PropagationResult {
    fn assemble(
        times: Vec<f64>,
        weights: &[f64],
        per_node: Vec<Vec<Gaussian>>,
        kappa2_per_node: Vec<f64>,
        rule: RuleSpec,
    ) -> Result<Self> {
        let len = times.len();
        let mut columns: Vec<Vec<Gaussian>> = (0..len).map(|_| Vec::with_capacity(per_node.len())).collect();
        for node in per_node {
            for (k, g) in node.into_iter().enumerate() {
                columns[k].push(g);
            }
        }
        let mut result = Self {
            times,
            mixtures: Vec::with_capacity(len),
            mean: Vec::with_capacity(len),
            cov_total: Vec::with_capacity(len),
            cov_pn: Vec::with_capacity(len),
            cov_non_pn: Vec::with_capacity(len),
            kappa2_per_node,
            rule,
        };
        for components in columns {
            let mixture = GaussianMixture::new(weights.to_vec(), components)?;
            let cov = mixture.covariance();
            result.mean.push(mixture.mean());
            result.cov_total.push(cov.total);
            result.cov_pn.push(cov.pn);
            result.cov_non_pn.push(cov.non_pn);
            result.mixtures.push(mixture);
        }
        Ok(result)
    }

    /// Index of the final time `T`.
    pub fn last(&self) -> usize {
        self.times.len() - 1
    }
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

fn check_dims(p: &IvProblem, rule: &QuadratureRule) -> Result<()> {
    if rule.dim() != p.theta_dim() {
        return Err(Error::DimensionMismatch { expected: p.theta_dim(), got: rule.dim() });
    }
    Ok(())
}

/// Propagates `dist` through the ODE filter using the rule built from `rule_spec`.
pub fn propagate(
    p: &IvProblem,
    dist: &ParameterDistribution,
    rule_spec: &RuleSpec,
    config: &SolverConfig,
) -> Result<PropagationResult> {
    let rule = rule_spec.build(dist)?;
    propagate_rule(p, &rule, *rule_spec, config)
}

/// Grid, solution marginals and `κ̂²` of one node.
type NodeSolve = (Vec<f64>, Vec<Gaussian>, f64);

/// [`propagate`] with an explicit, already built rule.
///
/// Node solves run in parallel on the current rayon pool; results are
/// assembled in node order.
pub fn propagate_rule(
    p: &IvProblem,
    rule: &QuadratureRule,
    rule_spec: RuleSpec,
    config: &SolverConfig,
) -> Result<PropagationResult> {
    config.validate()?;
    check_dims(p, rule)?;
    let solved: Vec<Result<NodeSolve>> = rule
        .nodes()
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let wrap = |e| Error::NodeSolveFailed { node: i, source: Box::new(e) };
            let ivp = p.apply_params(theta.as_slice()).map_err(wrap)?;
            let sol = solve(&ivp, config).map_err(wrap)?;
            let marginals = sol.solution_marginals().map_err(wrap)?;
            Ok((sol.times, marginals, sol.kappa2_hat))
        })
        .collect();

    let mut times: Option<Vec<f64>> = None;
    let mut per_node = Vec::with_capacity(rule.len());
    let mut kappa2 = Vec::with_capacity(rule.len());
    for node in solved {
        let (t, marginals, k2) = node?;
        match &times {
            Some(grid) if !same_grid(grid, &t) => return Err(Error::MixtureGridMismatch),
            Some(_) => {}
            None => times = Some(t),
        }
        per_node.push(marginals);
        kappa2.push(k2);
    }
    let times = times.expect("rule has at least one node");
    PropagationResult::assemble(times, rule.weights(), per_node, kappa2, rule_spec)
}

/// The same pipeline with one RK4 step per grid interval as the node solver.
///
/// Components are point masses, so `cov_pn ≡ 0` and `cov_total = cov_non_pn`.
pub fn propagate_nonpn(
    p: &IvProblem,
    dist: &ParameterDistribution,
    rule_spec: &RuleSpec,
    step: f64,
) -> Result<PropagationResult> {
    let rule = rule_spec.build(dist)?;
    check_dims(p, &rule)?;
    let times = time_grid(p.tspan(), step)?;
    let solved: Vec<Result<Vec<Gaussian>>> = rule
        .nodes()
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let wrap = |e| Error::NodeSolveFailed { node: i, source: Box::new(e) };
            let ivp = p.apply_params(theta.as_slice()).map_err(wrap)?;
            let sol = rk4_solve(&ivp, step, &times).map_err(wrap)?;
            Ok(sol.values.into_iter().map(Gaussian::dirac).collect())
        })
        .collect();
    let per_node = solved.into_iter().collect::<Result<Vec<_>>>()?;
    let kappa2 = vec![0.0; rule.len()];
    PropagationResult::assemble(times, rule.weights(), per_node, kappa2, *rule_spec)
}

/// Final-time covariance parts for one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepValues {
    pub cov_pn: DMatrix<f64>,
    pub cov_non_pn: DMatrix<f64>,
    pub cov_total: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub step: f64,
    pub values: Result<SweepValues>,
}

/// `n` steps equally spaced in log-space from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::InvalidConfig(format!(
            "log-spaced steps need 0 < lo <= hi and n >= 1, got ({lo}, {hi}, {n})"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect())
}

/// Runs [`propagate`] once per step size and records the covariance parts at `T`.
///
/// Each row carries its own result; a failed row does not stop the sweep.
/// `config.step` is ignored.
pub fn step_size_sweep(
    p: &IvProblem,
    dist: &ParameterDistribution,
    rule_spec: &RuleSpec,
    config: &SolverConfig,
    steps: &[f64],
) -> Result<Vec<SweepRow>> {
    if steps.is_empty() {
        return Err(Error::InvalidConfig("step sweep needs at least one step".into()));
    }
    if let Some(h) = steps.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::NonPositiveStep(*h));
    }
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("step sizes must be sorted ascending".into()));
    }
    let rule = rule_spec.build(dist)?;
    Ok(steps
        .iter()
        .map(|&step| {
            let cfg = SolverConfig { step, ..config.clone() };
            let values = propagate_rule(p, &rule, *rule_spec, &cfg).map(|r| {
                let n = r.last();
                SweepValues {
                    cov_pn: r.cov_pn[n].clone(),
                    cov_non_pn: r.cov_non_pn[n].clone(),
                    cov_total: r.cov_total[n].clone(),
                }
            });
            SweepRow { step, values }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivp::benchmark;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn linear_cubature_tracks_analytic() {
        let (p, dist) = benchmark("linear").unwrap();
        let r = propagate(&p, &dist, &RuleSpec::Cubature, &SolverConfig::new(1, 0.01)).unwrap();
        let n = r.last();
        assert_eq!(r.times[n], 3.0);
        let e3 = 3f64.exp();
        assert!((r.mean[n][0] - e3).abs() / e3 < 5e-3);
        assert!((r.cov_non_pn[n][(0, 0)] - 0.01 * e3 * e3).abs() / (0.01 * e3 * e3) < 0.02);
        assert_eq!(r.kappa2_per_node.len(), 2);
        for (k, m) in r.mixtures.iter().enumerate() {
            assert_eq!(m.weights(), &[0.5, 0.5]);
            assert_eq!(r.cov_total[k], &r.cov_pn[k] + &r.cov_non_pn[k]);
        }
    }

    #[test]
    fn single_node_rule_is_single_solve() {
        let (p, _) = benchmark("logistic").unwrap();
        let rule = QuadratureRule::new(vec![dvector![3.0]], vec![1.0]).unwrap();
        let cfg = SolverConfig::new(2, 0.05);
        let r = propagate_rule(&p, &rule, RuleSpec::Cubature, &cfg).unwrap();
        let sol = solve(&p.apply_params(&[3.0]).unwrap(), &cfg).unwrap();
        let marginals = sol.solution_marginals().unwrap();
        for k in 0..r.times.len() {
            assert_eq!(&r.mean[k], marginals[k].mean());
            assert_eq!(r.cov_non_pn[k], dmatrix![0.0]);
        }
    }

    #[test]
    fn nonpn_has_no_solver_covariance() {
        let (p, dist) = benchmark("linear").unwrap();
        let r = propagate_nonpn(&p, &dist, &RuleSpec::Cubature, 0.01).unwrap();
        assert!(r.cov_pn.iter().all(|c| c[(0, 0)] == 0.0));
        assert_eq!(r.cov_total, r.cov_non_pn);
        let n = r.last();
        let e3 = 3f64.exp();
        assert_relative_eq!(r.cov_total[n][(0, 0)], 0.01 * e3 * e3, max_relative = 1e-8);
    }

    #[test]
    fn node_failures_are_indexed() {
        let (p, _) = benchmark("logistic").unwrap();
        // b = 0 divides by zero in the logistic field.
        let rule = QuadratureRule::new(vec![dvector![3.0], dvector![0.0]], vec![0.5, 0.5]).unwrap();
        let err = propagate_rule(&p, &rule, RuleSpec::Cubature, &SolverConfig::new(1, 0.1)).unwrap_err();
        assert!(matches!(err, Error::NodeSolveFailed { node: 1, .. }));
    }

    #[test]
    fn log_spacing() {
        let s = log_spaced(0.01, 3.0, 10).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!((s[0], s[9]), (0.01, 3.0));
        let ratio = s[1] / s[0];
        assert!(s.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
        assert_eq!(log_spaced(0.5, 0.5, 1).unwrap(), vec![0.5]);
        assert!(log_spaced(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn sweep_rows() {
        let (p, dist) = benchmark("linear").unwrap();
        let steps = log_spaced(0.05, 1.0, 4).unwrap();
        let rows = step_size_sweep(&p, &dist, &RuleSpec::Cubature, &SolverConfig::new(1, 0.1), &steps).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.values.is_ok()));
        assert!(step_size_sweep(&p, &dist, &RuleSpec::Cubature, &SolverConfig::new(1, 0.1), &[0.2, 0.1]).is_err());
    }
}
