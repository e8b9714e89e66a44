//! Ground-truth oracles: fixed-step RK4, Monte Carlo propagation over it,
//! the analytic pushforward for the scalar affine ODE, and a two-step
//! linear-Gaussian demo contrasting filtering with marginalization.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussians::{affine_predict, condition_linear, Gaussian};
use crate::ivp::{ConcreteIvp, IvProblem, ParameterDistribution};
use crate::quadrature::sample_parameters;

const SUBSTEP_TOL: f64 = 1e-9;
const CHUNK: usize = 256;

/// Point values of a classical solver on an output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

fn check_grid(t0: f64, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("output grid is empty".into()));
    }
    if grid[0] < t0 {
        return Err(Error::InvalidConfig(format!(
            "output grid starts at {} before t0 = {t0}",
            grid[0]
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("output grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Reusable RK4 buffers so a solve allocates nothing per step.
struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(d: usize) -> Self {
        Self { k1: vec![0.0; d], k2: vec![0.0; d], k3: vec![0.0; d], k4: vec![0.0; d], tmp: vec![0.0; d] }
    }

    fn step(&mut self, p: &ConcreteIvp, t: f64, h: f64, y: &mut [f64]) {
        let d = y.len();
        p.field_into(t, y, &mut self.k1);
        for i in 0..d {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        p.field_into(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..d {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        p.field_into(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..d {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        p.field_into(t + h, &self.tmp, &mut self.k4);
        for i in 0..d {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Calls `visit(k, y)` with the RK4 state at every output time.
///
/// Each output interval of length `Δ` is split into `⌈Δ/h⌉` equal substeps,
/// so the internal step never exceeds `h` and grid points are hit exactly.
fn rk4_visit<F>(p: &ConcreteIvp, h: f64, grid: &[f64], mut visit: F) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::NonPositiveStep(h));
    }
    let mut t = p.tspan().0;
    check_grid(t, grid)?;
    let mut y = p.y0().as_slice().to_vec();
    let mut ws = Rk4Workspace::new(y.len());
    for (k, &target) in grid.iter().enumerate() {
        let span = target - t;
        if span > 0.0 {
            let m = ((span / h) - SUBSTEP_TOL).ceil().max(1.0) as usize;
            let sub = span / m as f64;
            for j in 0..m {
                ws.step(p, t + j as f64 * sub, sub, &mut y);
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { t: target });
            }
            t = target;
        }
        visit(k, &y);
    }
    Ok(())
}

/// Classical fourth-order Runge–Kutta with internal step at most `h`,
/// reported on `output_grid`.
pub fn rk4_solve(p: &ConcreteIvp, h: f64, output_grid: &[f64]) -> Result<ReferenceSolution> {
    let mut values = Vec::with_capacity(output_grid.len());
    rk4_visit(p, h, output_grid, |_, y| values.push(DVector::from_column_slice(y)))?;
    Ok(ReferenceSolution { times: output_grid.to_vec(), values })
}

/// Settings for [`mc_reference`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    /// Number of parameter samples, at least 2.
    pub n: usize,
    pub seed: u64,
    /// Internal RK4 step.
    pub step: f64,
    /// Fraction of samples allowed to fail before the run aborts.
    pub max_failure_fraction: f64,
}

impl McSettings {
    pub fn new(n: usize, seed: u64, step: f64) -> Self {
        Self { n, seed, step, max_failure_fraction: 0.0 }
    }
}

/// Empirical moments of the solution over parameter samples.
#[derive(Debug, Clone, PartialEq)]
pub struct McReference {
    pub times: Vec<f64>,
    pub mean: Vec<DVector<f64>>,
    /// Unbiased sample covariance.
    pub cov: Vec<DMatrix<f64>>,
    /// Standard error of the mean, per coordinate.
    pub mean_se: Vec<DVector<f64>>,
    /// Samples that entered the statistics.
    pub used: usize,
    pub failed: usize,
}

/// Streaming mean and scatter per output time.
#[derive(Clone)]
struct Moments {
    count: usize,
    mean: Vec<DVector<f64>>,
    scatter: Vec<DMatrix<f64>>,
    delta: Vec<f64>,
}

impl Moments {
    fn new(times: usize, d: usize) -> Self {
        Self {
            count: 0,
            mean: vec![DVector::zeros(d); times],
            scatter: vec![DMatrix::zeros(d, d); times],
            delta: vec![0.0; d],
        }
    }

    /// Adds one sample given as its values at all output times, row-major.
    fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        let d = self.delta.len();
        for (k, y) in values.chunks_exact(d).enumerate() {
            let mean = &mut self.mean[k];
            let scatter = &mut self.scatter[k];
            for i in 0..d {
                self.delta[i] = y[i] - mean[i];
                mean[i] += self.delta[i] / n;
            }
            for i in 0..d {
                let after = y[i] - mean[i];
                for j in 0..d {
                    scatter[(j, i)] += self.delta[j] * after;
                }
            }
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = &other.mean[k] - &self.mean[k];
            self.scatter[k] += &other.scatter[k] + &delta * delta.transpose() * (na * nb / n);
            self.mean[k] += delta * (nb / n);
        }
        self.count += other.count;
    }
}

/// Monte Carlo propagation of `dist` through RK4 solves of `p`.
///
/// Parameters are drawn sequentially from one seeded stream; samples are
/// then processed in fixed-size chunks whose statistics are merged in sample
/// order, so the result is bit-identical for any thread count.
pub fn mc_reference(
    p: &IvProblem,
    dist: &ParameterDistribution,
    settings: &McSettings,
    output_grid: &[f64],
) -> Result<McReference> {
    if settings.n < 2 {
        return Err(Error::InvalidConfig(format!(
            "Monte Carlo reference needs at least 2 samples, got {}",
            settings.n
        )));
    }
    if !(0.0..=1.0).contains(&settings.max_failure_fraction) {
        return Err(Error::InvalidConfig("max_failure_fraction must lie in [0, 1]".into()));
    }
    if !(settings.step > 0.0 && settings.step.is_finite()) {
        return Err(Error::NonPositiveStep(settings.step));
    }
    if dist.dim() != p.theta_dim() {
        return Err(Error::DimensionMismatch { expected: p.theta_dim(), got: dist.dim() });
    }
    check_grid(p.tspan().0, output_grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let thetas = sample_parameters(dist, settings.n, &mut rng)?;
    let d = p.dim();
    let times = output_grid.len();

    let chunks: Vec<(Moments, Vec<(usize, Error)>)> = thetas
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = Moments::new(times, d);
            let mut failures = Vec::new();
            let mut values = vec![0.0; times * d];
            for (i, theta) in chunk.iter().enumerate() {
                let sample = c * CHUNK + i;
                let run = p.apply_params(theta.as_slice()).and_then(|ivp| {
                    rk4_visit(&ivp, settings.step, output_grid, |k, y| {
                        values[k * d..(k + 1) * d].copy_from_slice(y)
                    })
                });
                match run {
                    Ok(()) => acc.push(&values),
                    Err(e) => failures.push((sample, e)),
                }
            }
            (acc, failures)
        })
        .collect();

    let mut total = Moments::new(times, d);
    let mut failures = Vec::new();
    for (acc, fails) in chunks {
        total.merge(&acc);
        failures.extend(fails);
    }
    let allowed = (settings.max_failure_fraction * settings.n as f64).floor() as usize;
    if failures.len() > allowed || total.count < 2 {
        let (sample, source) = failures.into_iter().next().expect("some sample failed");
        return Err(Error::SampleFailed { sample, source: Box::new(source) });
    }

    let used = total.count;
    let cov: Vec<DMatrix<f64>> = total.scatter.iter().map(|s| s / (used - 1) as f64).collect();
    let mean_se = cov
        .iter()
        .map(|c| c.diagonal().map(|v| (v.max(0.0) / used as f64).sqrt()))
        .collect();
    Ok(McReference {
        times: output_grid.to_vec(),
        mean: total.mean,
        cov,
        mean_se,
        used,
        failed: failures.len(),
    })
}

/// Exact mean and variance of `y(t)` for `ẏ = a y + b`, `y(0) ~ N(m, v)`.
pub fn linear_analytic(a: f64, b: f64, y0_mean: f64, y0_var: f64, t: f64) -> (f64, f64) {
    let growth = (a * t).exp();
    let drift = if a == 0.0 { b * t } else { b / a * (growth - 1.0) };
    (growth * y0_mean + drift, y0_var * growth * growth)
}

/// Transition and observation noise variance of the demo model.
pub const FIG1_NOISE_VAR: f64 = 0.01;
/// Observed value of `y₁`.
pub const FIG1_OBSERVATION: f64 = 2.0;

/// Two views of `x₁` in the model `x₀ ~ N(0, v)`, `x₁ | x₀ ~ N(x₀, 0.01)`,
/// `y₁ | x₁ ~ N(x₁, 0.01)`, `y₁ = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Demo {
    /// `p(x₁ | y₁)`: the filtering distribution, which conditions on `y₁`
    /// after integrating out `x₀`.
    pub filter: Gaussian,
    /// `∫ p(x₁ | y₁, x₀) p(x₀) dx₀`: the conditional given `x₀`, averaged
    /// over the prior on `x₀`.
    pub marginal: Gaussian,
}

pub fn fig1_demo(prior_var: f64) -> Result<Fig1Demo> {
    if !(prior_var > 0.0 && prior_var.is_finite()) {
        return Err(Error::InvalidConfig(format!("prior variance must be positive, got {prior_var}")));
    }
    let one = DMatrix::from_element(1, 1, 1.0);
    let noise = DMatrix::from_element(1, 1, FIG1_NOISE_VAR.sqrt());
    let zero = DVector::zeros(1);
    let y = DVector::from_element(1, FIG1_OBSERVATION);
    let x0 = Gaussian::new(zero.clone(), &DMatrix::from_element(1, 1, prior_var))?;

    let predicted = affine_predict(&x0, &one, &zero, &noise)?;
    let residual = predicted.mean() - &y;
    let (filter, _) = condition_linear(&predicted, &one, &residual, &noise)?;

    // Conditioning N(x₀, 0.01) on y₁ is affine in x₀ with a gain that does
    // not depend on x₀; read it off at x₀ = 0.
    let at_zero = Gaussian::from_sqrt(zero.clone(), &noise)?;
    let (cond, _) = condition_linear(&at_zero, &one, &(at_zero.mean() - &y), &noise)?;
    let gain = cond.mean()[0] / FIG1_OBSERVATION;
    let a = DMatrix::from_element(1, 1, 1.0 - gain);
    let marginal = affine_predict(&x0, &a, cond.mean(), cond.cov_sqrt())?;
    Ok(Fig1Demo { filter, marginal })
}
