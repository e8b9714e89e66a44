//! Filtering-based probabilistic ODE solver.
//!
//! The solution is modelled with an integrated Wiener process prior and
//! conditioned on exact (Dirac) observations `E₁x(tₙ) − f(E₀x(tₙ), tₙ) = 0` on a
//! fixed grid. The nonlinear observation is linearized around the predicted
//! mean, either with the field Jacobian (EK1) or without it (EK0). A backward
//! Rauch–Tung–Striebel pass turns the filtering marginals into smoothing
//! marginals.
//!
//! The forward pass always runs at unit diffusion. Means and gains do not
//! depend on `κ²`, so the calibrated (or configured) diffusion is applied
//! afterwards by rescaling every covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussians::{affine_predict, condition_linear, triangularize, Gaussian};
use crate::ivp::ConcreteIvp;
use crate::prior::IwpPrior;

/// Variance given to derivative orders the problem cannot initialize exactly.
pub const DIFFUSE_VARIANCE: f64 = 1e6;

/// Lower clamp for the calibrated diffusion.
pub const MIN_DIFFUSION: f64 = 1e-14;

const GRID_TOL: f64 = 1e-12;
const PREDICTION_PIVOT_TOL: f64 = 1e-15;

/// How the ODE observation is linearized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linearization {
    /// `H = E₁`.
    Ek0,
    /// `H = E₁ − J_f E₀`.
    #[default]
    Ek1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Prior order `q ≥ 1`.
    pub order: usize,
    /// Fixed step size.
    pub step: f64,
    pub linearization: Linearization,
    /// Estimate a time-constant diffusion by quasi-maximum likelihood.
    pub calibrate: bool,
    /// Diffusion used when `calibrate` is off.
    pub diffusion: f64,
    /// Return smoothing rather than filtering marginals.
    pub smooth: bool,
    /// Initialize unavailable derivative orders diffusely instead of failing.
    pub diffuse_fallback: bool,
}

impl SolverConfig {
    /// EK1 with calibration and smoothing.
    pub fn new(order: usize, step: f64) -> Self {
        Self {
            order,
            step,
            linearization: Linearization::Ek1,
            calibrate: true,
            diffusion: 1.0,
            smooth: true,
            diffuse_fallback: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidConfig("prior order q must be at least 1".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::NonPositiveStep(self.step));
        }
        if !(self.diffusion > 0.0 && self.diffusion.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "diffusion must be positive, got {}",
                self.diffusion
            )));
        }
        Ok(())
    }
}

/// Fixed-step grid from `t0` to `T`; the last step is shortened to land on `T`
/// unless `(T − t0)/h` is an integer up to relative round-off.
pub fn time_grid((t0, t1): (f64, f64), step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::NonPositiveStep(step));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidConfig(format!("time span [{t0}, {t1}] is empty")));
    }
    let ratio = (t1 - t0) / step;
    let rounded = ratio.round();
    let exact = (ratio - rounded).abs() <= GRID_TOL * ratio.max(1.0) && rounded >= 1.0;
    let full = if exact { rounded as usize } else { ratio.floor() as usize };
    let mut times: Vec<f64> = (0..=full).map(|k| t0 + k as f64 * step).collect();
    if exact {
        *times.last_mut().expect("grid is non-empty") = t1;
    } else {
        times.push(t1);
    }
    Ok(times)
}

/// Initial state: exact derivatives up to order `q` where available.
///
/// With `diffuse_fallback`, orders the problem cannot supply get mean zero and
/// variance [`DIFFUSE_VARIANCE`]; otherwise they are an error.
pub fn initialize(p: &ConcreteIvp, prior: &IwpPrior, diffuse_fallback: bool) -> Result<Gaussian> {
    let q = prior.order();
    let d = prior.dim();
    if p.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
    }
    let supplied = if diffuse_fallback { q.min(p.max_derivative_order()) } else { q };
    let derivs = p.solution_derivatives(supplied)?;
    let n = prior.state_dim();
    let mut mean = DVector::zeros(n);
    let mut sqrt = DMatrix::zeros(n, n);
    for k in 0..d {
        for i in 0..=q {
            let idx = prior.index(k, i);
            if i <= supplied {
                mean[idx] = derivs[i][k];
            } else {
                sqrt[(idx, idx)] = DIFFUSE_VARIANCE.sqrt();
            }
        }
    }
    Ok(Gaussian::from_parts(mean, sqrt))
}

/// Everything one filter step produces.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub predicted: Gaussian,
    pub updated: Gaussian,
    /// ODE defect `E₁m⁻ − f(E₀m⁻, t + h)` at the predicted mean.
    pub defect: DVector<f64>,
    /// Lower-triangular square root of the innovation covariance.
    pub innovation_sqrt: DMatrix<f64>,
}

/// Transition and observation matrices for one step size.
struct StepModel {
    h: f64,
    transition: DMatrix<f64>,
    noise_sqrt: DMatrix<f64>,
    e0: DMatrix<f64>,
    e1: DMatrix<f64>,
    offset: DVector<f64>,
    no_noise: DMatrix<f64>,
}

impl StepModel {
    fn new(prior: &IwpPrior, h: f64) -> Result<Self> {
        Ok(Self {
            h,
            transition: prior.transition(h)?,
            noise_sqrt: prior.process_noise_sqrt(h)?,
            e0: prior.projection(0)?,
            e1: prior.projection(1)?,
            offset: DVector::zeros(prior.state_dim()),
            no_noise: DMatrix::zeros(prior.dim(), 0),
        })
    }

    fn step(
        &self,
        state: &Gaussian,
        p: &ConcreteIvp,
        t: f64,
        linearization: Linearization,
    ) -> Result<StepOutput> {
        let predicted = affine_predict(state, &self.transition, &self.offset, &self.noise_sqrt)?;
        let t_next = t + self.h;
        let y = &self.e0 * predicted.mean();
        let defect = &self.e1 * predicted.mean() - p.field(t_next, &y);
        let h = match linearization {
            Linearization::Ek1 => &self.e1 - p.jacobian(t_next, &y) * &self.e0,
            Linearization::Ek0 => self.e1.clone(),
        };
        let (updated, innovation_sqrt) = condition_linear(&predicted, &h, &defect, &self.no_noise)?;
        if updated.mean().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t_next });
        }
        Ok(StepOutput { predicted, updated, defect, innovation_sqrt })
    }
}

/// One predict/update step from `t` to `t + h`.
pub fn ek_step(
    state: &Gaussian,
    p: &ConcreteIvp,
    prior: &IwpPrior,
    t: f64,
    h: f64,
    linearization: Linearization,
) -> Result<StepOutput> {
    StepModel::new(prior, h)?.step(state, p, t, linearization)
}

/// Quasi-maximum-likelihood diffusion `κ̂² = (1/(N d)) Σ zₙᵀ Sₙ⁻¹ zₙ`.
///
/// Inputs must come from a unit-diffusion pass. The result is clamped below
/// at [`MIN_DIFFUSION`].
pub fn calibrate(defects: &[DVector<f64>], innovation_sqrts: &[DMatrix<f64>]) -> Result<f64> {
    if defects.is_empty() || defects.len() != innovation_sqrts.len() {
        return Err(Error::InvalidConfig(format!(
            "calibration needs matching, non-empty inputs ({} defects, {} innovations)",
            defects.len(),
            innovation_sqrts.len()
        )));
    }
    let d = defects[0].len();
    let mut total = 0.0;
    for (n, (z, s)) in defects.iter().zip(innovation_sqrts).enumerate() {
        if s.diagonal().iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::DegenerateResidual(n));
        }
        let w = s.solve_lower_triangular(z).ok_or(Error::DegenerateResidual(n))?;
        total += w.norm_squared();
    }
    let kappa2 = total / (defects.len() * d) as f64;
    Ok(kappa2.max(MIN_DIFFUSION))
}

/// Rauch–Tung–Striebel backward pass in square-root form.
///
/// `predicted[n]` is the one-step prediction of state `n + 1` made from
/// `filtered[n]`; `times` holds the grid the states live on.
pub fn smooth(
    filtered: &[Gaussian],
    predicted: &[Gaussian],
    prior: &IwpPrior,
    times: &[f64],
) -> Result<Vec<Gaussian>> {
    let len = filtered.len();
    if len == 0 || predicted.len() + 1 != len || times.len() != len {
        return Err(Error::ShapeMismatch(format!(
            "smooth: {} filtered states, {} predictions, {} times",
            len,
            predicted.len(),
            times.len()
        )));
    }
    let dim = prior.state_dim();
    let mut out = vec![filtered[len - 1].clone(); len];
    let mut model: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    for n in (0..len - 1).rev() {
        let h = times[n + 1] - times[n];
        if model.as_ref().is_none_or(|(cached, _, _)| *cached != h) {
            model = Some((h, prior.transition(h)?, prior.process_noise_sqrt(h)?));
        }
        let (_, phi, noise_sqrt) = model.as_ref().expect("set above");

        // [ Φ L  Q^½ ]      [ L⁻  0  ]
        // [  L    0  ]  ->  [ G L⁻  Lc ]
        let l = filtered[n].cov_sqrt();
        let mut pre = DMatrix::zeros(2 * dim, 2 * dim);
        pre.view_mut((0, 0), (dim, dim)).copy_from(&(phi * l));
        pre.view_mut((0, dim), (dim, dim)).copy_from(noise_sqrt);
        pre.view_mut((dim, 0), (dim, dim)).copy_from(l);
        let post = triangularize(&pre);
        let pred_sqrt = post.view((0, 0), (dim, dim)).into_owned();
        let gain_times_sqrt = post.view((dim, 0), (dim, dim)).into_owned();
        let cond_sqrt = post.view((dim, dim), (dim, dim)).into_owned();

        let max_pivot = pred_sqrt.diagonal().amax();
        if pred_sqrt
            .diagonal()
            .iter()
            .any(|v| !(*v > PREDICTION_PIVOT_TOL * max_pivot))
        {
            return Err(Error::SingularPrediction);
        }

        let next = &out[n + 1];
        let diff = next.mean() - predicted[n].mean();
        let v = pred_sqrt.solve_lower_triangular(&diff).ok_or(Error::SingularPrediction)?;
        let mean = filtered[n].mean() + &gain_times_sqrt * v;
        let w = pred_sqrt
            .solve_lower_triangular(next.cov_sqrt())
            .ok_or(Error::SingularPrediction)?;
        let mut stacked = DMatrix::zeros(dim, 2 * dim);
        stacked.columns_mut(0, dim).copy_from(&(&gain_times_sqrt * w));
        stacked.columns_mut(dim, dim).copy_from(&cond_sqrt);
        out[n] = Gaussian::from_parts(mean, triangularize(&stacked));
    }
    Ok(out)
}

/// Output of [`solve`]: Gaussian marginals over the full state on the grid.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    /// Smoothing marginals if `config.smooth`, filtering marginals otherwise.
    pub states: Vec<Gaussian>,
    /// Diffusion applied to the covariances (calibrated or configured).
    pub kappa2_hat: f64,
    pub config: SolverConfig,
    prior: IwpPrior,
}

impl OdeSolution {
    /// Prior with the applied diffusion.
    pub fn prior(&self) -> IwpPrior {
        self.prior
    }

    /// Marginal of the derivative of the given order at grid index `n`.
    pub fn marginal(&self, n: usize, order: usize) -> Result<Gaussian> {
        self.states[n].project(&self.prior.projection(order)?)
    }

    /// Marginals of the solution `y(t) = E₀ x(t)` on the whole grid.
    pub fn solution_marginals(&self) -> Result<Vec<Gaussian>> {
        let e0 = self.prior.projection(0)?;
        self.states.iter().map(|s| s.project(&e0)).collect()
    }
}

/// Solves the IVP on a fixed grid.
pub fn solve(p: &ConcreteIvp, config: &SolverConfig) -> Result<OdeSolution> {
    config.validate()?;
    let prior = IwpPrior::new(p.dim(), config.order)?;
    let times = time_grid(p.tspan(), config.step)?;
    let init = initialize(p, &prior, config.diffuse_fallback)?;

    let steps = times.len() - 1;
    let mut filtered = Vec::with_capacity(times.len());
    let mut predicted = Vec::with_capacity(steps);
    let mut defects = Vec::with_capacity(steps);
    let mut innovations = Vec::with_capacity(steps);
    filtered.push(init);

    let full = StepModel::new(&prior, config.step)?;
    let mut short: Option<StepModel> = None;
    for n in 0..steps {
        let h = times[n + 1] - times[n];
        let model = if (h - full.h).abs() <= GRID_TOL * full.h {
            &full
        } else {
            short.get_or_insert(StepModel::new(&prior, h)?)
        };
        let out = model
            .step(&filtered[n], p, times[n], config.linearization)
            .map_err(|e| Error::Step { index: n + 1, t: times[n + 1], source: Box::new(e) })?;
        predicted.push(out.predicted);
        filtered.push(out.updated);
        defects.push(out.defect);
        innovations.push(out.innovation_sqrt);
    }

    let kappa2_hat =
        if config.calibrate { calibrate(&defects, &innovations)? } else { config.diffusion };
    let states = if config.smooth {
        smooth(&filtered, &predicted, &prior, &times)?
    } else {
        filtered
    };
    let states = states.into_iter().map(|s| s.scale_cov(kappa2_hat)).collect();
    let prior = IwpPrior::with_diffusion(prior.dim(), prior.order(), kappa2_hat)?;
    Ok(OdeSolution { times, states, kappa2_hat, config: config.clone(), prior })
}
