//! Parameterized initial value problems `ẏ = f_θ(y, t)`, `y(t₀) = c_θ`.
//!
//! A [`ParametricSystem`] describes the family; an [`IvProblem`] adds a name
//! and a time span; binding a parameter vector with [`IvProblem::apply_params`]
//! yields the [`ConcreteIvp`] that solvers consume.
//!
//! Implementations of [`ParametricSystem`] must be pure and re-entrant: the
//! propagation and reference modules evaluate one system from many threads.

mod benchmarks;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use benchmarks::{benchmark, benchmark_info, BenchmarkInfo, BENCHMARKS};

/// A vector field and initial-value map, both depending on a parameter `θ ∈ ℝᵉ`.
pub trait ParametricSystem: Send + Sync + fmt::Debug {
    /// ODE dimension `d`.
    fn dim(&self) -> usize;

    /// Parameter dimension `e`.
    fn theta_dim(&self) -> usize;

    /// `c_θ`.
    fn initial_value(&self, theta: &[f64]) -> DVector<f64>;

    /// Writes `f_θ(y, t)` into `out`.
    fn field(&self, t: f64, y: &[f64], theta: &[f64], out: &mut [f64]);

    /// `∂f_θ/∂y` at `(y, t)`.
    fn jacobian(&self, t: f64, y: &[f64], theta: &[f64]) -> DMatrix<f64>;

    /// Highest order `k` for which [`Self::taylor_derivatives`] succeeds.
    fn max_derivative_order(&self) -> usize {
        1
    }

    /// Time derivatives `[y, ẏ, ÿ, …, y⁽ᵏ⁾]` of the solution through `(t, y)`.
    ///
    /// Only needs to handle `up_to ≥ 2`; the default supplies nothing.
    fn taylor_derivatives(
        &self,
        _t: f64,
        _y: &[f64],
        _theta: &[f64],
        _up_to: usize,
    ) -> Option<Vec<DVector<f64>>> {
        None
    }
}

/// A named parametric IVP on a fixed time span.
#[derive(Debug, Clone)]
pub struct IvProblem {
    name: String,
    tspan: (f64, f64),
    system: Arc<dyn ParametricSystem>,
}

impl IvProblem {
    pub fn new(
        name: impl Into<String>,
        tspan: (f64, f64),
        system: Arc<dyn ParametricSystem>,
    ) -> Result<Self> {
        check_tspan(tspan)?;
        Ok(Self { name: name.into(), tspan, system })
    }

    /// Problem from plain closures, for systems without derivative oracles.
    ///
    /// Orders above one are then initialized diffusely by the ODE filter.
    pub fn from_fns<I, F, J>(
        name: impl Into<String>,
        dim: usize,
        theta_dim: usize,
        tspan: (f64, f64),
        initial_value: I,
        field: F,
        jacobian: J,
    ) -> Result<Self>
    where
        I: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        J: Fn(f64, &[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let system = FnSystem {
            dim,
            theta_dim,
            initial_value: Box::new(initial_value),
            field: Box::new(field),
            jacobian: Box::new(jacobian),
        };
        Self::new(name, tspan, Arc::new(system))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tspan(&self) -> (f64, f64) {
        self.tspan
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn theta_dim(&self) -> usize {
        self.system.theta_dim()
    }

    pub fn system(&self) -> &Arc<dyn ParametricSystem> {
        &self.system
    }

    /// Same family on a different time span.
    pub fn with_tspan(&self, tspan: (f64, f64)) -> Result<Self> {
        check_tspan(tspan)?;
        Ok(Self { tspan, ..self.clone() })
    }

    /// Binds `θ`, fixing the initial value and the vector field.
    pub fn apply_params(&self, theta: &[f64]) -> Result<ConcreteIvp> {
        if theta.len() != self.theta_dim() {
            return Err(Error::DimensionMismatch { expected: self.theta_dim(), got: theta.len() });
        }
        let y0 = self.system.initial_value(theta);
        Ok(ConcreteIvp {
            system: Arc::clone(&self.system),
            theta: theta.to_vec(),
            y0,
            tspan: self.tspan,
        })
    }
}

fn check_tspan((t0, t1): (f64, f64)) -> Result<()> {
    if t0.is_finite() && t1.is_finite() && t1 > t0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("time span [{t0}, {t1}] must satisfy t0 < T")))
    }
}

/// An IVP with its parameter bound: ready to be solved.
#[derive(Debug, Clone)]
pub struct ConcreteIvp {
    system: Arc<dyn ParametricSystem>,
    theta: Vec<f64>,
    y0: DVector<f64>,
    tspan: (f64, f64),
}

impl ConcreteIvp {
    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn y0(&self) -> &DVector<f64> {
        &self.y0
    }

    pub fn tspan(&self) -> (f64, f64) {
        self.tspan
    }

    pub fn with_tspan(&self, tspan: (f64, f64)) -> Result<Self> {
        check_tspan(tspan)?;
        Ok(Self { tspan, ..self.clone() })
    }

    pub fn field(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.system.field(t, y.as_slice(), &self.theta, out.as_mut_slice());
        out
    }

    /// Allocation-free field evaluation.
    pub fn field_into(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.system.field(t, y, &self.theta, out);
    }

    pub fn jacobian(&self, t: f64, y: &DVector<f64>) -> DMatrix<f64> {
        self.system.jacobian(t, y.as_slice(), &self.theta)
    }

    /// Highest derivative order available for initialization.
    pub fn max_derivative_order(&self) -> usize {
        self.system.max_derivative_order().max(1)
    }

    /// `[y(t₀), ẏ(t₀), …, y⁽ᵘᵖ⁻ᵗᵒ⁾(t₀)]`.
    pub fn solution_derivatives(&self, up_to: usize) -> Result<Vec<DVector<f64>>> {
        let t0 = self.tspan.0;
        if up_to <= 1 {
            let mut out = vec![self.y0.clone()];
            if up_to == 1 {
                out.push(self.field(t0, &self.y0));
            }
            return Ok(out);
        }
        let unsupported =
            Error::UnsupportedOrder { requested: up_to, supported: self.max_derivative_order() };
        if up_to > self.max_derivative_order() {
            return Err(unsupported);
        }
        let derivs = self
            .system
            .taylor_derivatives(t0, self.y0.as_slice(), &self.theta, up_to)
            .ok_or(unsupported)?;
        debug_assert_eq!(derivs.len(), up_to + 1);
        Ok(derivs)
    }
}

type InitFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;
type FieldFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(f64, &[f64], &[f64]) -> DMatrix<f64> + Send + Sync;

struct FnSystem {
    dim: usize,
    theta_dim: usize,
    initial_value: Box<InitFn>,
    field: Box<FieldFn>,
    jacobian: Box<JacFn>,
}

impl fmt::Debug for FnSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnSystem")
            .field("dim", &self.dim)
            .field("theta_dim", &self.theta_dim)
            .finish_non_exhaustive()
    }
}

impl ParametricSystem for FnSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    fn initial_value(&self, theta: &[f64]) -> DVector<f64> {
        (self.initial_value)(theta)
    }

    fn field(&self, t: f64, y: &[f64], theta: &[f64], out: &mut [f64]) {
        (self.field)(t, y, theta, out)
    }

    fn jacobian(&self, t: f64, y: &[f64], theta: &[f64]) -> DMatrix<f64> {
        (self.jacobian)(t, y, theta)
    }
}

/// Distribution of the uncertain parameter `θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterDistribution {
    Gaussian { mean: DVector<f64>, cov: DMatrix<f64> },
    /// Independent uniform coordinates on `[lower, upper]`.
    UniformBox { lower: DVector<f64>, upper: DVector<f64> },
}

impl ParameterDistribution {
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        // Validates symmetry and semidefiniteness.
        crate::gaussians::Gaussian::new(mean.clone(), &cov)?;
        Ok(Self::Gaussian { mean, cov })
    }

    pub fn uniform_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidConfig("uniform box needs lower < upper".into()));
        }
        Ok(Self::UniformBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            Self::Gaussian { mean, .. } => mean.clone(),
            Self::UniformBox { lower, upper } => 0.5 * (lower + upper),
        }
    }

    pub fn cov(&self) -> DMatrix<f64> {
        match self {
            Self::Gaussian { cov, .. } => cov.clone(),
            Self::UniformBox { lower, upper } => {
                let var = (upper - lower).map(|w| w * w / 12.0);
                DMatrix::from_diagonal(&var)
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::UniformBox { .. } => "uniform",
        }
    }

    /// Same mean with covariance `var · I`.
    pub fn with_isotropic_variance(&self, var: f64) -> Result<Self> {
        let n = self.dim();
        Self::gaussian(self.mean(), DMatrix::identity(n, n) * var)
    }

    /// `Unif[μ − width·σ, μ + width·σ]` per coordinate, from the marginal standard deviations.
    pub fn to_uniform_box(&self, width: f64) -> Result<Self> {
        let mean = self.mean();
        let sd = self.cov().diagonal().map(f64::sqrt);
        Self::uniform_box(&mean - &sd * width, &mean + &sd * width)
    }
}

impl fmt::Display for ParameterDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &DVector<f64>| {
            v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
        };
        match self {
            Self::Gaussian { mean, cov } => {
                let n = mean.len();
                let diag = cov.diagonal();
                if cov == &DMatrix::from_diagonal_element(n, n, diag[0]) {
                    write!(f, "N([{}], {}·I)", list(mean), diag[0])
                } else {
                    let rows: Vec<_> = cov
                        .row_iter()
                        .map(|r| r.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", "))
                        .collect();
                    write!(f, "N([{}], [[{}]])", list(mean), rows.join("], ["))
                }
            }
            Self::UniformBox { lower, upper } => {
                write!(f, "Unif([{}], [{}])", list(lower), list(upper))
            }
        }
    }
}
