//! The five benchmark systems with their parameter distributions.
//!
//! All are autonomous polynomial fields, so solution derivatives at `t₀` follow
//! from the chain rule with hand-written second and third directional
//! derivatives of `f` (orders up to four are supported).

use std::sync::Arc;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use super::{IvProblem, ParameterDistribution, ParametricSystem};
use crate::error::{Error, Result};

/// Static description of a benchmark, for listings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkInfo {
    pub name: &'static str,
    pub dim: usize,
    pub theta_dim: usize,
    /// Which quantity `θ` stands for.
    pub theta_role: &'static str,
    /// Horizon of the propagation experiments.
    pub tspan: (f64, f64),
    /// Horizon of the step-size sweeps.
    pub sweep_tspan: (f64, f64),
    /// Default solver step.
    pub step: f64,
}

pub const BENCHMARKS: [BenchmarkInfo; 5] = [
    BenchmarkInfo {
        name: "linear",
        dim: 1,
        theta_dim: 1,
        theta_role: "initial value",
        tspan: (0.0, 3.0),
        sweep_tspan: (0.0, 3.0),
        step: 0.01,
    },
    BenchmarkInfo {
        name: "logistic",
        dim: 1,
        theta_dim: 1,
        theta_role: "carrying capacity b",
        tspan: (0.0, 3.0),
        sweep_tspan: (0.0, 3.0),
        step: 0.01,
    },
    BenchmarkInfo {
        name: "fitzhugh_nagumo",
        dim: 2,
        theta_dim: 2,
        theta_role: "initial value",
        tspan: (0.0, 20.0),
        sweep_tspan: (0.0, 20.0),
        step: 0.005,
    },
    BenchmarkInfo {
        name: "lotka_volterra",
        dim: 2,
        theta_dim: 2,
        theta_role: "initial value",
        tspan: (0.0, 3.0),
        sweep_tspan: (0.0, 0.5),
        step: 0.005,
    },
    BenchmarkInfo {
        name: "van_der_pol",
        dim: 2,
        theta_dim: 2,
        theta_role: "initial value",
        tspan: (0.0, 10.0),
        sweep_tspan: (0.0, 10.0),
        step: 0.01,
    },
];

/// Catalog entry for `name`.
pub fn benchmark_info(name: &str) -> Result<&'static BenchmarkInfo> {
    BENCHMARKS
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))
}

/// Looks up a benchmark by name and returns it with its parameter distribution.
pub fn benchmark(name: &str) -> Result<(IvProblem, ParameterDistribution)> {
    let info = benchmark_info(name)?;
    let iso = |m: DVector<f64>, v: f64| {
        let n = m.len();
        ParameterDistribution::gaussian(m, DMatrix::identity(n, n) * v)
    };
    let (system, dist): (Arc<dyn ParametricSystem>, _) = match name {
        "linear" => (Arc::new(Linear { a: 1.0, b: 0.0 }), iso(dvector![1.0], 0.01)?),
        "logistic" => (Arc::new(Logistic { a: 3.0, y0: 0.05 }), iso(dvector![3.0], 0.01)?),
        "fitzhugh_nagumo" => (
            Arc::new(FitzHughNagumo { a: 0.0, b: 0.08, c: 0.07, d: 1.25 }),
            iso(dvector![0.5, 1.0], 0.1)?,
        ),
        "lotka_volterra" => (
            Arc::new(LotkaVolterra { a: 5.0, b: 0.5, c: 5.0, d: 0.5 }),
            iso(dvector![5.0, 5.0], 0.3)?,
        ),
        "van_der_pol" => (Arc::new(VanDerPol { a: 0.05 }), iso(dvector![5.0, 5.0], 2.0)?),
        _ => unreachable!("catalog and match arms out of sync"),
    };
    Ok((IvProblem::new(info.name, info.tspan, system)?, dist))
}

/// Directional derivatives of an autonomous polynomial field.
trait PolynomialField {
    fn eval(&self, y: &[f64], theta: &[f64]) -> DVector<f64>;
    fn jac(&self, y: &[f64], theta: &[f64]) -> DMatrix<f64>;
    /// `f''(y)[u, v]`.
    fn second(&self, y: &[f64], theta: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    /// `f'''(y)[u, v, w]`.
    fn third(
        &self,
        y: &[f64],
        theta: &[f64],
        u: &DVector<f64>,
        v: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64>;
}

const MAX_TAYLOR_ORDER: usize = 4;

fn taylor_stack<F: PolynomialField>(
    f: &F,
    y: &[f64],
    theta: &[f64],
    up_to: usize,
) -> Option<Vec<DVector<f64>>> {
    if up_to > MAX_TAYLOR_ORDER {
        return None;
    }
    let j = f.jac(y, theta);
    let mut out = vec![DVector::from_column_slice(y)];
    let d1 = f.eval(y, theta);
    out.push(d1.clone());
    if up_to >= 2 {
        out.push(&j * &d1);
    }
    if up_to >= 3 {
        let d2 = &out[2];
        out.push(f.second(y, theta, &d1, &d1) + &j * d2);
    }
    if up_to >= 4 {
        let (d2, d3) = (&out[2], &out[3]);
        let d4 = f.third(y, theta, &d1, &d1, &d1) + 3.0 * f.second(y, theta, &d1, d2) + &j * d3;
        out.push(d4);
    }
    out.truncate(up_to + 1);
    Some(out)
}

macro_rules! polynomial_system {
    ($ty:ty, dim = $dim:expr, theta_dim = $tdim:expr) => {
        impl ParametricSystem for $ty {
            fn dim(&self) -> usize {
                $dim
            }

            fn theta_dim(&self) -> usize {
                $tdim
            }

            fn initial_value(&self, theta: &[f64]) -> DVector<f64> {
                self.init(theta)
            }

            fn field(&self, _t: f64, y: &[f64], theta: &[f64], out: &mut [f64]) {
                self.eval_into(y, theta, out)
            }

            fn jacobian(&self, _t: f64, y: &[f64], theta: &[f64]) -> DMatrix<f64> {
                PolynomialField::jac(self, y, theta)
            }

            fn max_derivative_order(&self) -> usize {
                MAX_TAYLOR_ORDER
            }

            fn taylor_derivatives(
                &self,
                _t: f64,
                y: &[f64],
                theta: &[f64],
                up_to: usize,
            ) -> Option<Vec<DVector<f64>>> {
                taylor_stack(self, y, theta, up_to)
            }
        }
    };
}

/// `ẏ = a y + b`, `θ = y(0)`.
#[derive(Debug, Clone, Copy)]
struct Linear {
    a: f64,
    b: f64,
}

impl Linear {
    fn init(&self, theta: &[f64]) -> DVector<f64> {
        dvector![theta[0]]
    }

    fn eval_into(&self, y: &[f64], _theta: &[f64], out: &mut [f64]) {
        out[0] = self.a * y[0] + self.b;
    }
}

impl PolynomialField for Linear {
    fn eval(&self, y: &[f64], theta: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(1);
        self.eval_into(y, theta, out.as_mut_slice());
        out
    }
    fn jac(&self, _y: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        dmatrix![self.a]
    }
    fn second(&self, _: &[f64], _: &[f64], _: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn third(
        &self,
        _: &[f64],
        _: &[f64],
        _: &DVector<f64>,
        _: &DVector<f64>,
        _: &DVector<f64>,
    ) -> DVector<f64> {
        DVector::zeros(1)
    }
}
polynomial_system!(Linear, dim = 1, theta_dim = 1);

/// `ẏ = a y (1 − y / b)`, `θ = b`.
#[derive(Debug, Clone, Copy)]
struct Logistic {
    a: f64,
    y0: f64,
}

impl Logistic {
    fn init(&self, _theta: &[f64]) -> DVector<f64> {
        dvector![self.y0]
    }

    fn eval_into(&self, y: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = self.a * y[0] * (1.0 - y[0] / theta[0]);
    }
}

impl PolynomialField for Logistic {
    fn eval(&self, y: &[f64], theta: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(1);
        self.eval_into(y, theta, out.as_mut_slice());
        out
    }
    fn jac(&self, y: &[f64], theta: &[f64]) -> DMatrix<f64> {
        dmatrix![self.a * (1.0 - 2.0 * y[0] / theta[0])]
    }
    fn second(&self, _y: &[f64], theta: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        dvector![-2.0 * self.a / theta[0] * u[0] * v[0]]
    }
    fn third(
        &self,
        _: &[f64],
        _: &[f64],
        _: &DVector<f64>,
        _: &DVector<f64>,
        _: &DVector<f64>,
    ) -> DVector<f64> {
        DVector::zeros(1)
    }
}
polynomial_system!(Logistic, dim = 1, theta_dim = 1);

/// `ẏ₁ = y₁ − y₁³/3 − y₂ + a`, `ẏ₂ = (y₁ + b − c y₂) / d`, `θ = y(0)`.
#[derive(Debug, Clone, Copy)]
struct FitzHughNagumo {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl FitzHughNagumo {
    fn init(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(theta)
    }

    fn eval_into(&self, y: &[f64], _theta: &[f64], out: &mut [f64]) {
        out[0] = y[0] - y[0] * y[0] * y[0] / 3.0 - y[1] + self.a;
        out[1] = (y[0] + self.b - self.c * y[1]) / self.d;
    }
}

impl PolynomialField for FitzHughNagumo {
    fn eval(&self, y: &[f64], theta: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(2);
        self.eval_into(y, theta, out.as_mut_slice());
        out
    }
    fn jac(&self, y: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        dmatrix![
            1.0 - y[0] * y[0], -1.0;
            1.0 / self.d, -self.c / self.d
        ]
    }
    fn second(&self, y: &[f64], _: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        dvector![-2.0 * y[0] * u[0] * v[0], 0.0]
    }
    fn third(
        &self,
        _: &[f64],
        _: &[f64],
        u: &DVector<f64>,
        v: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        dvector![-2.0 * u[0] * v[0] * w[0], 0.0]
    }
}
polynomial_system!(FitzHughNagumo, dim = 2, theta_dim = 2);

/// `ẏ₁ = a y₁ − b y₁ y₂`, `ẏ₂ = −c y₂ + d y₁ y₂`, `θ = y(0)`.
#[derive(Debug, Clone, Copy)]
struct LotkaVolterra {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl LotkaVolterra {
    fn init(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(theta)
    }

    fn eval_into(&self, y: &[f64], _theta: &[f64], out: &mut [f64]) {
        out[0] = self.a * y[0] - self.b * y[0] * y[1];
        out[1] = -self.c * y[1] + self.d * y[0] * y[1];
    }
}

impl PolynomialField for LotkaVolterra {
    fn eval(&self, y: &[f64], theta: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(2);
        self.eval_into(y, theta, out.as_mut_slice());
        out
    }
    fn jac(&self, y: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        dmatrix![
            self.a - self.b * y[1], -self.b * y[0];
            self.d * y[1], -self.c + self.d * y[0]
        ]
    }
    fn second(&self, _: &[f64], _: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let cross = u[0] * v[1] + u[1] * v[0];
        dvector![-self.b * cross, self.d * cross]
    }
    fn third(
        &self,
        _: &[f64],
        _: &[f64],
        _: &DVector<f64>,
        _: &DVector<f64>,
        _: &DVector<f64>,
    ) -> DVector<f64> {
        DVector::zeros(2)
    }
}
polynomial_system!(LotkaVolterra, dim = 2, theta_dim = 2);

/// `ẏ₁ = y₂`, `ẏ₂ = a (1 − y₁²) y₂ − y₁`, `θ = y(0)`.
#[derive(Debug, Clone, Copy)]
struct VanDerPol {
    a: f64,
}

impl VanDerPol {
    fn init(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(theta)
    }

    fn eval_into(&self, y: &[f64], _theta: &[f64], out: &mut [f64]) {
        out[0] = y[1];
        out[1] = self.a * (1.0 - y[0] * y[0]) * y[1] - y[0];
    }
}

impl PolynomialField for VanDerPol {
    fn eval(&self, y: &[f64], theta: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(2);
        self.eval_into(y, theta, out.as_mut_slice());
        out
    }
    fn jac(&self, y: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        dmatrix![
            0.0, 1.0;
            -2.0 * self.a * y[0] * y[1] - 1.0, self.a * (1.0 - y[0] * y[0])
        ]
    }
    fn second(&self, y: &[f64], _: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let a = self.a;
        dvector![
            0.0,
            -2.0 * a * y[1] * u[0] * v[0] - 2.0 * a * y[0] * (u[0] * v[1] + u[1] * v[0])
        ]
    }
    fn third(
        &self,
        _: &[f64],
        _: &[f64],
        u: &DVector<f64>,
        v: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        let sym = u[0] * v[0] * w[1] + u[0] * v[1] * w[0] + u[1] * v[0] * w[0];
        dvector![0.0, -2.0 * self.a * sym]
    }
}
polynomial_system!(VanDerPol, dim = 2, theta_dim = 2);
