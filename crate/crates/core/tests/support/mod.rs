//! Independent dense-arithmetic oracles shared by the integration tests and
//! the acceptance suite. Nothing here calls into the solver.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use odeup::ivp::{ConcreteIvp, IvProblem, ParametricSystem};

/// `exp(M)` by scaling and squaring with a 30-term Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Drift of the q-times integrated Wiener process on one coordinate.
pub fn iwp_drift(q: usize) -> DMatrix<f64> {
    DMatrix::from_fn(q + 1, q + 1, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

fn kron_eye(d: usize, block: &DMatrix<f64>) -> DMatrix<f64> {
    let b = block.nrows();
    let mut out = DMatrix::zeros(d * b, d * b);
    for k in 0..d {
        out.view_mut((k * b, k * b), (b, b)).copy_from(block);
    }
    out
}

/// `Φ(h) = exp(F h)` for `d` independent coordinates.
pub fn iwp_transition(d: usize, q: usize, h: f64) -> DMatrix<f64> {
    kron_eye(d, &expm(&(iwp_drift(q) * h)))
}

/// `Q(h) = ∫₀ʰ e^{Fs} L Lᵀ e^{Fᵀs} ds` by composite Simpson quadrature.
pub fn iwp_noise(d: usize, q: usize, h: f64) -> DMatrix<f64> {
    let f = iwp_drift(q);
    let mut l = DMatrix::zeros(q + 1, 1);
    l[(q, 0)] = 1.0;
    let integrand = |s: f64| {
        let e = expm(&(&f * s));
        let el = &e * &l;
        &el * el.transpose()
    };
    let n = 2000;
    let dx = h / n as f64;
    let mut acc = integrand(0.0) + integrand(h);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += integrand(i as f64 * dx) * w;
    }
    kron_eye(d, &(acc * (dx / 3.0)))
}

/// Exact posterior marginals of the IWP prior on `times`, conditioned on
/// `E₁x(tₙ) = A E₀x(tₙ) + b` at every `n ≥ 1`.
///
/// The prior starts at the exact derivatives of the affine flow up to order
/// `exact`, with zero covariance; higher orders get mean zero and variance
/// `diffuse`. The joint state is written as `x = m + G z` with `z` standard
/// normal, and the constraint `H G z = r` is resolved by a full QR of
/// `(H G)ᵀ`: the minimum-norm solution gives the mean and the null-space
/// basis `N` gives the covariance `(G N)(G N)ᵀ`.
pub fn batch_affine_posterior(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    y0: &DVector<f64>,
    q: usize,
    exact: usize,
    diffuse: f64,
    times: &[f64],
) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let d = y0.len();
    let big = d * (q + 1);
    let n = times.len();
    let dim = big * n;

    let mut derivs = vec![y0.clone(), a * y0 + b];
    for k in 2..=q {
        let next = a * &derivs[k - 1];
        derivs.push(next);
    }
    let mut m0 = DVector::zeros(big);
    let mut s0 = DMatrix::zeros(big, big);
    for k in 0..d {
        for (i, dv) in derivs.iter().enumerate() {
            if i <= exact {
                m0[k * (q + 1) + i] = dv[k];
            } else {
                s0[(k * (q + 1) + i, k * (q + 1) + i)] = diffuse.sqrt();
            }
        }
    }

    let mut phis = Vec::new();
    let mut sqrts = vec![s0];
    let mut mean = DVector::zeros(dim);
    mean.rows_mut(0, big).copy_from(&m0);
    for (i, w) in times.windows(2).enumerate() {
        let h = w[1] - w[0];
        let phi = iwp_transition(d, q, h);
        let noise = iwp_noise(d, q, h);
        let l = noise.cholesky().expect("process noise is positive definite").l();
        let prev = mean.rows(i * big, big).into_owned();
        mean.rows_mut((i + 1) * big, big).copy_from(&(&phi * prev));
        phis.push(phi);
        sqrts.push(l);
    }

    // Block (j, i) of G is Φ(tⱼ ← tᵢ) Sᵢ for j ≥ i.
    let mut g = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let mut block = sqrts[i].clone();
        g.view_mut((i * big, i * big), (big, big)).copy_from(&block);
        for j in i + 1..n {
            block = &phis[j - 1] * block;
            g.view_mut((j * big, i * big), (big, big)).copy_from(&block);
        }
    }

    let mut e0 = DMatrix::zeros(d, big);
    let mut e1 = DMatrix::zeros(d, big);
    for k in 0..d {
        e0[(k, k * (q + 1))] = 1.0;
        e1[(k, k * (q + 1) + 1)] = 1.0;
    }
    let h_block = &e1 - a * &e0;
    let obs = d * (n - 1);
    let mut h = DMatrix::zeros(obs, dim);
    let mut target = DVector::zeros(obs);
    for i in 0..n - 1 {
        h.view_mut((i * d, (i + 1) * big), (d, big)).copy_from(&h_block);
        target.rows_mut(i * d, d).copy_from(b);
    }

    let constraint = &h * &g;
    let residual = target - &h * &mean;
    let mut augmented = DMatrix::zeros(dim, obs + dim);
    augmented.view_mut((0, 0), (dim, obs)).copy_from(&constraint.transpose());
    augmented.view_mut((0, obs), (dim, dim)).fill_with_identity();
    let qr = augmented.qr();
    let q_full = qr.q();
    let r = qr.r();
    let r1 = r.view((0, 0), (obs, obs)).into_owned();
    let range = q_full.columns(0, obs).into_owned();
    let null = q_full.columns(obs, dim - obs).into_owned();

    // A = R₁ᵀ Q₁ᵀ, so the minimum-norm z solves R₁ᵀ u = r and z = Q₁ u.
    let u = r1
        .transpose()
        .solve_lower_triangular(&residual)
        .expect("constraints are linearly independent");
    let post_mean = &mean + &g * (range * u);
    let gn = &g * null;
    let post_cov = &gn * gn.transpose();
    (0..n)
        .map(|i| {
            (
                post_mean.rows(i * big, big).into_owned(),
                post_cov.view((i * big, i * big), (big, big)).into_owned(),
            )
        })
        .collect()
}

/// `E[∏ x_{idx}]` under `N(μ, Σ)` for monomials of total degree at most 3.
pub fn gaussian_monomial(mu: &DVector<f64>, sigma: &DMatrix<f64>, idx: &[usize]) -> f64 {
    match *idx {
        [] => 1.0,
        [k] => mu[k],
        [k, l] => sigma[(k, l)] + mu[k] * mu[l],
        [k, l, m] => {
            mu[k] * mu[l] * mu[m] + mu[k] * sigma[(l, m)] + mu[l] * sigma[(k, m)] + mu[m] * sigma[(k, l)]
        }
        _ => panic!("degree above 3"),
    }
}

/// `E[xᵏ]` for a standard normal: `(k − 1)!!` for even `k`, zero for odd.
pub fn standard_normal_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    (1..k).step_by(2).map(|j| j as f64).product()
}

/// Closed forms of the two-step demo with `x₀ ~ N(0, v)`, unit transition,
/// noise variances `r`, and observation `y`.
pub fn fig1_closed_form(v: f64, r: f64, y: f64) -> ((f64, f64), (f64, f64)) {
    let pred = v + r;
    let gain = pred / (pred + r);
    let filter = (gain * y, (1.0 - gain) * pred);
    let marginal = (y / 2.0, r / 2.0 + v / 4.0);
    (filter, marginal)
}

/// Maximum absolute entry of `a − b` relative to `1 + max |b|`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

/// `ẏ = A y + b` with `θ = y(0)` and exact derivatives of every order.
#[derive(Debug)]
pub struct Affine {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl ParametricSystem for Affine {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn theta_dim(&self) -> usize {
        self.b.len()
    }

    fn initial_value(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(theta)
    }

    fn field(&self, _t: f64, y: &[f64], _theta: &[f64], out: &mut [f64]) {
        let v = &self.a * DVector::from_column_slice(y) + &self.b;
        out.copy_from_slice(v.as_slice());
    }

    fn jacobian(&self, _t: f64, _y: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }

    fn max_derivative_order(&self) -> usize {
        usize::MAX
    }

    fn taylor_derivatives(&self, _t: f64, y: &[f64], _theta: &[f64], up_to: usize) -> Option<Vec<DVector<f64>>> {
        let y = DVector::from_column_slice(y);
        let mut out = vec![y.clone(), &self.a * &y + &self.b];
        while out.len() <= up_to {
            let next = &self.a * out.last().unwrap();
            out.push(next);
        }
        Some(out)
    }
}

pub fn exact_affine_problem(a: DMatrix<f64>, b: DVector<f64>, y0: DVector<f64>, t1: f64) -> ConcreteIvp {
    IvProblem::new("affine", (0.0, t1), Arc::new(Affine { a, b }))
        .unwrap()
        .apply_params(y0.as_slice())
        .unwrap()
}
