//! Quadrature rules `E[g(θ)] ≈ Σ wᵢ g(θᵢ)` over parameter distributions.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussians::psd_sqrt;
use crate::ivp::ParameterDistribution;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Largest supported one-dimensional Gauss–Hermite order.
pub const MAX_GAUSS_HERMITE_ORDER: usize = 10;

/// Largest parameter dimension for tensor-product Gauss–Hermite grids.
pub const MAX_GAUSS_HERMITE_DIM: usize = 3;

/// Nodes `θᵢ ∈ ℝᵉ` with probability weights `wᵢ` summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidConfig(format!(
                "quadrature rule with {} nodes and {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        let dim = nodes[0].len();
        if nodes.iter().any(|n| n.len() != dim) {
            return Err(Error::InvalidConfig("quadrature nodes differ in dimension".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidConfig(format!("quadrature weights sum to {sum}")));
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    /// `Σ wᵢ g(θᵢ)` for a vector-valued integrand.
    pub fn integrate<G>(&self, mut g: G) -> DVector<f64>
    where
        G: FnMut(&DVector<f64>) -> DVector<f64>,
    {
        let mut acc: Option<DVector<f64>> = None;
        for (w, x) in self.weights.iter().zip(&self.nodes) {
            let v = g(x);
            match acc.as_mut() {
                Some(a) => a.axpy(*w, &v, 1.0),
                None => acc = Some(v * *w),
            }
        }
        acc.expect("rule has at least one node")
    }

    /// `Σ wᵢ θᵢ`.
    pub fn mean(&self) -> DVector<f64> {
        self.integrate(|x| x.clone())
    }

    /// `Σ wᵢ (θᵢ − m)(θᵢ − m)ᵀ` with `m` the rule mean.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let e = self.dim();
        let mut cov = DMatrix::zeros(e, e);
        for (w, x) in self.weights.iter().zip(&self.nodes) {
            let dev = x - &m;
            cov += *w * &dev * dev.transpose();
        }
        cov
    }
}

/// Third-degree spherical cubature: `θ = μ ± √e L eᵢ`, each with weight `1/(2e)`.
///
/// Nodes are ordered `μ + √e L e₁, …, μ + √e L eₑ, μ − √e L e₁, …`.
pub fn spherical_cubature(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<QuadratureRule> {
    let e = mean.len();
    if e == 0 || cov.nrows() != e {
        return Err(Error::ShapeMismatch(format!(
            "mean of length {e} with {}x{} covariance",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let l = psd_sqrt(cov)? * (e as f64).sqrt();
    let mut nodes = Vec::with_capacity(2 * e);
    for i in 0..e {
        nodes.push(mean + l.column(i));
    }
    for i in 0..e {
        nodes.push(mean - l.column(i));
    }
    QuadratureRule::new(nodes, vec![1.0 / (2 * e) as f64; 2 * e])
}

/// Probabilists' Gauss–Hermite nodes and weights for `N(0, 1)`.
///
/// Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix with
/// off-diagonal entries `√k`, weights the squared first components of the
/// normalized eigenvectors. The output is symmetrized and sorted ascending.
pub fn gauss_hermite_1d(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=MAX_GAUSS_HERMITE_ORDER).contains(&order) {
        return Err(Error::InvalidConfig(format!(
            "Gauss–Hermite order must be in 1..={MAX_GAUSS_HERMITE_ORDER}, got {order}"
        )));
    }
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order {
        let j = order - 1 - i;
        nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
        weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok((nodes, weights))
}

/// Tensor-product Gauss–Hermite rule pushed through `θ = μ + L ξ`.
///
/// The last parameter coordinate varies fastest.
pub fn gauss_hermite(mean: &DVector<f64>, cov: &DMatrix<f64>, order: usize) -> Result<QuadratureRule> {
    let e = mean.len();
    if e == 0 || cov.nrows() != e {
        return Err(Error::ShapeMismatch(format!(
            "mean of length {e} with {}x{} covariance",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if e > MAX_GAUSS_HERMITE_DIM {
        return Err(Error::DimensionTooLarge { dim: e, max: MAX_GAUSS_HERMITE_DIM });
    }
    let (x, w) = gauss_hermite_1d(order)?;
    let l = psd_sqrt(cov)?;
    let total = order.pow(e as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut xi = DVector::zeros(e);
    for flat in 0..total {
        let mut rest = flat;
        let mut weight = 1.0;
        for k in (0..e).rev() {
            let idx = rest % order;
            rest /= order;
            xi[k] = x[idx];
            weight *= w[idx];
        }
        nodes.push(mean + &l * &xi);
        weights.push(weight);
    }
    QuadratureRule::new(nodes, weights)
}

/// `n` i.i.d. samples with weights `1/n`, drawn from a ChaCha8 stream seeded with `seed`.
pub fn monte_carlo(dist: &ParameterDistribution, n: usize, seed: u64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::InvalidConfig("Monte Carlo rule needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = sample_parameters(dist, n, &mut rng)?;
    QuadratureRule::new(nodes, vec![1.0 / n as f64; n])
}

pub(crate) fn sample_parameters<R: Rng + ?Sized>(
    dist: &ParameterDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    match dist {
        ParameterDistribution::Gaussian { mean, cov } => {
            let l = psd_sqrt(cov)?;
            Ok((0..n)
                .map(|_| {
                    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                    mean + &l * z
                })
                .collect())
        }
        ParameterDistribution::UniformBox { lower, upper } => Ok((0..n)
            .map(|_| {
                DVector::from_fn(lower.len(), |k, _| {
                    let u: f64 = rng.random();
                    lower[k] + (upper[k] - lower[k]) * u
                })
            })
            .collect()),
    }
}

/// Which rule to build for a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RuleSpec {
    #[default]
    Cubature,
    GaussHermite { order: usize },
    MonteCarlo { n: usize, seed: u64 },
}

impl RuleSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cubature => "cubature",
            Self::GaussHermite { .. } => "gauss_hermite",
            Self::MonteCarlo { .. } => "monte_carlo",
        }
    }

    /// Deterministic rules only accept Gaussian distributions.
    pub fn build(&self, dist: &ParameterDistribution) -> Result<QuadratureRule> {
        match (self, dist) {
            (Self::MonteCarlo { n, seed }, _) => monte_carlo(dist, *n, *seed),
            (Self::Cubature, ParameterDistribution::Gaussian { mean, cov }) => {
                spherical_cubature(mean, cov)
            }
            (Self::GaussHermite { order }, ParameterDistribution::Gaussian { mean, cov }) => {
                gauss_hermite(mean, cov, *order)
            }
            (_, ParameterDistribution::UniformBox { .. }) => {
                Err(Error::UnsupportedRule { rule: self.name(), dist: dist.kind() })
            }
        }
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cubature => write!(f, "cubature"),
            Self::GaussHermite { order } => write!(f, "gauss_hermite(order={order})"),
            Self::MonteCarlo { n, seed } => write!(f, "monte_carlo(n={n}, seed={seed})"),
        }
    }
}
