//! Square-root Gaussians and Gaussian mixtures.
//!
//! Every covariance in this crate is carried as a lower-triangular factor `L`
//! with `Σ = L Lᵀ`. Predictions and updates never form `Σ` explicitly; they
//! stack factors side by side and re-triangularize with a QR decomposition.
//! Zero pivots are allowed, so exactly known (Dirac) components are ordinary
//! values rather than special cases.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_TOL: f64 = 1e-10;
const INNOVATION_PIVOT_TOL: f64 = 1e-14;
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Lower-triangular `L` (n×n) with `L Lᵀ = M Mᵀ` for an arbitrary n×k matrix `M`.
///
/// Computed from the QR decomposition of `Mᵀ`; the diagonal of the result is
/// made nonnegative. `k` may be smaller than `n` (including zero), in which
/// case the trailing columns of `L` are zero.
pub fn triangularize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let k = m.ncols();
    let mut l = DMatrix::zeros(n, n);
    if k == 0 || n == 0 {
        return l;
    }
    let r = m.transpose().qr().r();
    for i in 0..r.nrows().min(n) {
        let sign = if r[(i, i)] < 0.0 { -1.0 } else { 1.0 };
        for j in i..n {
            l[(j, i)] = sign * r[(i, j)];
        }
    }
    l
}

/// Lower-triangular square root of a symmetric positive semidefinite matrix.
///
/// Positive definite inputs go through a plain Cholesky factorization.
/// Singular inputs fall back to a symmetric eigendecomposition (clamping
/// round-off negative eigenvalues to zero) followed by [`triangularize`].
pub fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "covariance must be square, got {}x{}",
            n,
            cov.ncols()
        )));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonPsd("covariance has non-finite entries".into()));
    }
    let scale = cov.norm().max(1.0);
    let asym = (cov - cov.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NonPsd(format!("asymmetry {asym:e} exceeds tolerance")));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    if let Some(chol) = cov.clone().cholesky() {
        let l = chol.l();
        if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Ok(l);
        }
    }

    let sym = 0.5 * (cov + cov.transpose());
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -EIGEN_TOL * cov.norm() {
        return Err(Error::NonPsd(format!("smallest eigenvalue {min:e} is negative")));
    }
    let mut factor = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(triangularize(&factor))
}

/// A multivariate normal distribution in square-root form.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov_sqrt: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian from a mean and a dense covariance matrix.
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let cov_sqrt = psd_sqrt(cov)?;
        Ok(Self { mean, cov_sqrt })
    }

    /// Builds a Gaussian from any square root `M` of the covariance (`Σ = M Mᵀ`).
    ///
    /// `M` may have any number of columns; it is re-triangularized.
    pub fn from_sqrt(mean: DVector<f64>, sqrt: &DMatrix<f64>) -> Result<Self> {
        if sqrt.nrows() != mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "mean has length {} but square root has {} rows",
                mean.len(),
                sqrt.nrows()
            )));
        }
        Ok(Self { cov_sqrt: triangularize(sqrt), mean })
    }

    /// Point mass at `mean`.
    pub fn dirac(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self { mean, cov_sqrt: DMatrix::zeros(n, n) }
    }

    pub(crate) fn from_parts(mean: DVector<f64>, cov_sqrt: DMatrix<f64>) -> Self {
        debug_assert_eq!(cov_sqrt.nrows(), mean.len());
        debug_assert!(cov_sqrt.is_square());
        Self { mean, cov_sqrt }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Lower-triangular factor `L` of the covariance.
    pub fn cov_sqrt(&self) -> &DMatrix<f64> {
        &self.cov_sqrt
    }

    /// Dense covariance `L Lᵀ`.
    pub fn cov(&self) -> DMatrix<f64> {
        &self.cov_sqrt * self.cov_sqrt.transpose()
    }

    /// Same mean, covariance multiplied by `factor ≥ 0`.
    pub fn scale_cov(&self, factor: f64) -> Self {
        Self { mean: self.mean.clone(), cov_sqrt: &self.cov_sqrt * factor.sqrt() }
    }

    /// Distribution of `A x` (no offset, no added noise).
    pub fn project(&self, a: &DMatrix<f64>) -> Result<Self> {
        let noise = DMatrix::zeros(a.nrows(), 0);
        affine_predict(self, a, &DVector::zeros(a.nrows()), &noise)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.cov_sqrt * xi
    }
}

/// Pushes `g` through `x ↦ A x + b` and adds zero-mean noise with square root `noise_sqrt`.
///
/// `noise_sqrt` must have as many rows as `A`; its column count is free, so an
/// empty matrix means "no noise".
pub fn affine_predict(
    g: &Gaussian,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    noise_sqrt: &DMatrix<f64>,
) -> Result<Gaussian> {
    if a.ncols() != g.dim() || b.len() != a.nrows() || noise_sqrt.nrows() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "affine_predict: A is {}x{}, b has {} entries, noise has {} rows, state has dim {}",
            a.nrows(),
            a.ncols(),
            b.len(),
            noise_sqrt.nrows(),
            g.dim()
        )));
    }
    let mean = a * g.mean() + b;
    let n_out = a.nrows();
    let propagated = a * g.cov_sqrt();
    let mut stacked = DMatrix::zeros(n_out, propagated.ncols() + noise_sqrt.ncols());
    stacked.columns_mut(0, propagated.ncols()).copy_from(&propagated);
    stacked.columns_mut(propagated.ncols(), noise_sqrt.ncols()).copy_from(noise_sqrt);
    Ok(Gaussian::from_parts(mean, triangularize(&stacked)))
}

/// Conditions `g` on the linear observation `H x = H m − residual` observed
/// with additive noise of square root `obs_noise_sqrt`.
///
/// `residual` is the predicted observation minus the observed value, so a zero
/// residual leaves the mean untouched. `obs_noise_sqrt` may have zero columns
/// (exact observation). Returns the posterior and the lower-triangular square
/// root of the innovation covariance `S = H Σ Hᵀ + R`.
pub fn condition_linear(
    g: &Gaussian,
    h: &DMatrix<f64>,
    residual: &DVector<f64>,
    obs_noise_sqrt: &DMatrix<f64>,
) -> Result<(Gaussian, DMatrix<f64>)> {
    let n = g.dim();
    let m = h.nrows();
    if h.ncols() != n || residual.len() != m || obs_noise_sqrt.nrows() != m {
        return Err(Error::ShapeMismatch(format!(
            "condition_linear: H is {}x{}, residual has {} entries, noise has {} rows, state has dim {}",
            m,
            h.ncols(),
            residual.len(),
            obs_noise_sqrt.nrows(),
            n
        )));
    }
    let k = obs_noise_sqrt.ncols();
    let l = g.cov_sqrt();

    // [ R^½  H L ]      [ S^½  0 ]
    // [  0    L  ]  ->  [  X   Y ]   with X = Σ Hᵀ S^-ᵀ/², Y Yᵀ = posterior covariance
    let mut pre = DMatrix::zeros(m + n, k + n);
    pre.view_mut((0, 0), (m, k)).copy_from(obs_noise_sqrt);
    pre.view_mut((0, k), (m, n)).copy_from(&(h * l));
    pre.view_mut((m, k), (n, n)).copy_from(l);
    let post = triangularize(&pre);

    let s_sqrt = post.view((0, 0), (m, m)).into_owned();
    let cross = post.view((m, 0), (n, m)).into_owned();
    let y = post.view((m, m), (n, n)).into_owned();

    let s_norm = (&s_sqrt * s_sqrt.transpose()).norm();
    let singular = s_sqrt
        .diagonal()
        .iter()
        .any(|d| !(d * d > INNOVATION_PIVOT_TOL * s_norm));
    if singular {
        return Err(Error::SingularInnovation);
    }
    let w = s_sqrt
        .solve_lower_triangular(residual)
        .ok_or(Error::SingularInnovation)?;
    let mean = g.mean() - cross * w;
    Ok((Gaussian::from_parts(mean, y), s_sqrt))
}

/// Covariance of a Gaussian mixture split into its two sources.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCovariance {
    /// `pn + non_pn`.
    pub total: DMatrix<f64>,
    /// Weighted average of the component covariances.
    pub pn: DMatrix<f64>,
    /// Weighted spread of the component means around the mixture mean.
    pub non_pn: DMatrix<f64>,
}

/// Finite mixture `Σ wᵢ N(μᵢ, Σᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidMixture(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidMixture("weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {sum}")));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::InvalidMixture("components differ in dimension".into()));
        }
        Ok(Self { weights, components })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// `Σ wᵢ μᵢ`.
    pub fn mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.dim());
        for (w, c) in self.weights.iter().zip(&self.components) {
            mean.axpy(*w, c.mean(), 1.0);
        }
        mean
    }

    /// Moment-matched covariance together with its within/between split.
    pub fn covariance(&self) -> MixtureCovariance {
        let d = self.dim();
        let mean = self.mean();
        let mut pn = DMatrix::zeros(d, d);
        let mut non_pn = DMatrix::zeros(d, d);
        for (w, c) in self.weights.iter().zip(&self.components) {
            pn += *w * c.cov();
            let dev = c.mean() - &mean;
            non_pn += *w * &dev * dev.transpose();
        }
        let total = &pn + &non_pn;
        MixtureCovariance { total, pn, non_pn }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        self.components[idx].sample(rng)
    }
}
