//! The q-times integrated Wiener process prior.
//!
//! The state stacks, for each ODE coordinate, the solution and its first `q`
//! time derivatives: `x = [y₁, y₁', …, y₁⁽q⁾, y₂, y₂', …]`. Coordinate `k`'s
//! derivative of order `i` therefore lives at index `k (q+1) + i`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// q-times integrated Wiener process over ℝᵈ with diffusion `κ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IwpPrior {
    dim: usize,
    order: usize,
    kappa2: f64,
}

impl IwpPrior {
    /// Prior with unit diffusion.
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        Self::with_diffusion(dim, order, 1.0)
    }

    pub fn with_diffusion(dim: usize, order: usize, kappa2: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("ODE dimension must be positive".into()));
        }
        if order == 0 {
            return Err(Error::InvalidConfig("prior order q must be at least 1".into()));
        }
        if !(kappa2 > 0.0 && kappa2.is_finite()) {
            return Err(Error::InvalidConfig(format!("diffusion must be positive, got {kappa2}")));
        }
        Ok(Self { dim, order, kappa2 })
    }

    /// ODE dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Smoothness order `q`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    /// `D = d (q + 1)`.
    pub fn state_dim(&self) -> usize {
        self.dim * (self.order + 1)
    }

    /// State index of derivative `order` of coordinate `coord`.
    pub fn index(&self, coord: usize, order: usize) -> usize {
        coord * (self.order + 1) + order
    }

    /// Transition matrix `Φ(h) = I_d ⊗ Φ̆(h)` with `Φ̆ᵢⱼ = h^(j−i) / (j−i)!` for `j ≥ i`.
    pub fn transition(&self, h: f64) -> Result<DMatrix<f64>> {
        check_step(h)?;
        let block = self.transition_block(h);
        Ok(self.kron_identity(&block))
    }

    /// Lower-triangular square root of `Q(h) = I_d ⊗ κ² Q̆(h)`.
    ///
    /// Uses `Q̆(h) = T Q̆(1) T` with `T = diag(h^(q−i+½))`, so the factor of the
    /// unit-step matrix is computed once and rescaled by rows; this stays
    /// accurate for tiny steps where `Q̆(h)` itself is badly conditioned.
    pub fn process_noise_sqrt(&self, h: f64) -> Result<DMatrix<f64>> {
        check_step(h)?;
        let q = self.order;
        let unit = unit_noise_block(q);
        let mut block = unit
            .cholesky()
            .expect("unit-step IWP covariance is positive definite")
            .l();
        for i in 0..=q {
            let scale = h.powf((q - i) as f64 + 0.5) * self.kappa2.sqrt();
            block.row_mut(i).scale_mut(scale);
        }
        Ok(self.kron_identity(&block))
    }

    /// Dense process noise `Q(h)`.
    pub fn process_noise(&self, h: f64) -> Result<DMatrix<f64>> {
        check_step(h)?;
        let q = self.order;
        let block = DMatrix::from_fn(q + 1, q + 1, |i, j| {
            let p = (2 * q + 1 - i - j) as i32;
            self.kappa2 * h.powi(p)
                / (p as f64 * factorial(q - i) * factorial(q - j))
        });
        Ok(self.kron_identity(&block))
    }

    /// Projection `E_order = I_d ⊗ e_orderᵀ` (d × D).
    pub fn projection(&self, order: usize) -> Result<DMatrix<f64>> {
        if order > self.order {
            return Err(Error::OrderOutOfRange { order, max: self.order });
        }
        let mut e = DMatrix::zeros(self.dim, self.state_dim());
        for k in 0..self.dim {
            e[(k, self.index(k, order))] = 1.0;
        }
        Ok(e)
    }

    fn transition_block(&self, h: f64) -> DMatrix<f64> {
        let q = self.order;
        DMatrix::from_fn(q + 1, q + 1, |i, j| {
            if j >= i {
                h.powi((j - i) as i32) / factorial(j - i)
            } else {
                0.0
            }
        })
    }

    fn kron_identity(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim).kronecker(block)
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveStep(h))
    }
}

fn unit_noise_block(q: usize) -> DMatrix<f64> {
    DMatrix::from_fn(q + 1, q + 1, |i, j| {
        let p = (2 * q + 1 - i - j) as f64;
        1.0 / (p * factorial(q - i) * factorial(q - j))
    })
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn once_integrated_transition() {
        let p = IwpPrior::new(1, 1).unwrap();
        assert_eq!(p.transition(0.3).unwrap(), dmatrix![1.0, 0.3; 0.0, 1.0]);
    }

    #[test]
    fn twice_integrated_transition() {
        let p = IwpPrior::new(1, 2).unwrap();
        assert_eq!(
            p.transition(1.0).unwrap(),
            dmatrix![1.0, 1.0, 0.5; 0.0, 1.0, 1.0; 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn kronecker_blocks() {
        let p = IwpPrior::new(2, 1).unwrap();
        let phi = p.transition(1.0).unwrap();
        assert_eq!(
            phi,
            dmatrix![
                1.0, 1.0, 0.0, 0.0;
                0.0, 1.0, 0.0, 0.0;
                0.0, 0.0, 1.0, 1.0;
                0.0, 0.0, 0.0, 1.0
            ]
        );
    }

    #[test]
    fn noise_closed_forms() {
        let h = 0.7;
        let p = IwpPrior::new(1, 1).unwrap();
        let expected = dmatrix![h * h * h / 3.0, h * h / 2.0; h * h / 2.0, h];
        assert_relative_eq!(p.process_noise(h).unwrap(), expected, epsilon = 1e-15);
        let l = p.process_noise_sqrt(h).unwrap();
        assert_relative_eq!(&l * l.transpose(), expected, max_relative = 1e-12);

        let p = IwpPrior::new(1, 2).unwrap();
        let expected = dmatrix![
            1.0 / 20.0, 1.0 / 8.0, 1.0 / 6.0;
            1.0 / 8.0, 1.0 / 3.0, 1.0 / 2.0;
            1.0 / 6.0, 1.0 / 2.0, 1.0
        ];
        assert_relative_eq!(p.process_noise(1.0).unwrap(), expected, epsilon = 1e-15);
        let l = p.process_noise_sqrt(1.0).unwrap();
        assert_relative_eq!(&l * l.transpose(), expected, max_relative = 1e-12);
    }

    #[test]
    fn diffusion_scales_noise_only() {
        let a = IwpPrior::new(2, 2).unwrap();
        let b = IwpPrior::with_diffusion(2, 2, 4.0).unwrap();
        assert_eq!(a.transition(0.4).unwrap(), b.transition(0.4).unwrap());
        assert_relative_eq!(
            b.process_noise(0.4).unwrap(),
            4.0 * a.process_noise(0.4).unwrap(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            b.process_noise_sqrt(0.4).unwrap(),
            2.0 * a.process_noise_sqrt(0.4).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn projections() {
        let p = IwpPrior::new(1, 2).unwrap();
        assert_eq!(p.projection(0).unwrap(), dmatrix![1.0, 0.0, 0.0]);
        assert_eq!(p.projection(1).unwrap(), dmatrix![0.0, 1.0, 0.0]);
        let p = IwpPrior::new(2, 1).unwrap();
        assert_eq!(p.projection(0).unwrap(), dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.projection(2), Err(Error::OrderOutOfRange { order: 2, max: 1 }));
    }

    #[test]
    fn rejects_bad_steps_and_params() {
        let p = IwpPrior::new(1, 1).unwrap();
        assert_eq!(p.transition(0.0), Err(Error::NonPositiveStep(0.0)));
        assert!(p.process_noise_sqrt(-1.0).is_err());
        assert!(IwpPrior::new(1, 0).is_err());
        assert!(IwpPrior::with_diffusion(1, 1, 0.0).is_err());
    }
}
