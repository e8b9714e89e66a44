//! Uncertainty propagation through filtering-based probabilistic ODE solvers.
//!
//! Each quadrature node of a parameter distribution is solved with an ODE
//! filter, giving a Gaussian over the solution per node. The weighted
//! collection of those Gaussians is a Gaussian mixture whose moment-matched
//! covariance splits into a numerical part (average solver covariance) and a
//! parametric part (spread of the node means).
//!
//! ```
//! use odeup::ivp::benchmark;
//! use odeup::odefilter::SolverConfig;
//! use odeup::propagate::propagate;
//! use odeup::quadrature::RuleSpec;
//!
//! let (problem, theta) = benchmark("linear")?;
//! let result = propagate(&problem, &theta, &RuleSpec::Cubature, &SolverConfig::new(1, 0.01))?;
//! let last = result.times.len() - 1;
//! assert!((result.mean[last][0] - 3f64.exp()).abs() < 0.1);
//! # Ok::<(), odeup::Error>(())
//! ```

pub mod error;
pub mod gaussians;
pub mod ivp;
pub mod odefilter;
pub mod prior;
pub mod propagate;
pub mod quadrature;
pub mod reference;

pub use error::{Error, Result};
pub use gaussians::{Gaussian, GaussianMixture};
pub use ivp::{benchmark, ConcreteIvp, IvProblem, ParameterDistribution};
pub use odefilter::{solve, Linearization, OdeSolution, SolverConfig};
pub use prior::IwpPrior;
pub use propagate::{propagate, PropagationResult};
pub use quadrature::{QuadratureRule, RuleSpec};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gaussians.md")]
    mod gaussians {}
    #[doc = include_str!("../../../book/src/ode-filter.md")]
    mod ode_filter {}
    #[doc = include_str!("../../../book/src/quadrature.md")]
    mod quadrature {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/reference.md")]
    mod reference {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
