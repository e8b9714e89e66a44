use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NonPsd(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("innovation covariance is numerically singular")]
    SingularInnovation,

    #[error("predicted covariance is numerically singular")]
    SingularPrediction,

    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("derivative order {order} out of range 0..={max}")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("derivative of order {requested} unavailable (problem supports up to {supported})")]
    UnsupportedOrder { requested: usize, supported: usize },

    #[error("degenerate residual: innovation covariance at step {0} is singular")]
    DegenerateResidual(usize),

    #[error("quadrature dimension {dim} too large (max {max})")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("rule `{rule}` cannot integrate against {dist} distributions")]
    UnsupportedRule { rule: &'static str, dist: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("step {index} (t = {t}) failed: {source}")]
    Step {
        index: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("solve for quadrature node {node} failed: {source}")]
    NodeSolveFailed {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("node solutions live on different time grids")]
    MixtureGridMismatch,

    #[error("reference sample {sample} failed: {source}")]
    SampleFailed {
        sample: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
