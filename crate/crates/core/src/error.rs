use thiserror::Error;

/// Failures surfaced by the numerical pipelines.
///
/// Physics-level problems (zero crossings, positivity) are errors rather than
/// warnings: the downstream coefficients are meaningless past them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("discrete spectral density has no pointwise value")]
    NoPointwiseDensity,

    #[error("operation `{op}` does not support the {variant} spectral density")]
    UnsupportedVariant { op: &'static str, variant: &'static str },

    #[error("flat spectral density has a Dirac kernel; use the closed-form flat Green function")]
    FlatKernel,

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {evaluations} evaluations")]
    Quadrature { estimate: f64, error: f64, evaluations: usize },

    #[error("principal value requested at a window edge, omega = {omega}")]
    SingularEdge { omega: f64 },

    #[error("Green function zero crossing near t = {time}")]
    ZeroCrossing { time: f64 },

    #[error("Gaussian state positivity violated at t = {time}: symplectic eigenvalue {nu}")]
    Positivity { time: f64, nu: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("integration became unstable at t = {time} after {retries} step halvings")]
    Unstable { time: f64, retries: u32 },

    #[error("one-particle Hamiltonian has a non-positive eigenvalue {eigenvalue}; thermal state undefined")]
    UnstableHamiltonian { eigenvalue: f64 },

    #[error("unsupported case: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
