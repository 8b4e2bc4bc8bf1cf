use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("energy matrix is not positive definite (det = {det:e}, trace = {trace:e})")]
    NotPositiveDefinite { det: f64, trace: f64 },

    #[error("{what} is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { what: &'static str, asymmetry: f64 },

    #[error("coupling matrix has {0} rows; the field channel count must be even and positive")]
    OddChannelCount(usize),

    #[error("{what}: expected {expected} entries, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("M^T J M deviates from the antisymmetric form mu*J by {0:e}")]
    CouplingForm(f64),

    #[error("decay rate mu = {0} is not positive, so the drift matrix is not Hurwitz")]
    NotStable(f64),

    #[error("root iteration for mode {mode} stalled with residual {residual:e}")]
    ConvergenceFailure { mode: usize, residual: f64 },

    #[error("index {index} out of range for {len} modes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("time {t} lies outside the horizon [0, {horizon}]")]
    TimeOutOfDomain { t: f64, horizon: f64 },

    #[error("quadrature grid has {nodes_per_period:.2} nodes per period of the fastest oscillation (need at least 4)")]
    GridTooCoarse { nodes_per_period: f64 },

    #[error("quadrature needs {panels} panels, above the budget of {limit}")]
    QuadratureBudgetExceeded { panels: usize, limit: usize },

    #[error("quantum covariance has eigenvalue {min_eigenvalue:e} below the admissibility floor")]
    AdmissibilityViolation { min_eigenvalue: f64 },

    #[error("spectral radius r_N = {radius} is not below 1; theta is beyond the admissible range")]
    RadiusExceeded { radius: f64 },

    #[error("Gamma matrix factorisation hit an exactly zero pivot")]
    SingularGamma,

    #[error("Schur series not converged after {orders} orders (last increment {last_increment:e}, partial ln Xi = {partial})")]
    NotConverged {
        orders: usize,
        last_increment: f64,
        partial: f64,
    },

    #[error("weighting matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("theta bracket [{low}, {high}] does not straddle r_N = 1 (r_N = {r_low}, {r_high})")]
    BracketInvalid {
        low: f64,
        high: f64,
        r_low: f64,
        r_high: f64,
    },

    #[error("Nystrom grid of {n} points is too small for {count} modes (need at least {required})")]
    GridTooSmall {
        n: usize,
        count: usize,
        required: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Errors caused by the numerical machinery rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure { .. }
                | Error::SingularGamma
                | Error::QuadratureBudgetExceeded { .. }
                | Error::AdmissibilityViolation { .. }
                | Error::NotConverged { .. }
                | Error::GridTooCoarse { .. }
        )
    }
}
