//! Numerical engine for the commutator-kernel Karhunen-Loeve (QKL) expansion
//! of a one-mode open quantum harmonic oscillator.
//!
//! Pipeline: [`OqhoModel`] is canonicalised to [`CanonicalModel`]; the
//! eigenbasis of the exponential covariance operator on `[0, T]` is solved in
//! [`SpectralBasis`]; the QKL coefficient covariances are assembled in a
//! [`CovarianceSet`]; and the truncated quadratic-exponential functional is
//! evaluated by [`QefProblem`]. The [`oracle`] module cross-checks the
//! spectrum and the small-`theta` behaviour independently.

pub mod covariance;
pub mod eigenbasis;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod qef;
pub mod quadrature;
pub mod system;

pub use covariance::{solve_lyapunov, CovarianceSet, PauliCoefficients};
pub use eigenbasis::SpectralBasis;
pub use error::{Error, Result};
pub use linalg::{Complex64, LogDet};
pub use oracle::{OracleCheck, OracleReport, WickMoments};
pub use qef::{QefEvaluation, QefProblem, SchurSeries};
pub use quadrature::QuadratureConfig;
pub use system::{CanonicalModel, OqhoModel};
