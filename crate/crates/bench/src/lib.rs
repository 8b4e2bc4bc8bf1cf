//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, Matrix2};
use qkl_core::{solve_lyapunov, CanonicalModel, CovarianceSet, OqhoModel, QefProblem, QuadratureConfig, SpectralBasis};

/// Four-channel model with distinct decay and rotation rates.
pub fn reference_model() -> CanonicalModel {
    let m = DMatrix::from_row_slice(4, 2, &[0.9, -0.2, -0.3, -0.7, 0.4, 0.1, 0.25, -0.6]);
    OqhoModel::new(Matrix2::new(2.0, 0.5, 0.5, 1.0), m)
        .and_then(|model| model.canonicalize())
        .expect("reference model is stable")
}

pub fn basis(order: usize) -> SpectralBasis {
    let canon = reference_model();
    SpectralBasis::solve(canon.mu(), 1.0, order).expect("valid basis")
}

pub fn covariance(basis: &SpectralBasis) -> CovarianceSet {
    let canon = reference_model();
    let p = solve_lyapunov(&canon).expect("stable");
    CovarianceSet::compute(basis, &p, &canon, &QuadratureConfig::default()).expect("blocks")
}

pub fn problem(order: usize) -> QefProblem {
    let b = basis(order);
    QefProblem::new(&b, &covariance(&b)).expect("admissible")
}
