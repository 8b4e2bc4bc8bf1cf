use nalgebra::{DMatrix, Matrix2};

use qkl_core::oracle::{taylor_match, wick_moments};
use qkl_core::{solve_lyapunov, CovarianceSet, OqhoModel, QefProblem, QuadratureConfig, SpectralBasis};

fn general_problem(n: usize) -> QefProblem {
    let m = DMatrix::from_row_slice(4, 2, &[0.9, -0.2, -0.3, -0.7, 0.4, 0.1, 0.25, -0.6]);
    let canon = OqhoModel::new(Matrix2::new(2.0, 0.5, 0.5, 1.0), m)
        .unwrap()
        .canonicalize()
        .unwrap();
    let p = solve_lyapunov(&canon).unwrap();
    let basis = SpectralBasis::solve(canon.mu(), 1.0, n).unwrap();
    let set = CovarianceSet::compute(&basis, &p, &canon, &QuadratureConfig::default()).unwrap();
    QefProblem::new(&basis, &set).unwrap()
}

#[test]
fn wick_mean_matches_mean_square_bitwise() {
    let problem = general_problem(6);
    let m = wick_moments(problem.lambdas(), problem.covariance()).unwrap();
    assert_eq!(m.m1.to_bits(), problem.mean_square().to_bits());
    assert!(m.kappa2 > 0.0);
    assert!(m.imaginary_residual < 1e-12);
}

#[test]
fn determinant_formula_matches_wick_expansion() {
    let problem = general_problem(10);
    let m = wick_moments(problem.lambdas(), problem.covariance()).unwrap();
    let theta = 1e-3 / problem.lambdas()[0];
    let t = taylor_match(&m, theta, |x| problem.log_xi(x)).unwrap();
    assert!(t.relative_residual < 1e-5, "{t:?}");
    assert!((6.0..=10.0).contains(&t.halving_ratio), "{t:?}");
}

#[test]
fn schur_series_telescopes_on_general_model() {
    let problem = general_problem(12);
    let (lo, hi) = problem.critical_bracket().unwrap();
    let theta = 0.8 * problem.critical_theta(lo, hi).unwrap();
    let s = problem.series_report(theta, 0.0).unwrap();
    assert_eq!(s.orders(), 12);
    assert!(!s.converged);
    assert!(s.telescoping_gap() < 1e-10);
    assert!(s.radii.windows(2).all(|w| w[1] >= w[0] - 1e-13));
}
