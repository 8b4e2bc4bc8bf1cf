use nalgebra::{DMatrix, Matrix2};
use proptest::prelude::*;

use qkl_core::covariance::lyapunov_residual;
use qkl_core::linalg::max_abs;
use qkl_core::qef::exponential_params;
use qkl_core::{solve_lyapunov, OqhoModel, QefProblem, SpectralBasis};

prop_compose! {
    /// Stable model with 2 or 4 field channels and decay rate bounded away from 0.
    fn stable_model()(
        r11 in 0.2f64..3.0,
        r22 in 0.2f64..3.0,
        corr in -0.9f64..0.9,
        four in any::<bool>(),
        entries in prop::collection::vec(-1.0f64..1.0, 8),
    ) -> OqhoModel {
        let r12 = corr * (r11 * r22).sqrt();
        let rows = if four { 4 } else { 2 };
        let mut m = DMatrix::from_row_slice(rows, 2, &entries[..2 * rows]);
        let half = rows / 2;
        let mu: f64 = (0..half).map(|i| m[(i, 0)] * m[(i + half, 1)] - m[(i + half, 0)] * m[(i, 1)]).sum();
        if mu < 0.0 {
            m.column_mut(1).neg_mut();
        }
        if mu.abs() < 0.05 {
            // keep the decay rate away from zero
            m[(0, 0)] += 0.5;
            m[(half, 1)] += if mu < 0.0 { -0.5 } else { 0.5 };
            let mu2: f64 = (0..half).map(|i| m[(i, 0)] * m[(i + half, 1)] - m[(i + half, 0)] * m[(i, 1)]).sum();
            if mu2 < 0.0 {
                m.column_mut(1).neg_mut();
            }
        }
        OqhoModel::assemble(Matrix2::new(r11, r12, r12, r22), m).unwrap()
    }
}

prop_compose! {
    /// `P_N = I/2 + G G^T` is a valid covariance for any `G`.
    fn admissible_problem(max_n: usize)(n in 1..=max_n)(
        g in prop::collection::vec(-0.6f64..0.6, 4 * n * n),
        mu in 0.3f64..3.0,
        horizon in 0.5f64..3.0,
        n in Just(n),
    ) -> QefProblem {
        let g = DMatrix::from_row_slice(2 * n, 2 * n, &g);
        let p = DMatrix::<f64>::identity(2 * n, 2 * n) * 0.5 + &g * g.transpose();
        let basis = SpectralBasis::solve(mu, horizon, n).unwrap();
        QefProblem::from_parts(basis.lambdas().to_vec(), p).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn structural_identities(model in stable_model()) {
        prop_assume!(model.mu() > 1e-3);
        prop_assert!(max_abs(&model.pr_residual()) <= 1e-12);
        let [l1, l2] = model.drift_eigenvalues();
        let (hi, lo) = if l1.im >= l2.im { (l1, l2) } else { (l2, l1) };
        prop_assert!((hi.re + model.mu()).abs() < 1e-10);
        prop_assert!((hi.im - model.nu()).abs() < 1e-10);
        prop_assert!((lo.im + model.nu()).abs() < 1e-10);
        let canon = model.canonicalize().unwrap();
        prop_assert!(canon.similarity_residual(&model) < 1e-12);
        let p = solve_lyapunov(&canon).unwrap();
        prop_assert!(max_abs(&lyapunov_residual(&canon, &p)) <= 1e-12);
        // the invariant covariance satisfies the uncertainty relation
        let (_, low, _) = qkl_core::linalg::sym2_eigen(&p);
        prop_assert!(low > 0.0 && p.determinant() >= 0.25 - 1e-12);
    }

    #[test]
    fn spectrum_is_bracketed_and_decreasing(mu in 0.05f64..5.0, horizon in 0.1f64..5.0) {
        let basis = SpectralBasis::solve(mu, horizon, 30).unwrap();
        let r = basis.ratio();
        for k in 0..30 {
            let u = basis.roots()[k];
            prop_assert!(u > std::f64::consts::PI * (k as f64) / r);
            prop_assert!(u < std::f64::consts::PI * (k as f64 + 1.0) / r);
            prop_assert!(basis.lambdas()[k] > 0.0 && basis.lambdas()[k] < 2.0 / mu);
        }
        prop_assert!(basis.lambdas().windows(2).all(|w| w[0] > w[1]));
        prop_assert!(basis.trace_deficit() > 0.0);
    }

    #[test]
    fn hyperbolic_identity(x in 1e-6f64..3.0) {
        let (a, b) = exponential_params(x, 1.0);
        prop_assert!(a > 0.0 && a < 1.0 && b > 0.0);
        prop_assert!((b * (1.0 - a * a) - 2.0 * a).abs() <= 1e-14 * b.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qef_invariants(problem in admissible_problem(6), frac in 0.05f64..0.95) {
        let (lo, hi) = problem.critical_bracket().unwrap();
        let star = problem.critical_theta(lo, hi).unwrap();
        let theta = frac * star;
        let ev = problem.evaluate(theta).unwrap();
        prop_assert!(ev.radius < 1.0);
        // det Gamma real, in (0, 1]
        prop_assert!(ev.log_det.arg.abs() <= 1e-9);
        prop_assert!(ev.log_det.log_abs <= 1e-12);
        // Jensen: ln Xi >= theta E Q
        prop_assert!(ev.log_xi >= theta * problem.mean_square() * (1.0 - 1e-12));
        prop_assert!((ev.telescoped_log_xi() - ev.log_xi).abs() < 1e-10);
        for (a, b) in ev.alphas.iter().zip(&ev.betas) {
            prop_assert!(*a > 0.0 && *a < 1.0 && *b > 0.0);
        }
        // growth in the order
        let mut prev_xi = 0.0;
        let mut prev_r = 0.0;
        for n in 1..=problem.order() {
            let sub = problem.truncated(n).unwrap();
            let e = sub.evaluate(theta).unwrap();
            prop_assert!(e.log_xi >= prev_xi - 1e-13);
            prop_assert!(e.radius >= prev_r - 1e-13);
            prev_xi = e.log_xi;
            prev_r = e.radius;
        }
        // growth in theta
        prop_assert!(problem.radius(0.5 * theta).unwrap() <= ev.radius);
        prop_assert!(problem.log_xi(0.5 * theta).unwrap() < ev.log_xi);
    }
}
