//! Truncated quadratic-exponential functional with scalar weight.
//!
//! For `theta >= 0` and the leading `N` QKL coefficient pairs,
//! `Xi_N = det(Gamma_N)^{-1/2}` with
//! `Gamma_N = I - (Phi P_N Phi^T + (i/2) I (x) Upsilon) Psi`. The formula
//! holds while `r_N = rho(P_N diag(2 alpha_k, beta_k)) < 1`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3};

use crate::covariance::CovarianceSet;
use crate::eigenbasis::SpectralBasis;
use crate::error::{Error, Result};
use crate::linalg::{log_det, max_abs, Complex64, ComplexLu, LogDet};
use crate::quadrature::QuadratureConfig;
use crate::system::rotation;

/// Radii at or above `1 - RADIUS_MARGIN` are treated as inadmissible.
pub const RADIUS_MARGIN: f64 = 1e-12;
/// Target `|r_N(theta*) - 1|` for [`QefProblem::critical_theta`].
pub const CRITICAL_TOLERANCE: f64 = 1e-10;
/// Consecutive small increments required before the series is declared converged.
pub const SERIES_PATIENCE: usize = 3;

fn check_theta(theta: f64) -> Result<()> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "risk sensitivity must be finite and nonnegative, got {theta}"
        )));
    }
    Ok(())
}

/// `(tanh(theta lambda), sinh(2 theta lambda))`.
pub fn exponential_params(theta: f64, lambda: f64) -> (f64, f64) {
    let x = theta * lambda;
    (x.tanh(), (2.0 * x).sinh())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralMatrices {
    /// `I_N (x) [[1,0],[0,1],[1,0]]`, shape `3N x 2N`.
    pub phi: DMatrix<f64>,
    /// Diagonal of `Psi_N`: `(alpha_k, beta_k, alpha_k)` per mode.
    pub psi: DVector<f64>,
    pub upsilon: Matrix3<f64>,
}

pub fn upsilon() -> Matrix3<f64> {
    Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0)
}

pub fn structural_matrices(alphas: &[f64], betas: &[f64]) -> Result<StructuralMatrices> {
    if alphas.len() != betas.len() {
        return Err(Error::DimensionMismatch {
            what: "beta list",
            expected: alphas.len(),
            got: betas.len(),
        });
    }
    let n = alphas.len();
    let mut phi = DMatrix::zeros(3 * n, 2 * n);
    let mut psi = DVector::zeros(3 * n);
    for k in 0..n {
        phi[(3 * k, 2 * k)] = 1.0;
        phi[(3 * k + 1, 2 * k + 1)] = 1.0;
        phi[(3 * k + 2, 2 * k)] = 1.0;
        psi[3 * k] = alphas[k];
        psi[3 * k + 1] = betas[k];
        psi[3 * k + 2] = alphas[k];
    }
    Ok(StructuralMatrices {
        phi,
        psi,
        upsilon: upsilon(),
    })
}

/// Symmetric matrix inheriting the upper triangle (with diagonal) of `d`.
pub fn diamond_map(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !d.is_square() {
        return Err(Error::InvalidArgument(format!(
            "diamond map of a non-square {}x{} matrix",
            d.nrows(),
            d.ncols()
        )));
    }
    Ok(DMatrix::from_fn(d.nrows(), d.ncols(), |j, k| {
        if j <= k {
            d[(j, k)]
        } else {
            d[(k, j)]
        }
    }))
}

/// One evaluation of the truncated functional at a fixed `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct QefEvaluation {
    pub theta: f64,
    pub order: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gamma: DMatrix<Complex64>,
    pub radius: f64,
    pub log_det: LogDet,
    /// `ln Xi_N = -Re(ln det Gamma_N) / 2`.
    pub log_xi: f64,
    /// `Re ln det Gamma_1` followed by `Re ln det Gamma_{n+1|n}` for `n = 1..N-1`.
    pub schur_increments: Vec<f64>,
}

impl QefEvaluation {
    pub fn xi(&self) -> f64 {
        self.log_xi.exp()
    }

    /// `-(1/2) * sum(schur_increments)`, the telescoped counterpart of `log_xi`.
    pub fn telescoped_log_xi(&self) -> f64 {
        -0.5 * self.schur_increments.iter().sum::<f64>()
    }
}

/// Partial sums of the Schur series for `ln Xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurSeries {
    pub theta: f64,
    /// `Re ln det` of `Gamma_1`, then of each Schur complement.
    pub increments: Vec<f64>,
    /// `-(1/2)` times the running sums of `increments`.
    pub partial_log_xi: Vec<f64>,
    /// Direct `-(1/2) Re ln det Gamma_n` at each order, for the telescoping check.
    pub direct_log_xi: Vec<f64>,
    pub radii: Vec<f64>,
    pub converged: bool,
}

impl SchurSeries {
    pub fn log_xi(&self) -> f64 {
        *self.partial_log_xi.last().unwrap_or(&0.0)
    }

    pub fn orders(&self) -> usize {
        self.increments.len()
    }

    /// Largest gap between telescoped and direct `ln Xi_n`.
    pub fn telescoping_gap(&self) -> f64 {
        self.partial_log_xi
            .iter()
            .zip(&self.direct_log_xi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Eigenvalues `lambda_k` and the assembled `P_N` of the leading `N` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct QefProblem {
    lambdas: Vec<f64>,
    covariance: DMatrix<f64>,
}

impl QefProblem {
    pub fn new(basis: &SpectralBasis, set: &CovarianceSet) -> Result<Self> {
        let n = set.order();
        if basis.len() < n {
            return Err(Error::DimensionMismatch {
                what: "eigenvalue list",
                expected: n,
                got: basis.len(),
            });
        }
        Self::from_parts(basis.lambdas()[..n].to_vec(), set.assembled().clone())
    }

    pub fn from_parts(lambdas: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = lambdas.len();
        if n == 0 {
            return Err(Error::InvalidArgument("QEF order must be at least 1".into()));
        }
        if covariance.shape() != (2 * n, 2 * n) {
            return Err(Error::DimensionMismatch {
                what: "assembled covariance",
                expected: 2 * n,
                got: covariance.nrows(),
            });
        }
        if let Some(&bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
            return Err(Error::InvalidArgument(format!("eigenvalue {bad} is not positive")));
        }
        Ok(Self { lambdas, covariance })
    }

    pub fn order(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.order() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.order(),
            });
        }
        Self::from_parts(
            self.lambdas[..n].to_vec(),
            self.covariance.view((0, 0), (2 * n, 2 * n)).into_owned(),
        )
    }

    fn params(&self, theta: f64) -> (Vec<f64>, Vec<f64>) {
        self.lambdas.iter().map(|&l| exponential_params(theta, l)).unzip()
    }

    /// `E Q_N = sum_k lambda_k tr P_kk`.
    pub fn mean_square(&self) -> f64 {
        let mut acc = 0.0;
        for (k, &l) in self.lambdas.iter().enumerate() {
            acc += l * self.covariance[(2 * k, 2 * k)];
            acc += l * self.covariance[(2 * k + 1, 2 * k + 1)];
        }
        acc
    }

    /// Spectral radius of `P_N diag(2 alpha_k, beta_k)`, computed as the
    /// largest eigenvalue of the similar symmetric matrix `D^½ P_N D^½`.
    pub fn radius(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        let (alphas, betas) = self.params(theta);
        let d: Vec<f64> = alphas
            .iter()
            .zip(&betas)
            .flat_map(|(a, b)| [(2.0 * a).sqrt(), b.sqrt()])
            .collect();
        let n = d.len();
        let m = DMatrix::from_fn(n, n, |r, c| d[r] * self.covariance[(r, c)] * d[c]);
        let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
        Ok(eig.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())))
    }

    /// `Gamma_N` at `theta`, without the admissibility check.
    pub fn gamma(&self, theta: f64) -> Result<DMatrix<Complex64>> {
        check_theta(theta)?;
        let (alphas, betas) = self.params(theta);
        let s = structural_matrices(&alphas, &betas)?;
        let n = self.order();
        let real = &s.phi * &self.covariance * s.phi.transpose();
        let mut gamma = DMatrix::<Complex64>::identity(3 * n, 3 * n);
        for r in 0..3 * n {
            for c in 0..3 * n {
                let imag = if r / 3 == c / 3 { 0.5 * s.upsilon[(r % 3, c % 3)] } else { 0.0 };
                gamma[(r, c)] -= Complex64::new(real[(r, c)], imag) * s.psi[c];
            }
        }
        Ok(gamma)
    }

    fn admissible_radius(&self, theta: f64) -> Result<f64> {
        let radius = self.radius(theta)?;
        if radius >= 1.0 - RADIUS_MARGIN {
            return Err(Error::RadiusExceeded { radius });
        }
        Ok(radius)
    }

    pub fn evaluate(&self, theta: f64) -> Result<QefEvaluation> {
        let radius = self.admissible_radius(theta)?;
        let (alphas, betas) = self.params(theta);
        let gamma = self.gamma(theta)?;
        let ld = log_det(gamma.clone())?;
        let schur_increments = schur_increments(&gamma)?;
        Ok(QefEvaluation {
            theta,
            order: self.order(),
            alphas,
            betas,
            gamma,
            radius,
            log_det: ld,
            log_xi: -0.5 * ld.log_abs,
            schur_increments,
        })
    }

    /// `ln Xi_N` only.
    pub fn log_xi(&self, theta: f64) -> Result<f64> {
        self.admissible_radius(theta)?;
        Ok(-0.5 * log_det(self.gamma(theta)?)?.log_abs)
    }

    /// Schur series up to the full order, stopping once `SERIES_PATIENCE`
    /// consecutive increments fall below `tol` in magnitude. Reaching the
    /// full order without that is reported through `converged = false`.
    pub fn series_report(&self, theta: f64, tol: f64) -> Result<SchurSeries> {
        let radius = self.admissible_radius(theta)?;
        let gamma = self.gamma(theta)?;
        let n = self.order();
        let mut out = SchurSeries {
            theta,
            increments: Vec::new(),
            partial_log_xi: Vec::new(),
            direct_log_xi: Vec::new(),
            radii: Vec::new(),
            converged: false,
        };
        let mut quiet = 0;
        let mut sum = 0.0;
        for order in 1..=n {
            let inc = schur_step(&gamma, order)?;
            sum += inc;
            let lead = gamma.view((0, 0), (3 * order, 3 * order)).into_owned();
            out.increments.push(inc);
            out.partial_log_xi.push(-0.5 * sum);
            out.direct_log_xi.push(-0.5 * log_det(lead)?.log_abs);
            out.radii.push(if order == n { radius } else { self.truncated(order)?.radius(theta)? });
            quiet = if inc.abs() < tol { quiet + 1 } else { 0 };
            if quiet >= SERIES_PATIENCE {
                out.converged = true;
                break;
            }
        }
        Ok(out)
    }

    /// As [`Self::series_report`], with non-convergence as an error.
    pub fn series(&self, theta: f64, tol: f64) -> Result<SchurSeries> {
        let s = self.series_report(theta, tol)?;
        if !s.converged {
            return Err(Error::NotConverged {
                orders: s.orders(),
                last_increment: *s.increments.last().unwrap_or(&f64::NAN),
                partial: s.log_xi(),
            });
        }
        Ok(s)
    }

    /// `theta*` with `|r_N(theta*) - 1| <= CRITICAL_TOLERANCE`, by bisection.
    pub fn critical_theta(&self, low: f64, high: f64) -> Result<f64> {
        let (r_low, r_high) = (self.radius(low)?, self.radius(high)?);
        if !(low < high && r_low < 1.0 && r_high > 1.0) {
            return Err(Error::BracketInvalid {
                low,
                high,
                r_low,
                r_high,
            });
        }
        let (mut lo, mut hi) = (low, high);
        loop {
            let mid = 0.5 * (lo + hi);
            let r = self.radius(mid)?;
            if (r - 1.0).abs() <= CRITICAL_TOLERANCE || mid <= lo || mid >= hi {
                return Ok(mid);
            }
            if r < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    /// Bracket around `theta*` grown geometrically from `1 / lambda_1`.
    pub fn critical_bracket(&self) -> Result<(f64, f64)> {
        let mut hi = 1.0 / self.lambdas[0];
        let mut steps = 0;
        while self.radius(hi)? <= 1.0 {
            hi *= 2.0;
            steps += 1;
            if steps > 200 {
                return Err(Error::InvalidArgument(
                    "admissibility radius stays below 1 for all tested theta".into(),
                ));
            }
        }
        let mut lo = 0.5 * hi;
        while self.radius(lo)? >= 1.0 {
            lo *= 0.5;
        }
        Ok((lo, hi))
    }
}

/// `Re ln det` of `Gamma_1` (order 1) or of the Schur complement of the
/// leading `3(order-1)` block inside the leading `3 order` block.
fn schur_step(gamma: &DMatrix<Complex64>, order: usize) -> Result<f64> {
    let m = 3 * (order - 1);
    let d = gamma.view((m, m), (3, 3)).into_owned();
    if order == 1 {
        return Ok(log_det(d)?.log_abs);
    }
    let lead = ComplexLu::new(gamma.view((0, 0), (m, m)).into_owned())?;
    let b = gamma.view((0, m), (m, 3)).into_owned();
    let c = gamma.view((m, 0), (3, m));
    let s = d - c * lead.solve(&b);
    Ok(log_det(s)?.log_abs)
}

fn schur_increments(gamma: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    (1..=gamma.nrows() / 3).map(|order| schur_step(gamma, order)).collect()
}

/// `G_jk = int_0^T f_j f_k U(t)^T Pi U(t) dt` as a row-major `N x N` grid.
/// Scalar weights use the orthonormality of `f_k` and skip quadrature.
pub fn weighting_matrices(
    basis: &SpectralBasis,
    pi: &Matrix2<f64>,
    nu: f64,
    quad: &QuadratureConfig,
) -> Result<Vec<Matrix2<f64>>> {
    let asymmetry = (pi[(0, 1)] - pi[(1, 0)]).abs();
    if asymmetry > 1e-14 * max_abs(pi).max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric {
            what: "weight matrix",
            asymmetry,
        });
    }
    let (_, lo, _) = crate::linalg::sym2_eigen(pi);
    if lo < -1e-14 * max_abs(pi) {
        return Err(Error::NotPsd { min_eigenvalue: lo });
    }
    let n = basis.len();
    let mut grid = vec![Matrix2::zeros(); n * n];
    if pi[(0, 1)] == 0.0 && pi[(0, 0)] == pi[(1, 1)] {
        for k in 0..n {
            grid[k * n + k] = *pi;
        }
        return Ok(grid);
    }
    let rule = quad.rule()?;
    let panels = quad.panels_for(2.0 * basis.max_omega() + 2.0 * nu, basis.horizon(), basis.horizon())?;
    let nodes = rule.nodes(0.0, basis.horizon(), panels);
    let f: Vec<Vec<f64>> = (0..n).map(|k| nodes.iter().map(|&(t, _)| basis.f(k, t)).collect()).collect();
    let rotated: Vec<Matrix2<f64>> = nodes
        .iter()
        .map(|&(t, _)| {
            let u = rotation(nu, t);
            u.transpose() * pi * u
        })
        .collect();
    for j in 0..n {
        for k in j..n {
            let mut acc = Matrix2::zeros();
            for (q, &(_, w)) in nodes.iter().enumerate() {
                acc += rotated[q] * (w * f[j][q] * f[k][q]);
            }
            grid[j * n + k] = acc;
            grid[k * n + j] = acc.transpose();
        }
    }
    Ok(grid)
}
