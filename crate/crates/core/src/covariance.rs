//! Second-order statistics of the QKL coefficients under vacuum fields.
//!
//! The invariant one-point covariance `P` solves
//! `-2 mu P + nu [jbar, P] + B B^T = 0` and has a closed form in the
//! Pauli basis `{I, sigma1, sigma3}`. The coefficient cross-covariances
//!
//! ```text
//! P_jk = (lambda_j lambda_k)^{-1/2} int int f_j(s) f_k(t) C(s-t) U(s^t)^T P U(s^t) ds dt
//! ```
//!
//! are evaluated by iterated quadrature with the square split along the
//! diagonal. On `{s >= t}` the inner integral
//! `a_j(t) = int_t^T f_j(s) exp(-mu (s - t)) ds` depends on one mode only,
//! so it is tabulated once per mode and shared by every block.

use nalgebra::{Complex, DMatrix, Matrix2};

use crate::eigenbasis::SpectralBasis;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_min_eigenvalue, jbar, max_abs, sigma1, sigma3};
use crate::quadrature::QuadratureConfig;
use crate::system::{kernel_c, rotation, CanonicalModel};

/// Eigenvalue floor for the quantum covariance `P_N + (i/2) I (x) jbar`.
pub const ADMISSIBILITY_FLOOR: f64 = -1e-9;

/// Coefficients of a symmetric 2x2 matrix over `{I, sigma1, sigma3}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b3: f64,
}

impl PauliCoefficients {
    pub fn decompose(m: &Matrix2<f64>) -> Result<Self> {
        let asymmetry = (m[(0, 1)] - m[(1, 0)]).abs();
        if asymmetry > 1e-14 * max_abs(m).max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric {
                what: "Pauli decomposition input",
                asymmetry,
            });
        }
        Ok(Self {
            b0: 0.5 * (m[(0, 0)] + m[(1, 1)]),
            b1: m[(0, 1)],
            b3: 0.5 * (m[(0, 0)] - m[(1, 1)]),
        })
    }

    pub fn reconstruct(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.b0 + sigma1() * self.b1 + sigma3() * self.b3
    }
}

/// Invariant covariance `P` of the canonical model.
pub fn solve_lyapunov(model: &CanonicalModel) -> Result<Matrix2<f64>> {
    let (mu, nu) = (model.mu(), model.nu());
    if !(mu > 0.0) {
        return Err(Error::NotStable(mu));
    }
    let b = PauliCoefficients::decompose(&model.diffusion())?;
    let denom = mu * mu + nu * nu;
    Ok((Matrix2::identity() * (b.b0 / mu)
        + sigma1() * ((mu * b.b1 - nu * b.b3) / denom)
        + sigma3() * ((nu * b.b1 + mu * b.b3) / denom))
        * 0.5)
}

/// `-2 mu P + nu [jbar, P] + B B^T`.
pub fn lyapunov_residual(model: &CanonicalModel, p: &Matrix2<f64>) -> Matrix2<f64> {
    let j = jbar();
    p * (-2.0 * model.mu()) + (j * p - p * j) * model.nu() + model.diffusion()
}

/// Controllability Gramian `int_0^inf exp(tA) Q exp(tA^T) dt` by quadrature
/// with a general matrix exponential. The integral is truncated where
/// `exp(-2 mu t)` drops below `exp(-80)`.
pub fn controllability_gramian(drift: &Matrix2<f64>, q: &Matrix2<f64>, quad: &QuadratureConfig) -> Result<Matrix2<f64>> {
    let eig = drift.complex_eigenvalues();
    let decay = -eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if !(decay > 0.0) {
        return Err(Error::NotStable(decay));
    }
    let freq = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let tail = 40.0 / decay;
    let rule = quad.rule()?;
    let panels = quad.panels_for(2.0 * freq + 2.0 * decay, tail, tail)?;
    let mut acc = Matrix2::zeros();
    for (t, w) in rule.nodes(0.0, tail, panels) {
        let e = (drift * t).exp();
        acc += e * q * e.transpose() * w;
    }
    Ok(acc)
}

struct BlockIntegrator {
    /// outer nodes and weights
    nodes: Vec<(f64, f64)>,
    /// f_j at the outer nodes, per mode
    f: Vec<Vec<f64>>,
    /// a_j at the outer nodes, per mode
    a: Vec<Vec<f64>>,
    /// U(t)^T P U(t) at the outer nodes
    rotated: Vec<Matrix2<f64>>,
    scale: Vec<f64>,
}

impl BlockIntegrator {
    fn new(
        basis: &SpectralBasis,
        p: &Matrix2<f64>,
        nu: f64,
        modes: &[usize],
        quad: &QuadratureConfig,
    ) -> Result<Self> {
        let (mu, horizon) = (basis.mu(), basis.horizon());
        let rule = quad.rule()?;
        let w_max = modes.iter().map(|&i| basis.omegas()[i]).fold(0.0, f64::max);
        let outer = quad.panels_for(2.0 * w_max + 2.0 * nu + mu, horizon, horizon)?;
        let nodes = rule.nodes(0.0, horizon, outer);

        let mut f = Vec::with_capacity(modes.len());
        let mut a = Vec::with_capacity(modes.len());
        for &i in modes {
            let rate = basis.omegas()[i] + mu;
            f.push(nodes.iter().map(|&(t, _)| basis.f(i, t)).collect());
            let inner = nodes
                .iter()
                .map(|&(t, _)| {
                    let panels = quad.panels_for(rate, horizon - t, horizon)?;
                    Ok(rule.integrate(t, horizon, panels, |s| basis.f(i, s) * kernel_c(mu, s - t)))
                })
                .collect::<Result<Vec<f64>>>()?;
            a.push(inner);
        }
        let rotated = nodes
            .iter()
            .map(|&(t, _)| {
                let u = rotation(nu, t);
                u.transpose() * p * u
            })
            .collect();
        let scale = modes.iter().map(|&i| basis.lambdas()[i].sqrt()).collect();
        Ok(Self {
            nodes,
            f,
            a,
            rotated,
            scale,
        })
    }

    /// Block for local mode positions `j`, `k`.
    fn block(&self, j: usize, k: usize) -> Matrix2<f64> {
        let mut acc = Matrix2::zeros();
        for (q, &(_, w)) in self.nodes.iter().enumerate() {
            // {s >= t}: f_k(t) a_j(t);  {s < t}: f_j(s) a_k(s)
            let weight = w * (self.f[k][q] * self.a[j][q] + self.f[j][q] * self.a[k][q]);
            acc += self.rotated[q] * weight;
        }
        acc / (self.scale[j] * self.scale[k])
    }
}

fn check_mode(basis: &SpectralBasis, idx: usize) -> Result<()> {
    if idx >= basis.len() {
        return Err(Error::IndexOutOfRange {
            index: idx,
            len: basis.len(),
        });
    }
    Ok(())
}

/// One cross-covariance block `P_jk` (zero-based mode indices).
pub fn qkl_cross_covariance(
    basis: &SpectralBasis,
    p: &Matrix2<f64>,
    model: &CanonicalModel,
    j: usize,
    k: usize,
    quad: &QuadratureConfig,
) -> Result<Matrix2<f64>> {
    check_mode(basis, j)?;
    check_mode(basis, k)?;
    check_rates(basis, model)?;
    let modes = if j == k { vec![j] } else { vec![j, k] };
    let integ = BlockIntegrator::new(basis, p, model.nu(), &modes, quad)?;
    let (lj, lk) = (0, modes.len() - 1);
    Ok(integ.block(lj, lk))
}

fn check_rates(basis: &SpectralBasis, model: &CanonicalModel) -> Result<()> {
    if (basis.mu() - model.mu()).abs() > 1e-14 * model.mu() {
        return Err(Error::InvalidArgument(format!(
            "basis decay rate {} differs from model decay rate {}",
            basis.mu(),
            model.mu()
        )));
    }
    Ok(())
}

/// The `N x N` grid of 2x2 blocks `P_jk`, the assembled `2N x 2N` matrix
/// `P_N`, and the admissibility margin of `K_N = P_N + (i/2) I (x) jbar`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    p: Matrix2<f64>,
    order: usize,
    blocks: Vec<Matrix2<f64>>,
    assembled: DMatrix<f64>,
    min_eigenvalue: f64,
}

impl CovarianceSet {
    /// Computes every block for the modes of `basis`; only `j <= k` is
    /// integrated and the rest follow from `P_kj = P_jk^T`.
    pub fn compute(basis: &SpectralBasis, p: &Matrix2<f64>, model: &CanonicalModel, quad: &QuadratureConfig) -> Result<Self> {
        check_rates(basis, model)?;
        let n = basis.len();
        let modes: Vec<usize> = (0..n).collect();
        let integ = BlockIntegrator::new(basis, p, model.nu(), &modes, quad)?;
        let mut blocks = vec![Matrix2::zeros(); n * n];
        for j in 0..n {
            for k in j..n {
                let b = integ.block(j, k);
                blocks[j * n + k] = b;
                blocks[k * n + j] = b.transpose();
            }
        }
        Self::from_blocks(*p, n, blocks)
    }

    /// Assembles a row-major block grid. The upper block triangle is
    /// authoritative; the lower triangle of `P_N` mirrors it.
    pub fn from_blocks(p: Matrix2<f64>, order: usize, blocks: Vec<Matrix2<f64>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("covariance order must be at least 1".into()));
        }
        if blocks.len() != order * order {
            return Err(Error::DimensionMismatch {
                what: "covariance block grid",
                expected: order * order,
                got: blocks.len(),
            });
        }
        let dim = 2 * order;
        let mut assembled = DMatrix::zeros(dim, dim);
        for j in 0..order {
            for k in j..order {
                let b = &blocks[j * order + k];
                for r in 0..2 {
                    for c in 0..2 {
                        assembled[(2 * j + r, 2 * k + c)] = b[(r, c)];
                        assembled[(2 * k + c, 2 * j + r)] = b[(r, c)];
                    }
                }
            }
        }
        let im = ccr_part(order);
        let min_eigenvalue = hermitian_min_eigenvalue(&assembled, &im);
        if min_eigenvalue < ADMISSIBILITY_FLOOR {
            return Err(Error::AdmissibilityViolation { min_eigenvalue });
        }
        Ok(Self {
            p,
            order,
            blocks,
            assembled,
            min_eigenvalue,
        })
    }

    /// Blocks `P_jk = delta_jk P` (exact for scalar `P`).
    pub fn diagonal(p: Matrix2<f64>, order: usize) -> Result<Self> {
        let mut blocks = vec![Matrix2::zeros(); order * order];
        for j in 0..order {
            blocks[j * order + j] = p;
        }
        Self::from_blocks(p, order, blocks)
    }

    pub fn one_point(&self) -> &Matrix2<f64> {
        &self.p
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn block(&self, j: usize, k: usize) -> &Matrix2<f64> {
        &self.blocks[j * self.order + k]
    }

    pub fn blocks(&self) -> &[Matrix2<f64>] {
        &self.blocks
    }

    /// `P_N`.
    pub fn assembled(&self) -> &DMatrix<f64> {
        &self.assembled
    }

    /// `K_N = P_N + (i/2) I_N (x) jbar`.
    pub fn quantum_covariance(&self) -> DMatrix<Complex<f64>> {
        let im = ccr_part(self.order);
        DMatrix::from_fn(2 * self.order, 2 * self.order, |r, c| {
            Complex::new(self.assembled[(r, c)], im[(r, c)])
        })
    }

    /// Smallest eigenvalue of `K_N`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Largest `|P_jk - P_kj^T|` entry over the grid.
    pub fn transpose_asymmetry(&self) -> f64 {
        let n = self.order;
        let mut worst = 0.0_f64;
        for j in 0..n {
            for k in 0..n {
                worst = worst.max(max_abs(&(self.block(j, k) - self.block(k, j).transpose())));
            }
        }
        worst
    }

    /// Largest `|P_jk - delta_jk Q|` entry over the grid.
    pub fn deviation_from_diagonal(&self, q: &Matrix2<f64>) -> f64 {
        let n = self.order;
        let mut worst = 0.0_f64;
        for j in 0..n {
            for k in 0..n {
                let target = if j == k { *q } else { Matrix2::zeros() };
                worst = worst.max(max_abs(&(self.block(j, k) - target)));
            }
        }
        worst
    }

    /// Leading `n x n` block grid.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.order {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.order,
            });
        }
        let mut blocks = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                blocks.push(*self.block(j, k));
            }
        }
        Self::from_blocks(self.p, n, blocks)
    }
}

/// `(1/2) I_N (x) jbar`.
pub fn ccr_part(order: usize) -> DMatrix<f64> {
    let mut im = DMatrix::zeros(2 * order, 2 * order);
    for j in 0..order {
        im[(2 * j, 2 * j + 1)] = 0.5;
        im[(2 * j + 1, 2 * j)] = -0.5;
    }
    im
}

/// Truncated QKL reconstruction of the real two-point covariance,
/// `U(s) [sum_{j,k<n} sqrt(lambda_j lambda_k) f_j(s) f_k(t) P_jk] U(t)^T`.
pub fn reconstruct_real_covariance(
    basis: &SpectralBasis,
    set: &CovarianceSet,
    nu: f64,
    s: f64,
    t: f64,
    n: usize,
) -> Result<Matrix2<f64>> {
    if n > basis.len().min(set.order()) {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: basis.len().min(set.order()),
        });
    }
    let fs: Vec<f64> = (0..n).map(|i| basis.eigenfunction(i, s)).collect::<Result<_>>()?;
    let ft: Vec<f64> = (0..n).map(|i| basis.eigenfunction(i, t)).collect::<Result<_>>()?;
    let sq: Vec<f64> = basis.lambdas()[..n].iter().map(|l| l.sqrt()).collect();
    let mut inner = Matrix2::zeros();
    for j in 0..n {
        for k in 0..n {
            inner += set.block(j, k) * (sq[j] * sq[k] * fs[j] * ft[k]);
        }
    }
    Ok(rotation(nu, s) * inner * rotation(nu, t).transpose())
}
