//! Small dense linear algebra: the 2x2 constants of the one-mode problem,
//! a closed-form symmetric square root, and a pivoted complex LU that
//! accumulates the log-determinant without forming the determinant.

use nalgebra::{Complex, DMatrix, Matrix2, SymmetricEigen};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// The antisymmetric basis matrix `[[0, 1], [-1, 0]]`.
pub fn jbar() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -1.0, 0.0)
}

pub fn sigma1() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, 1.0, 0.0)
}

pub fn sigma3() -> Matrix2<f64> {
    Matrix2::new(1.0, 0.0, 0.0, -1.0)
}

/// One-point CCR matrix `jbar / 2`.
pub fn ccr_matrix() -> Matrix2<f64> {
    jbar() * 0.5
}

pub fn max_abs<R: nalgebra::Dim, C: nalgebra::Dim, S>(m: &nalgebra::Matrix<f64, R, C, S>) -> f64
where
    S: nalgebra::RawStorage<f64, R, C>,
{
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Eigenpairs of a real symmetric 2x2 matrix in closed form.
///
/// Returns `(l_hi, l_lo, phi)` where the eigenvector of `l_hi` is
/// `(cos phi, sin phi)`.
pub fn sym2_eigen(m: &Matrix2<f64>) -> (f64, f64, f64) {
    let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let half_gap = (0.5 * (a - d)).hypot(b);
    let phi = 0.5 * (2.0 * b).atan2(a - d);
    (mean + half_gap, mean - half_gap, phi)
}

/// Principal square root of a symmetric positive definite 2x2 matrix.
pub fn sqrt_spd2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let (hi, lo, phi) = sym2_eigen(m);
    let (s, c) = phi.sin_cos();
    let q = Matrix2::new(c, -s, s, c);
    q * Matrix2::new(hi.sqrt(), 0.0, 0.0, lo.sqrt()) * q.transpose()
}

/// Largest eigenvalue of a real symmetric matrix.
pub fn sym_max_eigenvalue(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m).eigenvalues.max()
}

/// Smallest eigenvalue of the Hermitian matrix `re + i*im`, through the
/// real symmetric embedding `[[re, -im], [im, re]]` (eigenvalues doubled).
pub fn hermitian_min_eigenvalue(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
    let n = re.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(re);
    big.view_mut((n, n), (n, n)).copy_from(re);
    big.view_mut((n, 0), (n, n)).copy_from(im);
    big.view_mut((0, n), (n, n)).copy_from(&(-im));
    SymmetricEigen::new(big).eigenvalues.min()
}

/// Logarithm of a complex determinant split into magnitude and phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    /// Phase wrapped into `(-pi, pi]`.
    pub arg: f64,
}

impl LogDet {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.log_abs, self.arg)
    }
}

fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// LU factorisation with partial pivoting of a square complex matrix.
#[derive(Debug, Clone)]
pub struct ComplexLu {
    lu: DMatrix<Complex64>,
    perm: Vec<usize>,
    swaps: usize,
}

impl ComplexLu {
    pub fn new(mut a: DMatrix<Complex64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "LU of a non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for col in 0..n {
            let (pivot_row, pivot_mag) = (col..n)
                .map(|r| (r, a[(r, col)].norm()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_mag == 0.0 {
                return Err(Error::SingularGamma);
            }
            if pivot_row != col {
                a.swap_rows(pivot_row, col);
                perm.swap(pivot_row, col);
                swaps += 1;
            }
            let pivot = a[(col, col)];
            for r in col + 1..n {
                let factor = a[(r, col)] / pivot;
                a[(r, col)] = factor;
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in col + 1..n {
                    let upd = factor * a[(col, c)];
                    a[(r, c)] -= upd;
                }
            }
        }
        Ok(Self { lu: a, perm, swaps })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Log-determinant accumulated pivot by pivot.
    pub fn log_det(&self) -> LogDet {
        let mut log_abs = 0.0;
        let mut arg = self.swaps as f64 * std::f64::consts::PI;
        for i in 0..self.dim() {
            let u = self.lu[(i, i)];
            log_abs += u.norm().ln();
            arg += u.arg();
        }
        LogDet {
            log_abs,
            arg: wrap_phase(arg),
        }
    }

    /// Solves `A X = B` for a block of right-hand sides.
    pub fn solve(&self, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "right-hand side height mismatch");
        let mut x = DMatrix::<Complex64>::zeros(n, b.ncols());
        for (i, &p) in self.perm.iter().enumerate() {
            x.set_row(i, &b.row(p));
        }
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut acc = x[(i, c)];
                for k in 0..i {
                    acc -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for k in i + 1..n {
                    acc -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = acc / self.lu[(i, i)];
            }
        }
        x
    }
}

pub fn log_det(a: DMatrix<Complex64>) -> Result<LogDet> {
    Ok(ComplexLu::new(a)?.log_det())
}
