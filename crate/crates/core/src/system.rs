//! One-mode open quantum harmonic oscillator: the model built from its
//! energy and coupling matrices, the symplectic change of variables that
//! makes the energy matrix scalar, and the elementary two-point kernels.

use nalgebra::{Complex, DMatrix, Matrix2};

use crate::error::{Error, Result};
use crate::linalg::{ccr_matrix, jbar, max_abs, sqrt_spd2};

/// Relative tolerance on the antisymmetric form of `M^T J M`.
const COUPLING_FORM_TOL: f64 = 1e-12;

/// Field CCR matrix `jbar (x) I_{m/2}` for `m` channels.
pub fn field_ccr(channels: usize) -> DMatrix<f64> {
    let h = channels / 2;
    let mut j = DMatrix::zeros(channels, channels);
    for i in 0..h {
        j[(i, i + h)] = 1.0;
        j[(i + h, i)] = -1.0;
    }
    j
}

/// An oscillator model. Immutable once built; all derived matrices are
/// computed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct OqhoModel {
    energy: Matrix2<f64>,
    coupling: DMatrix<f64>,
    drift: Matrix2<f64>,
    dispersion: DMatrix<f64>,
    mu: f64,
    nu: f64,
}

impl OqhoModel {
    /// Builds a model and requires `mu > 0`, so that the drift is Hurwitz.
    pub fn new(energy: Matrix2<f64>, coupling: DMatrix<f64>) -> Result<Self> {
        let model = Self::assemble(energy, coupling)?;
        if !model.is_stable() {
            return Err(Error::NotStable(model.mu));
        }
        Ok(model)
    }

    /// Builds a model without the stability requirement. Only
    /// [`OqhoModel::pr_residual`] and the accessors are meaningful for an
    /// unstable model.
    pub fn assemble(energy: Matrix2<f64>, coupling: DMatrix<f64>) -> Result<Self> {
        let asym = (energy[(0, 1)] - energy[(1, 0)]).abs();
        if asym > 1e-14 * max_abs(&energy).max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric {
                what: "energy matrix",
                asymmetry: asym,
            });
        }
        if coupling.ncols() != 2 {
            return Err(Error::DimensionMismatch {
                what: "coupling matrix columns",
                expected: 2,
                got: coupling.ncols(),
            });
        }
        let m = coupling.nrows();
        if m == 0 || m % 2 != 0 {
            return Err(Error::OddChannelCount(m));
        }
        let det = energy.determinant();
        let trace = energy.trace();
        if !(energy[(0, 0)] > 0.0 && trace > 0.0 && det > 1e-12 * trace * trace) {
            return Err(Error::NotPositiveDefinite { det, trace });
        }

        let jb = jbar();
        let mjm = coupling.transpose() * field_ccr(m) * &coupling;
        let mu = mjm[(0, 1)];
        let form = Matrix2::new(mjm[(0, 0)], mjm[(0, 1)], mjm[(1, 0)], mjm[(1, 1)]) - jb * mu;
        let scale = max_abs(&coupling).powi(2).max(f64::MIN_POSITIVE);
        if max_abs(&form) > COUPLING_FORM_TOL * scale {
            return Err(Error::CouplingForm(max_abs(&form)));
        }

        let mjm2 = jb * mu;
        let drift = jb * (energy + mjm2);
        let jb_dyn = DMatrix::from_column_slice(2, 2, jb.as_slice());
        let dispersion = jb_dyn * coupling.transpose();
        Ok(Self {
            energy,
            coupling,
            drift,
            dispersion,
            mu,
            nu: det.sqrt(),
        })
    }

    /// Scalar-energy model with `R = nu I` and two channels
    /// `M = diag(sqrt(mu), sqrt(mu))`.
    pub fn from_rates(mu: f64, nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!("frequency nu must be positive, got {nu}")));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::NotStable(mu));
        }
        let root = mu.sqrt();
        Self::new(
            Matrix2::identity() * nu,
            DMatrix::from_row_slice(2, 2, &[root, 0.0, 0.0, root]),
        )
    }

    pub fn energy(&self) -> &Matrix2<f64> {
        &self.energy
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn channels(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn drift(&self) -> &Matrix2<f64> {
        &self.drift
    }

    pub fn dispersion(&self) -> &DMatrix<f64> {
        &self.dispersion
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Typical transient time `1/mu`.
    pub fn transient_time(&self) -> f64 {
        1.0 / self.mu
    }

    pub fn is_stable(&self) -> bool {
        self.mu > 0.0
    }

    /// Drift eigenvalues `-mu +/- i nu`, the larger imaginary part first.
    pub fn drift_eigenvalues(&self) -> [Complex<f64>; 2] {
        [Complex::new(-self.mu, self.nu), Complex::new(-self.mu, -self.nu)]
    }

    /// `A Theta + Theta A^T + B J B^T`, which vanishes for a physically
    /// realizable model.
    pub fn pr_residual(&self) -> Matrix2<f64> {
        pr_residual(&self.drift, &self.dispersion)
    }

    /// Symplectic change of variables `S = sqrt(R / nu)` that makes the
    /// energy matrix scalar.
    pub fn canonicalize(&self) -> Result<CanonicalModel> {
        if !self.is_stable() {
            return Err(Error::NotStable(self.mu));
        }
        let s = sqrt_spd2(&(self.energy / self.nu));
        let s_dyn = DMatrix::from_column_slice(2, 2, s.as_slice());
        Ok(CanonicalModel {
            transform: s,
            drift: canonical_drift(self.mu, self.nu),
            dispersion: s_dyn * &self.dispersion,
            mu: self.mu,
            nu: self.nu,
        })
    }
}

/// PR residual for arbitrary drift and dispersion matrices.
pub fn pr_residual(drift: &Matrix2<f64>, dispersion: &DMatrix<f64>) -> Matrix2<f64> {
    let theta = ccr_matrix();
    let bjb = dispersion * field_ccr(dispersion.ncols()) * dispersion.transpose();
    drift * theta + theta * drift.transpose() + Matrix2::new(bjb[(0, 0)], bjb[(0, 1)], bjb[(1, 0)], bjb[(1, 1)])
}

/// `[[-mu, nu], [-nu, -mu]]`.
pub fn canonical_drift(mu: f64, nu: f64) -> Matrix2<f64> {
    Matrix2::new(-mu, nu, -nu, -mu)
}

/// The oscillator in variables with scalar energy matrix `nu I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalModel {
    transform: Matrix2<f64>,
    drift: Matrix2<f64>,
    dispersion: DMatrix<f64>,
    mu: f64,
    nu: f64,
}

impl CanonicalModel {
    /// Canonical model of [`OqhoModel::from_rates`].
    pub fn from_rates(mu: f64, nu: f64) -> Result<Self> {
        OqhoModel::from_rates(mu, nu)?.canonicalize()
    }

    pub fn transform(&self) -> &Matrix2<f64> {
        &self.transform
    }

    pub fn drift(&self) -> &Matrix2<f64> {
        &self.drift
    }

    pub fn dispersion(&self) -> &DMatrix<f64> {
        &self.dispersion
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `B B^T` as a 2x2 matrix.
    pub fn diffusion(&self) -> Matrix2<f64> {
        let bbt = &self.dispersion * self.dispersion.transpose();
        Matrix2::new(bbt[(0, 0)], bbt[(0, 1)], bbt[(1, 0)], bbt[(1, 1)])
    }

    /// Max-abs deviation of `S A S^-1` from the canonical drift.
    pub fn similarity_residual(&self, original: &OqhoModel) -> f64 {
        let inv = self.transform.try_inverse().expect("symplectic transform is invertible");
        max_abs(&(self.transform * original.drift() * inv - self.drift))
    }

    /// Two-point commutator kernel `Lambda(tau) = C(tau) U(tau) jbar / 2`.
    pub fn commutator_kernel(&self, tau: f64) -> Matrix2<f64> {
        rotation(self.nu, tau) * jbar() * (0.5 * kernel_c(self.mu, tau))
    }

    /// Real part `Sigma(tau)` of the invariant two-point covariance.
    pub fn two_point_sigma(&self, p: &Matrix2<f64>, tau: f64) -> Matrix2<f64> {
        two_point_sigma(self.mu, self.nu, p, tau)
    }
}

/// Ornstein-Uhlenbeck covariance `exp(-mu |tau|)`.
pub fn kernel_c(mu: f64, tau: f64) -> f64 {
    (-mu * tau.abs()).exp()
}

/// Planar rotation `U(tau) = exp(tau nu jbar)`.
pub fn rotation(nu: f64, tau: f64) -> Matrix2<f64> {
    let (s, c) = (nu * tau).sin_cos();
    Matrix2::new(c, s, -s, c)
}

pub fn two_point_sigma(mu: f64, nu: f64, p: &Matrix2<f64>, tau: f64) -> Matrix2<f64> {
    let u = rotation(nu, tau);
    let c = kernel_c(mu, tau);
    if tau >= 0.0 {
        u * p * c
    } else {
        p * u * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_channel_coupling() -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 2, &[0.9, -0.2, -0.3, -0.7, 0.4, 0.1, 0.25, -0.6])
    }

    #[test]
    fn scalar_energy_gives_canonical_drift() {
        let model = OqhoModel::new(
            Matrix2::identity() * 2.0,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        assert_eq!(model.mu(), 1.0);
        assert_eq!(*model.drift(), Matrix2::new(-1.0, 2.0, -2.0, -1.0));
        assert_eq!(model.nu(), 2.0);
        assert_eq!(model.transient_time(), 1.0);
    }

    #[test]
    fn zero_coupling_is_not_stable() {
        let err = OqhoModel::new(Matrix2::identity(), DMatrix::zeros(2, 2)).unwrap_err();
        assert_eq!(err, Error::NotStable(0.0));
        // assembly alone still succeeds so the PR residual can be inspected
        let model = OqhoModel::assemble(Matrix2::identity(), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(model.pr_residual(), Matrix2::zeros());
        assert!(matches!(model.canonicalize(), Err(Error::NotStable(_))));
    }

    #[test]
    fn rejects_indefinite_energy() {
        let err = OqhoModel::new(Matrix2::new(1.0, 2.0, 2.0, 1.0), four_channel_coupling()).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        let err = OqhoModel::new(-Matrix2::identity(), four_channel_coupling()).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn rejects_odd_channel_count() {
        let err = OqhoModel::new(Matrix2::identity(), DMatrix::from_element(3, 2, 0.5)).unwrap_err();
        assert_eq!(err, Error::OddChannelCount(3));
    }

    #[test]
    fn rejects_asymmetric_energy() {
        let err = OqhoModel::new(Matrix2::new(2.0, 0.5, 0.4, 1.0), four_channel_coupling()).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
    }

    #[test]
    fn general_model_drift_has_theorem_spectrum() {
        let model = OqhoModel::new(Matrix2::new(2.0, 0.5, 0.5, 1.0), four_channel_coupling()).unwrap();
        assert!((model.nu() - 1.75f64.sqrt()).abs() < 1e-15);
        let eig = model.drift().complex_eigenvalues();
        let mut ims: Vec<f64> = eig.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        for z in eig.iter() {
            assert!((z.re + model.mu()).abs() < 1e-12 * model.mu().abs().max(1.0));
        }
        assert!((ims[1] - 1.75f64.sqrt()).abs() < 1e-12);
        assert!((ims[0] + 1.75f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn canonical_transform_of_scalar_energy_is_identity() {
        let model = OqhoModel::from_rates(0.7, 3.0).unwrap();
        let canon = model.canonicalize().unwrap();
        assert!(max_abs(&(canon.transform() - Matrix2::identity())) < 1e-15);
        assert_eq!(canon.drift(), model.drift());
    }

    #[test]
    fn canonical_transform_of_diagonal_energy() {
        let model = OqhoModel::new(Matrix2::new(2.0, 0.0, 0.0, 0.5), four_channel_coupling()).unwrap();
        let canon = model.canonicalize().unwrap();
        let s = canon.transform();
        assert!((s[(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
        assert!((s[(1, 1)] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((s.determinant() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_similarity_holds() {
        let model = OqhoModel::new(Matrix2::new(2.0, 0.5, 0.5, 1.0), four_channel_coupling()).unwrap();
        let canon = model.canonicalize().unwrap();
        assert!(canon.similarity_residual(&model) < 1e-12);
        assert!((canon.transform().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pr_residual_detects_perturbation() {
        let model = OqhoModel::new(Matrix2::new(2.0, 0.5, 0.5, 1.0), four_channel_coupling()).unwrap();
        assert!(max_abs(&model.pr_residual()) < 1e-13);
        let mut b = model.dispersion().clone();
        b[(0, 1)] += 0.1;
        assert!(max_abs(&pr_residual(model.drift(), &b)) > 1e-3);
    }

    #[test]
    fn pr_residual_identity_coupling_instance() {
        // R = I, M = I: A = jbar - I, B = jbar, so B J B^T = jbar and
        // A Theta + Theta A^T = -jbar; every entry cancels exactly.
        let model = OqhoModel::new(Matrix2::identity(), DMatrix::identity(2, 2)).unwrap();
        let r = model.pr_residual();
        assert_eq!(r, Matrix2::zeros());
    }

    #[test]
    fn kernel_c_values() {
        assert_eq!(kernel_c(1.0, 0.0), 1.0);
        assert_eq!(kernel_c(1.0, -2.0), kernel_c(1.0, 2.0));
        assert!((kernel_c(2.0, 0.5) - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn rotation_identities() {
        assert_eq!(rotation(2.0, 0.0), Matrix2::identity());
        let u = rotation(2.0, 0.37);
        assert!(max_abs(&(u.transpose() - rotation(2.0, -0.37))) < 1e-15);
        let (a, b) = (0.81, -2.3);
        assert!(max_abs(&(rotation(1.7, a) * rotation(1.7, b) - rotation(1.7, a + b))) < 1e-14);
    }

    #[test]
    fn commutator_kernel_identities() {
        let canon = CanonicalModel::from_rates(1.0, 1.0).unwrap();
        assert!(max_abs(&(canon.commutator_kernel(0.0) - ccr_matrix())) < 1e-16);
        let tau = 1.3;
        let l = canon.commutator_kernel(tau);
        let lm = canon.commutator_kernel(-tau);
        assert!(max_abs(&(lm + l.transpose())) < 1e-16);
    }

    #[test]
    fn commutator_kernel_matches_matrix_exponential() {
        let canon = CanonicalModel::from_rates(1.0, 1.0).unwrap();
        let branch = (canon.drift() * 1.0).exp() * jbar() * 0.5;
        let direct = rotation(1.0, 1.0) * jbar() * (0.5 * (-1.0f64).exp());
        assert!(max_abs(&(canon.commutator_kernel(1.0) - branch)) < 1e-12);
        assert!(max_abs(&(canon.commutator_kernel(1.0) - direct)) < 1e-16);
    }

    #[test]
    fn two_point_sigma_identities() {
        let canon = CanonicalModel::from_rates(0.8, 1.4).unwrap();
        let p = Matrix2::new(1.2, 0.3, 0.3, 0.7);
        assert_eq!(canon.two_point_sigma(&p, 0.0), p);
        let tau = 0.8;
        assert!(max_abs(&(canon.two_point_sigma(&p, -tau) - canon.two_point_sigma(&p, tau).transpose())) < 1e-16);
        let i = Matrix2::identity();
        let expected = rotation(1.4, tau) * kernel_c(0.8, tau);
        assert!(max_abs(&(canon.two_point_sigma(&i, tau) - expected)) < 1e-16);
    }
}
