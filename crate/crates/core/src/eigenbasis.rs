//! Eigenbasis of the exponential covariance operator on `[0, T]`.
//!
//! In the dimensionless variable `u = omega / mu` with `r = mu T`, the
//! k-th frequency is the unique root of `h(u) = r u + 2 atan(u) - pi k` in
//! `(pi (k-1) / r, pi k / r)`. Since `h` is strictly increasing the bracket
//! alone guarantees convergence; bisection narrows it and Newton polishes.
//! Eigenvalues are `lambda_k = 2 mu / (mu^2 + omega_k^2)` and the
//! orthonormal eigenfunctions are
//! `f_k(t) = (omega_k cos(omega_k t) + mu sin(omega_k t)) / gamma_k`
//! with `gamma_k^2 = (T/2)(omega_k^2 + mu^2) + mu`.
//!
//! Mode indices in this module are zero-based: index `i` is mode `k = i + 1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureConfig;
use crate::system::kernel_c;

const BISECTION_WIDTH: f64 = 1e-8;
const MAX_BISECTION_STEPS: usize = 200;
const MAX_NEWTON_STEPS: usize = 50;

/// Residual of `r u + 2 atan(u) = pi k`.
pub fn pik_residual(r: f64, u: f64, k: usize) -> f64 {
    r * u + 2.0 * u.atan() - PI * k as f64
}

/// Positive root `u_k` of `r u + 2 atan(u) = pi k` for `k >= 1`.
pub fn solve_root(r: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("mode numbers start at 1".into()));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("ratio r = mu T must be positive, got {r}")));
    }
    let target = PI * k as f64;
    let (mut lo, mut hi) = (PI * (k - 1) as f64 / r, target / r);
    let tol = 1e-13_f64.max(4.0 * f64::EPSILON * target);

    let mut steps = 0;
    while hi - lo > BISECTION_WIDTH * hi.max(1.0) {
        if steps == MAX_BISECTION_STEPS {
            return Err(Error::ConvergenceFailure {
                mode: k,
                residual: pik_residual(r, 0.5 * (lo + hi), k),
            });
        }
        let mid = 0.5 * (lo + hi);
        if pik_residual(r, mid, k) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }

    let mut u = 0.5 * (lo + hi);
    let mut h = pik_residual(r, u, k);
    for _ in 0..MAX_NEWTON_STEPS {
        if h.abs() <= tol {
            return Ok(u);
        }
        let slope = r + 2.0 / (1.0 + u * u);
        let next = (u - h / slope).clamp(lo, hi);
        if next == u {
            break;
        }
        u = next;
        h = pik_residual(r, u, k);
    }
    if h.abs() <= tol {
        Ok(u)
    } else {
        Err(Error::ConvergenceFailure { mode: k, residual: h })
    }
}

/// Frequencies, eigenvalues and normalisations of the first `count` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    mu: f64,
    horizon: f64,
    roots: Vec<f64>,
    omegas: Vec<f64>,
    lambdas: Vec<f64>,
    gammas: Vec<f64>,
}

impl SpectralBasis {
    pub fn solve(mu: f64, horizon: f64, count: usize) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::NotStable(mu));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if count == 0 {
            return Err(Error::InvalidArgument("mode count must be at least 1".into()));
        }
        let r = mu * horizon;
        let roots = (1..=count).map(|k| solve_root(r, k)).collect::<Result<Vec<_>>>()?;
        let omegas: Vec<f64> = roots.iter().map(|u| mu * u).collect();
        let lambdas = omegas.iter().map(|w| 2.0 * mu / (mu * mu + w * w)).collect();
        let gammas = omegas
            .iter()
            .map(|w| (0.5 * horizon * (w * w + mu * mu) + mu).sqrt())
            .collect();
        Ok(Self {
            mu,
            horizon,
            roots,
            omegas,
            lambdas,
            gammas,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `r = mu T`.
    pub fn ratio(&self) -> f64 {
        self.mu * self.horizon
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn max_omega(&self) -> f64 {
        self.omegas.last().copied().unwrap_or(0.0)
    }

    /// `T - sum lambda_k`, the part of the kernel trace not yet captured.
    pub fn trace_deficit(&self) -> f64 {
        self.horizon - self.lambdas.iter().sum::<f64>()
    }

    /// First `n` modes as a new basis.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.len(),
            });
        }
        Ok(Self {
            mu: self.mu,
            horizon: self.horizon,
            roots: self.roots[..n].to_vec(),
            omegas: self.omegas[..n].to_vec(),
            lambdas: self.lambdas[..n].to_vec(),
            gammas: self.gammas[..n].to_vec(),
        })
    }

    pub fn pik_residual(&self, idx: usize) -> f64 {
        pik_residual(self.ratio(), self.roots[idx], idx + 1)
    }

    /// Residual of `2 mu w cos(wT) + (mu^2 - w^2) sin(wT) = 0`, divided by
    /// `mu^2 + w^2` so that it is comparable across modes.
    pub fn trans_residual(&self, idx: usize) -> f64 {
        let (mu, w) = (self.mu, self.omegas[idx]);
        let (s, c) = (w * self.horizon).sin_cos();
        (2.0 * mu * w * c + (mu * mu - w * w) * s) / (mu * mu + w * w)
    }

    fn check(&self, idx: usize, t: f64) -> Result<()> {
        if idx >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                len: self.len(),
            });
        }
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// `f_k(t)`, unchecked.
    #[inline]
    pub(crate) fn f(&self, idx: usize, t: f64) -> f64 {
        let w = self.omegas[idx];
        let (s, c) = (w * t).sin_cos();
        (w * c + self.mu * s) / self.gammas[idx]
    }

    pub fn eigenfunction(&self, idx: usize, t: f64) -> Result<f64> {
        self.check(idx, t)?;
        Ok(self.f(idx, t))
    }

    pub fn eigenfunction_derivative(&self, idx: usize, t: f64) -> Result<f64> {
        self.check(idx, t)?;
        let w = self.omegas[idx];
        let (s, c) = (w * t).sin_cos();
        Ok(w * (self.mu * c - w * s) / self.gammas[idx])
    }

    pub fn eigenfunction_second_derivative(&self, idx: usize, t: f64) -> Result<f64> {
        self.check(idx, t)?;
        let w = self.omegas[idx];
        Ok(-w * w * self.f(idx, t))
    }

    /// `int_0^T f_j f_k dt` for all pairs, by composite Gauss-Legendre.
    pub fn gram_matrix(&self, quad: &QuadratureConfig) -> Result<DMatrix<f64>> {
        let rule = quad.rule()?;
        let panels = quad.panels_for(self.max_omega(), self.horizon, self.horizon)?;
        let nodes = rule.nodes(0.0, self.horizon, panels);
        let n = self.len();
        let table: Vec<Vec<f64>> = (0..n)
            .map(|i| nodes.iter().map(|&(t, _)| self.f(i, t)).collect())
            .collect();
        let mut gram = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in j..n {
                let v: f64 = nodes
                    .iter()
                    .enumerate()
                    .map(|(q, &(_, w))| w * table[j][q] * table[k][q])
                    .sum();
                gram[(j, k)] = v;
                gram[(k, j)] = v;
            }
        }
        Ok(gram)
    }

    /// `sum_{k < n} lambda_k f_k(s) f_k(t)`.
    pub fn mercer_partial_sum(&self, s: f64, t: f64, n: usize) -> Result<f64> {
        if n > self.len() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.len(),
            });
        }
        for x in [s, t] {
            if !(0.0..=self.horizon).contains(&x) {
                return Err(Error::TimeOutOfDomain {
                    t: x,
                    horizon: self.horizon,
                });
            }
        }
        Ok((0..n).map(|i| self.lambdas[i] * self.f(i, s) * self.f(i, t)).sum())
    }

    /// Relative L2 residual `||C f_k - lambda_k f_k|| / lambda_k`.
    pub fn eigenrelation_residual(&self, idx: usize, quad: &QuadratureConfig) -> Result<f64> {
        self.check(idx, 0.0)?;
        let rule = quad.rule()?;
        let panels = quad.panels_for(self.max_omega(), self.horizon, self.horizon)?;
        let nodes = rule.nodes(0.0, self.horizon, panels);
        let points: Vec<f64> = nodes.iter().map(|p| p.0).collect();
        let g = apply_covariance_operator(
            self.mu,
            self.horizon,
            |t| self.f(idx, t),
            self.omegas[idx],
            &points,
            quad,
        )?;
        let lambda = self.lambdas[idx];
        let sq: f64 = nodes
            .iter()
            .zip(&g.values)
            .map(|(&(t, w), gv)| w * (gv - lambda * self.f(idx, t)).powi(2))
            .sum();
        Ok(sq.sqrt() / lambda)
    }
}

/// Output of the covariance operator sampled at chosen points.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

/// `g(s) = int_0^T exp(-mu |s - t|) f(t) dt` and `g'(s)` at each point.
///
/// `band` is the highest angular frequency present in `f`; it sets the
/// panel density. The integral is split at `t = s`, where the kernel has
/// its kink.
pub fn apply_covariance_operator<F>(
    mu: f64,
    horizon: f64,
    f: F,
    band: f64,
    points: &[f64],
    quad: &QuadratureConfig,
) -> Result<Tabulated>
where
    F: Fn(f64) -> f64,
{
    let rule = quad.rule()?;
    let rate = band.abs() + mu;
    let full_panels = quad.panels_for(rate, horizon, horizon)?;
    if band > 0.0 {
        let periods = band * horizon / (2.0 * PI);
        let nodes_per_period = (full_panels * rule.nodes_per_panel()) as f64 / periods;
        if nodes_per_period < 4.0 {
            return Err(Error::GridTooCoarse { nodes_per_period });
        }
    }
    let mut values = Vec::with_capacity(points.len());
    let mut derivatives = Vec::with_capacity(points.len());
    for &s in points {
        if !(0.0..=horizon).contains(&s) {
            return Err(Error::TimeOutOfDomain { t: s, horizon });
        }
        let left = if s > 0.0 {
            let panels = quad.panels_for(rate, s, horizon)?;
            rule.integrate(0.0, s, panels, |t| kernel_c(mu, s - t) * f(t))
        } else {
            0.0
        };
        let right = if s < horizon {
            let panels = quad.panels_for(rate, horizon - s, horizon)?;
            rule.integrate(s, horizon, panels, |t| kernel_c(mu, t - s) * f(t))
        } else {
            0.0
        };
        values.push(left + right);
        derivatives.push(mu * (right - left));
    }
    Ok(Tabulated {
        points: points.to_vec(),
        values,
        derivatives,
    })
}
