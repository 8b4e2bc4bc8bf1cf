use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;

use qkl_core::covariance::lyapunov_residual;
use qkl_core::linalg::max_abs;
use qkl_core::oracle::{nystrom_spectrum, taylor_match, wick_moments};
use qkl_core::{
    solve_lyapunov, CanonicalModel, CovarianceSet, Error, OqhoModel, OracleReport, QefProblem, QuadratureConfig,
    SpectralBasis,
};

use crate::config::RunConfig;
use crate::export::{json, matrix2_block, matrix_block, num, Artifact, Csv};
use crate::Failure;

/// Points per unit horizon in the plot-ready eigenfunction table.
const EIGENFUNCTION_SAMPLES: usize = 201;
/// Step for the finite-difference slope of `ln Xi_N` at zero.
const SLOPE_STEP: f64 = 1e-6;
/// Relative Taylor remainder below which the cubic probe carries no signal.
const ROUNDOFF_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Spectrum,
    Covariance,
    Qef,
    Sweep,
    Verify,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Lines for standard output.
    pub summary: Vec<String>,
    pub failed_checks: usize,
}

pub fn run(stage: Stage, cfg: &RunConfig) -> Result<Outcome, Failure> {
    let pipe = Pipeline::new(cfg)?;
    match stage {
        Stage::Spectrum => pipe.spectrum(),
        Stage::Covariance => pipe.covariance(),
        Stage::Qef => pipe.qef(),
        Stage::Sweep => pipe.sweep(),
        Stage::Verify => Ok(pipe.verify()),
    }
}

struct Pipeline<'a> {
    cfg: &'a RunConfig,
    model: OqhoModel,
    canon: CanonicalModel,
    p: Matrix2<f64>,
    quad: QuadratureConfig,
    basis: SpectralBasis,
}

impl<'a> Pipeline<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, Failure> {
        cfg.validate()?;
        let model = cfg.model.build()?;
        let canon = model.canonicalize()?;
        let p = solve_lyapunov(&canon)?;
        let quad = cfg.quadrature()?;
        log::info!("model: mu = {}, nu = {}, {} channels", model.mu(), model.nu(), model.channels());
        let basis = SpectralBasis::solve(canon.mu(), cfg.horizon, cfg.order)?;
        Ok(Self {
            cfg,
            model,
            canon,
            p,
            quad,
            basis,
        })
    }

    fn covariance_set(&self) -> Result<CovarianceSet, Failure> {
        log::info!("computing {} covariance blocks", self.cfg.order * (self.cfg.order + 1) / 2);
        Ok(CovarianceSet::compute(&self.basis, &self.p, &self.canon, &self.quad)?)
    }

    fn problem(&self) -> Result<QefProblem, Failure> {
        Ok(QefProblem::new(&self.basis, &self.covariance_set()?)?)
    }

    fn spectrum(&self) -> Result<Outcome, Failure> {
        let b = &self.basis;
        let mut csv = Csv::new(&["k", "u_k", "omega_k", "lambda_k", "gamma_k", "residual_pik", "residual_trans"]);
        for k in 0..b.len() {
            csv.row(&[
                (k + 1).to_string(),
                num(b.roots()[k]),
                num(b.omegas()[k]),
                num(b.lambdas()[k]),
                num(b.gammas()[k]),
                num(b.pik_residual(k)),
                num(b.trans_residual(k)),
            ]);
        }
        let mut header = vec!["t".to_string()];
        header.extend((1..=b.len()).map(|k| format!("f_{k}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = Csv::new(&header);
        for i in 0..EIGENFUNCTION_SAMPLES {
            let t = b.horizon() * i as f64 / (EIGENFUNCTION_SAMPLES - 1) as f64;
            let mut row = vec![num(t)];
            for k in 0..b.len() {
                row.push(num(b.eigenfunction(k, t)?));
            }
            table.row(&row);
        }
        Ok(Outcome {
            artifacts: vec![
                Artifact::new("spectrum.csv", csv.finish()),
                Artifact::new("eigenfunctions.csv", table.finish()),
            ],
            summary: vec![
                format!("modes: {}", b.len()),
                format!("trace deficit T - sum(lambda_k): {}", num(b.trace_deficit())),
            ],
            failed_checks: 0,
        })
    }

    fn covariance(&self) -> Result<Outcome, Failure> {
        let set = self.covariance_set()?;
        let mut text = String::new();
        text += &matrix2_block("drift A", self.model.drift());
        text += &matrix2_block("canonical transform S", self.canon.transform());
        text += &matrix2_block("one-point covariance P", &self.p);
        text += &format!(
            "# Lyapunov residual (max abs)\n{}\n",
            num(max_abs(&lyapunov_residual(&self.canon, &self.p)))
        );
        text += &matrix_block("coefficient covariance P_N", set.assembled());
        text += &format!("# smallest eigenvalue of P_N + (i/2) I (x) J\n{}\n", num(set.min_eigenvalue()));

        let n = set.order();
        let mut csv = Csv::new(&["j", "k", "frobenius", "p11", "p12", "p21", "p22"]);
        for j in 0..n {
            for k in 0..n {
                let b = set.block(j, k);
                csv.row(&[
                    (j + 1).to_string(),
                    (k + 1).to_string(),
                    num(b.norm()),
                    num(b[(0, 0)]),
                    num(b[(0, 1)]),
                    num(b[(1, 0)]),
                    num(b[(1, 1)]),
                ]);
            }
        }
        Ok(Outcome {
            artifacts: vec![
                Artifact::new("covariance.txt", text),
                Artifact::new("block_norms.csv", csv.finish()),
            ],
            summary: vec![
                format!("blocks: {n} x {n}"),
                format!("admissibility margin: {}", num(set.min_eigenvalue())),
            ],
            failed_checks: 0,
        })
    }

    fn thetas(&self, star: f64) -> Result<Vec<f64>, Failure> {
        match &self.cfg.theta {
            Some(spec) => spec.values(),
            None => {
                // default: 20 points up to just below the admissibility boundary
                let (lo, hi) = (0.05 * star, 0.95 * star);
                Ok((0..20).map(|i| lo + (hi - lo) * i as f64 / 19.0).collect())
            }
        }
    }

    fn critical(&self, problem: &QefProblem) -> Result<f64, Failure> {
        let (lo, hi) = problem.critical_bracket()?;
        Ok(problem.critical_theta(lo, hi)?)
    }

    fn qef(&self) -> Result<Outcome, Failure> {
        let problem = self.problem()?;
        let star = self.critical(&problem)?;
        let thetas = self.thetas(star)?;
        let tol = self.cfg.tolerances.series;
        let n = problem.order();

        let mut csv = Csv::new(&["theta", "N", "r_N", "log_Xi_N", "converged", "status"]);
        let mut rows = Vec::with_capacity(thetas.len());
        let mut largest: Option<f64> = None;
        for &theta in &thetas {
            let row = qef_row(&problem, theta, tol)?;
            if row.status == "ok" && largest.map_or(true, |t| theta > t) {
                largest = Some(theta);
            }
            csv.row(&[
                num(theta),
                n.to_string(),
                num(row.r_n),
                row.log_xi_n.map(num).unwrap_or_default(),
                row.converged.to_string(),
                row.status.to_string(),
            ]);
            rows.push(row);
        }
        let series = match largest {
            Some(theta) => {
                let s = problem.series_report(theta, tol)?;
                Some(SeriesReport {
                    theta,
                    converged: s.converged,
                    increments: s.increments.clone(),
                    partial_log_xi: s.partial_log_xi.clone(),
                    direct_log_xi: s.direct_log_xi.clone(),
                    radii: s.radii.clone(),
                })
            }
            None => None,
        };
        let exceeded = rows.iter().filter(|r| r.status != "ok").count();
        let report = QefReport {
            order: n,
            horizon: self.cfg.horizon,
            mu: self.canon.mu(),
            nu: self.canon.nu(),
            mean_square: problem.mean_square(),
            theta_star: star,
            series_tolerance: tol,
            rows,
            largest_admissible: series,
        };
        let mut summary = vec![format!("critical theta: {}", num(star))];
        if exceeded > 0 {
            summary.push(format!("{exceeded} theta value(s) beyond the admissibility boundary"));
        }
        Ok(Outcome {
            artifacts: vec![
                Artifact::new("qef.csv", csv.finish()),
                Artifact::new("qef.json", json(&report)),
            ],
            summary,
            failed_checks: 0,
        })
    }

    fn sweep(&self) -> Result<Outcome, Failure> {
        let problem = self.problem()?;
        let star = self.critical(&problem)?;
        let thetas = self.thetas(star)?;
        let tol = self.cfg.tolerances.series;
        let subs = (1..=problem.order())
            .map(|n| problem.truncated(n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut csv = Csv::new(&["theta", "N", "r_N", "log_Xi_N", "converged"]);
        for &theta in &thetas {
            for (n, sub) in subs.iter().enumerate() {
                let row = qef_row(sub, theta, tol)?;
                csv.row(&[
                    num(theta),
                    (n + 1).to_string(),
                    num(row.r_n),
                    row.log_xi_n.map(num).unwrap_or_default(),
                    row.converged.to_string(),
                ]);
            }
        }
        Ok(Outcome {
            artifacts: vec![Artifact::new("sweep.csv", csv.finish())],
            summary: vec![
                format!("critical theta: {}", num(star)),
                format!("rows: {}", thetas.len() * subs.len()),
            ],
            failed_checks: 0,
        })
    }

    fn verify(&self) -> Outcome {
        let tol = &self.cfg.tolerances;
        let mut report = OracleReport::default();
        let b = &self.basis;

        let worst = |f: &dyn Fn(usize) -> f64| (0..b.len()).map(|k| f(k).abs()).fold(0.0, f64::max);
        report.bound("spectrum.pik_residual", worst(&|k| b.pik_residual(k)), tol.residual);
        report.bound("spectrum.trans_residual", worst(&|k| b.trans_residual(k)), tol.residual);
        match b.gram_matrix(&self.quad) {
            Ok(g) => {
                let dev = max_abs(&(g - DMatrix::<f64>::identity(b.len(), b.len())));
                report.bound("spectrum.gram_orthonormality", dev, tol.gram);
            }
            Err(e) => report.failed("spectrum.gram_orthonormality", e.to_string()),
        }

        self.verify_nystrom(&mut report);

        report.bound("model.pr_residual", max_abs(&self.model.pr_residual()), tol.residual);
        report.bound(
            "model.lyapunov_residual",
            max_abs(&lyapunov_residual(&self.canon, &self.p)),
            tol.residual,
        );
        let [l1, l2] = self.model.drift_eigenvalues();
        let spectrum_gap = (l1.re + self.model.mu())
            .abs()
            .max((l2.re + self.model.mu()).abs())
            .max((l1.im.abs() - self.model.nu()).abs());
        report.bound("model.drift_eigenvalues", spectrum_gap, 1e-10);

        // P = I is a thermal state with a nonzero third cumulant, so it also
        // carries the cubic-remainder probe of the Taylor check.
        match CovarianceSet::compute(b, &Matrix2::identity(), &self.canon, &self.quad) {
            Ok(set) => {
                report.bound(
                    "covariance.identity_blocks",
                    set.deviation_from_diagonal(&Matrix2::identity()),
                    tol.identity_blocks,
                );
                match QefProblem::new(b, &set) {
                    Ok(problem) => self.verify_taylor("identity", &problem, &mut report),
                    Err(e) => report.failed("identity.qef_problem", e.to_string()),
                }
            }
            Err(e) => report.failed("covariance.identity_blocks", e.to_string()),
        }

        match self.covariance_set() {
            Ok(set) => {
                report.push(
                    "covariance.admissibility",
                    set.min_eigenvalue(),
                    0.0,
                    -qkl_core::covariance::ADMISSIBILITY_FLOOR,
                    set.min_eigenvalue() >= qkl_core::covariance::ADMISSIBILITY_FLOOR,
                );
                match QefProblem::new(b, &set) {
                    Ok(problem) => {
                        self.verify_taylor("model", &problem, &mut report);
                        self.verify_qef(&problem, &mut report);
                    }
                    Err(e) => report.failed("model.qef_problem", e.to_string()),
                }
            }
            Err(e) => report.failed("covariance.admissibility", e.to_string()),
        }

        let failed = report.failures().count();
        let summary = report
            .checks
            .iter()
            .map(|c| format!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name))
            .collect();
        let file = VerifyReport {
            passed: failed == 0,
            failed,
            checks: &report,
        };
        Outcome {
            artifacts: vec![Artifact::new("verify.json", json(&file))],
            summary,
            failed_checks: failed,
        }
    }

    fn verify_nystrom(&self, report: &mut OracleReport) {
        let v = &self.cfg.verify;
        let tol = &self.cfg.tolerances;
        let (mu, horizon) = (self.canon.mu(), self.cfg.horizon);
        log::info!("Nystrom eigensolve on {} points", v.nystrom_grid);
        let result = nystrom_spectrum(mu, horizon, v.nystrom_grid, v.nystrom_modes).and_then(|nys| {
            let basis = SpectralBasis::solve(mu, horizon, v.nystrom_modes)?;
            Ok((nys.trace, nys.compare(&basis)?))
        });
        match result {
            Ok((trace, cmp)) => {
                report.absolute("nystrom.trace", trace, horizon, 1e-9 * horizon);
                report.bound("nystrom.eigenvalue_rel_error", cmp.max_eigenvalue_error(), tol.nystrom_eigenvalue);
                report.bound(
                    "nystrom.eigenfunction_l2",
                    cmp.max_eigenfunction_distance(v.eigenfunction_modes),
                    tol.nystrom_eigenfunction,
                );
            }
            Err(e) => report.failed("nystrom", e.to_string()),
        }
    }

    /// Wick moments against the determinant formula. The halving probe is
    /// skipped when the remainder is already at round-off, which happens for
    /// pure states where `Q_N` has no spread beyond its mean.
    fn verify_taylor(&self, label: &str, problem: &QefProblem, report: &mut OracleReport) {
        let tol = &self.cfg.tolerances;
        let name = |check: &str| format!("{label}.{check}");
        let m = match wick_moments(problem.lambdas(), problem.covariance()) {
            Ok(m) => m,
            Err(e) => return report.failed(&name("wick"), e.to_string()),
        };
        report.absolute(&name("wick_mean_matches_mean_square"), m.m1, problem.mean_square(), 0.0);
        report.bound(&name("wick_imaginary_residual"), m.imaginary_residual, tol.residual);
        let theta = 1e-3 / problem.lambdas()[0];
        match taylor_match(&m, theta, |t| problem.log_xi(t)) {
            Ok(t) => {
                report.bound(&name("taylor_relative_residual"), t.relative_residual, tol.taylor);
                if t.relative_residual > ROUNDOFF_FLOOR {
                    report.within(&name("taylor_halving_ratio"), t.halving_ratio, 6.0, 10.0);
                }
            }
            Err(e) => report.failed(&name("taylor"), e.to_string()),
        }
    }

    fn verify_qef(&self, problem: &QefProblem, report: &mut OracleReport) {
        let tol = &self.cfg.tolerances;
        match problem.log_xi(0.0) {
            Ok(v) => {
                report.absolute("qef.theta_zero", v, 0.0, 0.0);
            }
            Err(e) => report.failed("qef.theta_zero", e.to_string()),
        }
        let mean = problem.mean_square();
        match problem.log_xi(SLOPE_STEP) {
            Ok(v) => {
                report.bound("qef.slope_at_zero", ((v / SLOPE_STEP - mean) / mean).abs(), tol.taylor);
            }
            Err(e) => report.failed("qef.slope_at_zero", e.to_string()),
        }
        let critical = problem
            .critical_bracket()
            .and_then(|(lo, hi)| problem.critical_theta(lo, hi));
        match critical {
            Ok(star) => {
                let below = problem.radius(0.99 * star).unwrap_or(f64::NAN);
                let above = problem.radius(1.01 * star).unwrap_or(f64::NAN);
                report.push("qef.critical_bracket", star, star, 0.0, below < 1.0 && above > 1.0);
                match problem.series_report(0.5 * star, 0.0) {
                    Ok(s) => {
                        report.bound("qef.schur_telescoping", s.telescoping_gap(), tol.telescoping);
                    }
                    Err(e) => report.failed("qef.schur_telescoping", e.to_string()),
                }
            }
            Err(e) => report.failed("qef.critical_bracket", e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct QefRow {
    theta: f64,
    #[serde(rename = "r_N")]
    r_n: f64,
    #[serde(rename = "log_Xi_N")]
    log_xi_n: Option<f64>,
    converged: bool,
    status: &'static str,
}

fn qef_row(problem: &QefProblem, theta: f64, tol: f64) -> Result<QefRow, Failure> {
    let r_n = problem.radius(theta)?;
    match problem.series_report(theta, tol) {
        Ok(s) => Ok(QefRow {
            theta,
            r_n,
            log_xi_n: Some(problem.log_xi(theta)?),
            converged: s.converged,
            status: "ok",
        }),
        Err(Error::RadiusExceeded { .. }) => Ok(QefRow {
            theta,
            r_n,
            log_xi_n: None,
            converged: false,
            status: "RadiusExceeded",
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct SeriesReport {
    theta: f64,
    converged: bool,
    increments: Vec<f64>,
    partial_log_xi: Vec<f64>,
    direct_log_xi: Vec<f64>,
    radii: Vec<f64>,
}

#[derive(Serialize)]
struct QefReport {
    order: usize,
    horizon: f64,
    mu: f64,
    nu: f64,
    mean_square: f64,
    theta_star: f64,
    series_tolerance: f64,
    rows: Vec<QefRow>,
    largest_admissible: Option<SeriesReport>,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    passed: bool,
    failed: usize,
    #[serde(flatten)]
    checks: &'a OracleReport,
}
