//! TOML run configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix2};
use serde::Deserialize;

use qkl_core::{OqhoModel, QuadratureConfig};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: f64,
    /// Truncation order `N`.
    pub order: usize,
    pub model: ModelSpec,
    #[serde(default)]
    pub theta: Option<ThetaSpec>,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Either the `(mu, nu)` shortcut or the full `(energy, coupling)` pair.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    /// `R` in row-major order.
    pub energy: Option<[f64; 4]>,
    /// `M` in row-major order, `channels x 2`.
    pub coupling: Option<Vec<f64>>,
    pub channels: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub count: Option<usize>,
    pub scale: Option<Scale>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub nodes_per_panel: Option<usize>,
    /// Panels per period of the fastest oscillation.
    pub panels_per_period: Option<f64>,
    pub min_panels: Option<usize>,
    pub max_panels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Stop the Schur series after three increments below this magnitude.
    pub series: f64,
    pub residual: f64,
    pub gram: f64,
    pub identity_blocks: f64,
    pub nystrom_eigenvalue: f64,
    pub nystrom_eigenfunction: f64,
    pub taylor: f64,
    pub telescoping: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            series: 1e-6,
            residual: 1e-12,
            gram: 1e-10,
            identity_blocks: 1e-7,
            nystrom_eigenvalue: 5e-3,
            nystrom_eigenfunction: 1e-2,
            taylor: 1e-5,
            telescoping: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub nystrom_grid: usize,
    pub nystrom_modes: usize,
    pub eigenfunction_modes: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            nystrom_grid: 4000,
            nystrom_modes: 10,
            eigenfunction_modes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(path.to_path_buf(), e))?;
        Self::parse(&text).map_err(|f| match f {
            Failure::Config(msg) => Failure::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Failure::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Failure::Config(format!("horizon must be positive and finite, got {}", self.horizon)));
        }
        if self.order == 0 {
            return Err(Failure::Config("order must be at least 1".into()));
        }
        if let Some(theta) = &self.theta {
            theta.values()?;
        }
        self.quadrature()?;
        let v = &self.verify;
        if v.nystrom_modes == 0 || v.eigenfunction_modes > v.nystrom_modes {
            return Err(Failure::Config(
                "verify.nystrom_modes must be at least 1 and no smaller than verify.eigenfunction_modes".into(),
            ));
        }
        self.model.shape()?;
        Ok(())
    }

    pub fn quadrature(&self) -> Result<QuadratureConfig, Failure> {
        let q = &self.quadrature;
        let mut out = QuadratureConfig::default();
        if let Some(n) = q.nodes_per_panel {
            if n < 2 {
                return Err(Failure::Config(format!("quadrature.nodes_per_panel must be at least 2, got {n}")));
            }
            out.nodes_per_panel = n;
        }
        if let Some(p) = q.panels_per_period {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Failure::Config(format!("quadrature.panels_per_period must be positive, got {p}")));
            }
            out.panels_per_radian = p / (2.0 * std::f64::consts::PI);
        }
        if let Some(m) = q.min_panels {
            out.min_panels = m.max(1);
        }
        if let Some(m) = q.max_panels {
            out.max_panels = m;
        }
        Ok(out)
    }
}

enum ModelShape {
    Rates(f64, f64),
    Full([f64; 4], Vec<f64>, usize),
}

impl ModelSpec {
    fn shape(&self) -> Result<ModelShape, Failure> {
        match (self.mu, self.nu, &self.energy, &self.coupling) {
            (Some(mu), Some(nu), None, None) => {
                if self.channels.is_some() {
                    return Err(Failure::Config("model.channels only applies with model.coupling".into()));
                }
                Ok(ModelShape::Rates(mu, nu))
            }
            (None, None, Some(r), Some(m)) => {
                let channels = self.channels.unwrap_or(m.len() / 2);
                if m.len() != 2 * channels {
                    return Err(Failure::Config(format!(
                        "model.coupling has {} entries, expected {} for {channels} channels",
                        m.len(),
                        2 * channels
                    )));
                }
                Ok(ModelShape::Full(*r, m.clone(), channels))
            }
            _ => Err(Failure::Config(
                "model needs either `mu` and `nu`, or `energy` and `coupling`".into(),
            )),
        }
    }

    pub fn build(&self) -> Result<OqhoModel, Failure> {
        let model = match self.shape()? {
            ModelShape::Rates(mu, nu) => OqhoModel::from_rates(mu, nu),
            ModelShape::Full(r, m, channels) => OqhoModel::new(
                Matrix2::new(r[0], r[1], r[2], r[3]),
                DMatrix::from_row_slice(channels, 2, &m),
            ),
        };
        model.map_err(Failure::Engine)
    }
}

impl ThetaSpec {
    /// Parses `a,b,c` or `start:stop:count[:log]`.
    pub fn from_arg(arg: &str) -> Result<Self, Failure> {
        let bad = |what: &str| Failure::Config(format!("--theta {arg:?}: {what}"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
        if arg.contains(':') {
            let parts: Vec<&str> = arg.split(':').collect();
            if !(3..=4).contains(&parts.len()) {
                return Err(bad("expected start:stop:count[:log|linear]"));
            }
            let count = parts[2]
                .trim()
                .parse::<usize>()
                .map_err(|_| bad(&format!("`{}` is not a count", parts[2])))?;
            let scale = match parts.get(3).map(|s| s.trim()) {
                None | Some("linear") => Scale::Linear,
                Some("log") => Scale::Log,
                Some(other) => return Err(bad(&format!("unknown scale `{other}`"))),
            };
            let spec = Self {
                start: Some(num(parts[0])?),
                stop: Some(num(parts[1])?),
                count: Some(count),
                scale: Some(scale),
                values: None,
            };
            spec.values()?;
            Ok(spec)
        } else {
            let values = arg.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
            let spec = Self {
                values: Some(values),
                ..Default::default()
            };
            spec.values()?;
            Ok(spec)
        }
    }

    pub fn values(&self) -> Result<Vec<f64>, Failure> {
        let out = match (&self.values, self.start, self.stop, self.count) {
            (Some(v), None, None, None) if self.scale.is_none() => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n == 0 {
                    return Err(Failure::Config("theta.count must be at least 1".into()));
                }
                if n > 1 && !(a < b) {
                    return Err(Failure::Config(format!("theta range is empty: start {a} >= stop {b}")));
                }
                let scale = self.scale.unwrap_or_default();
                let t = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                match scale {
                    Scale::Linear => (0..n).map(|i| a + (b - a) * t(i)).collect(),
                    Scale::Log => {
                        if !(a > 0.0) {
                            return Err(Failure::Config("log-spaced theta range needs start > 0".into()));
                        }
                        let (la, lb) = (a.ln(), b.ln());
                        (0..n).map(|i| (la + (lb - la) * t(i)).exp()).collect()
                    }
                }
            }
            _ => {
                return Err(Failure::Config(
                    "theta needs either `values`, or `start`, `stop` and `count` (with optional `scale`)".into(),
                ))
            }
        };
        if out.is_empty() {
            return Err(Failure::Config("theta list is empty".into()));
        }
        if let Some(bad) = out.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Failure::Config(format!("theta values must be positive and finite, got {bad}")));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "horizon = 1.0\norder = 10\n[model]\nmu = 1.0\nnu = 1.0\n";

    #[test]
    fn minimal_config() {
        let cfg = RunConfig::parse(BASE).unwrap();
        assert_eq!(cfg.order, 10);
        assert_eq!(cfg.verify.nystrom_grid, 4000);
        assert_eq!(cfg.quadrature().unwrap(), QuadratureConfig::default());
        assert!(cfg.theta.is_none());
    }

    #[test]
    fn zero_order_is_rejected() {
        let text = BASE.replace("order = 10", "order = 0");
        assert!(matches!(RunConfig::parse(&text), Err(Failure::Config(_))));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{BASE}colour = 3\n");
        let Err(Failure::Config(msg)) = RunConfig::parse(&text) else {
            panic!("expected a config error")
        };
        assert!(msg.contains("colour"), "{msg}");
        let text = BASE.replace("nu = 1.0", "nu = 1.0\nlambda = 2.0");
        let Err(Failure::Config(msg)) = RunConfig::parse(&text) else {
            panic!("expected a config error")
        };
        assert!(msg.contains("lambda") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn full_model_form() {
        let text = "horizon = 2.0\norder = 3\n[model]\nenergy = [2.0, 0.5, 0.5, 1.0]\n\
                    coupling = [0.9, -0.2, -0.3, -0.7, 0.4, 0.1, 0.25, -0.6]\nchannels = 4\n";
        let cfg = RunConfig::parse(text).unwrap();
        let model = cfg.model.build().unwrap();
        assert_eq!(model.channels(), 4);
        assert!(model.mu() > 0.0);
        let mixed = "horizon = 2.0\norder = 3\n[model]\nmu = 1.0\nenergy = [2.0, 0.5, 0.5, 1.0]\n";
        assert!(RunConfig::parse(mixed).is_err());
    }

    #[test]
    fn theta_forms() {
        let spec = ThetaSpec::from_arg("0.1,0.2, 0.3").unwrap();
        assert_eq!(spec.values().unwrap(), vec![0.1, 0.2, 0.3]);
        let spec = ThetaSpec::from_arg("0.1:0.5:5").unwrap();
        let v = spec.values().unwrap();
        assert_eq!(v.len(), 5);
        assert!((v[4] - 0.5).abs() < 1e-15 && (v[1] - 0.2).abs() < 1e-15);
        let v = ThetaSpec::from_arg("0.01:1:3:log").unwrap().values().unwrap();
        assert!((v[1] - 0.1).abs() < 1e-15);
        for bad in ["", "0.5:0.1:3", "0.1:0.5:0", "-1", "a,b", "0:1:3:log", "1:2:3:cubic"] {
            assert!(ThetaSpec::from_arg(bad).is_err(), "{bad}");
        }
        let text = format!("{BASE}[theta]\nstart = 0.1\nstop = 0.2\ncount = 4\nscale = \"log\"\n");
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.theta.unwrap().values().unwrap().len(), 4);
    }

    #[test]
    fn quadrature_overrides() {
        let text = format!("{BASE}[quadrature]\nnodes_per_panel = 2\npanels_per_period = 4.0\n");
        let q = RunConfig::parse(&text).unwrap().quadrature().unwrap();
        assert_eq!(q.nodes_per_panel, 2);
        assert!((q.panels_per_radian - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        let text = format!("{BASE}[quadrature]\nnodes_per_panel = 1\n");
        assert!(RunConfig::parse(&text).is_err());
    }
}
