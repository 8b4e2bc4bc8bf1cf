//! Composite Gauss-Legendre quadrature with panel counts tied to the
//! fastest oscillation of the integrand.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    /// Gauss-Legendre degree on each panel.
    pub nodes_per_panel: usize,
    /// Lower bound on the panel count over a full horizon.
    pub min_panels: usize,
    /// Panels per radian of phase accumulated by the fastest oscillation.
    pub panels_per_radian: f64,
    pub max_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_panel: 8,
            min_panels: 16,
            panels_per_radian: 4.0 / std::f64::consts::PI,
            max_panels: 200_000,
        }
    }
}

impl QuadratureConfig {
    /// Panel count for an interval of `length` carrying angular frequency
    /// up to `max_freq`, relative to a full horizon of `horizon`.
    pub fn panels_for(&self, max_freq: f64, length: f64, horizon: f64) -> Result<usize> {
        let by_phase = (self.panels_per_radian * max_freq * length).ceil();
        let by_floor = (self.min_panels as f64 * length / horizon).ceil();
        let panels = by_phase.max(by_floor).max(1.0);
        if !panels.is_finite() || panels > self.max_panels as f64 {
            return Err(Error::QuadratureBudgetExceeded {
                panels: if panels.is_finite() { panels as usize } else { usize::MAX },
                limit: self.max_panels,
            });
        }
        Ok(panels as usize)
    }

    pub fn rule(&self) -> Result<PanelRule> {
        PanelRule::new(self.nodes_per_panel)
    }
}

/// A fixed Gauss-Legendre rule replicated over equal panels.
#[derive(Debug, Clone)]
pub struct PanelRule {
    pairs: Vec<(f64, f64)>,
}

impl PanelRule {
    pub fn new(nodes_per_panel: usize) -> Result<Self> {
        let rule = GaussLegendre::new(nodes_per_panel).map_err(|_| {
            Error::InvalidArgument(format!(
                "Gauss-Legendre rule needs at least 2 nodes per panel, got {nodes_per_panel}"
            ))
        })?;
        let mut pairs = rule.into_node_weight_pairs();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { pairs })
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.pairs.len()
    }

    /// Nodes and weights of the composite rule on `[a, b]`, in increasing order.
    pub fn nodes(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.pairs.len());
        for p in 0..panels {
            let left = a + h * p as f64;
            let mid = left + 0.5 * h;
            for &(x, w) in &self.pairs {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        if b == a {
            return 0.0;
        }
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = a + h * (p as f64 + 0.5);
            let mut acc = 0.0;
            for &(x, w) in &self.pairs {
                acc += w * f(mid + 0.5 * h * x);
            }
            total += 0.5 * h * acc;
        }
        total
    }
}
