//! Gauss–Legendre panels, adaptive Simpson integration and in-panel
//! polynomial interpolation.
//!
//! Every time integral in the crate is taken over a [`PanelGrid`]: a
//! partition of `[0, b]` whose breakpoints contain the impulse instants and
//! the step grid of the evolution family, so integrands are smooth inside a
//! panel. Sharing one grid between the forward solver, the Gramians and the
//! adjoint makes the discrete operators exact transposes of each other.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Quadrature settings shared by every time integral of a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureConfig {
    /// Gauss–Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Panels per gap between consecutive breakpoints.
    pub panels_per_interval: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_panel: 8,
            panels_per_interval: 16,
        }
    }
}

/// Gauss–Legendre rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    barycentric: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre
    /// three-term recurrence.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("Gauss-Legendre rule needs at least one node".into()));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut derivative = 0.0;
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                derivative = dp;
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            if dp != 0.0 {
                derivative = dp;
            }
            let w = 2.0 / ((1.0 - x * x) * derivative * derivative);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let barycentric = (0..n)
            .map(|i| {
                let prod: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| nodes[i] - nodes[j])
                    .product();
                1.0 / prod
            })
            .collect();
        Ok(Self {
            nodes,
            weights,
            barycentric,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    /// Integrates a scalar function over `[a, b]` with a single panel.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(s, w)| w * f(s)).sum()
    }

    /// Lagrange weights that reproduce, at reference coordinate `x`, the
    /// interpolant through the rule's nodes (barycentric second form).
    pub fn interpolation_weights(&self, x: f64) -> Vec<f64> {
        if let Some(hit) = self.nodes.iter().position(|&node| node == x) {
            let mut out = vec![0.0; self.len()];
            out[hit] = 1.0;
            return out;
        }
        let raw: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.barycentric)
            .map(|(node, b)| b / (x - node))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// One panel of a [`PanelGrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub start: f64,
    pub end: f64,
    /// Index of the panel's first node in the grid's flattened node list.
    pub first_node: usize,
}

/// Composite Gauss–Legendre grid over `[0, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelGrid {
    rule: GaussLegendre,
    panels: Vec<Panel>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PanelGrid {
    /// `breakpoints` must be strictly increasing; each gap is split into
    /// `panels_per_gap` equal panels.
    pub fn new(breakpoints: &[f64], config: QuadratureConfig) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Input("panel grid needs at least two breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("panel breakpoints must be strictly increasing".into()));
        }
        if config.panels_per_interval == 0 {
            return Err(Error::Input("panels_per_interval must be positive".into()));
        }
        let rule = GaussLegendre::new(config.nodes_per_panel)?;
        let mut panels = Vec::new();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for gap in breakpoints.windows(2) {
            let (a, b) = (gap[0], gap[1]);
            let n = config.panels_per_interval;
            for j in 0..n {
                let start = if j == 0 { a } else { a + (b - a) * j as f64 / n as f64 };
                let end = if j + 1 == n {
                    b
                } else {
                    a + (b - a) * (j + 1) as f64 / n as f64
                };
                panels.push(Panel {
                    start,
                    end,
                    first_node: nodes.len(),
                });
                for (s, w) in rule.mapped(start, end) {
                    nodes.push(s);
                    weights.push(w);
                }
            }
        }
        Ok(Self {
            rule,
            panels,
            nodes,
            weights,
        })
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    /// All nodes, panel by panel.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.rule.len()
    }

    pub fn horizon(&self) -> f64 {
        self.panels.last().map(|p| p.end).unwrap_or(0.0)
    }

    /// Global node indices of panel `j`.
    pub fn node_range(&self, j: usize) -> std::ops::Range<usize> {
        let first = self.panels[j].first_node;
        first..first + self.rule.len()
    }

    /// Panel index holding `t` under left-continuity: `t` in `(start, end]`,
    /// with `t = 0` assigned to the first panel.
    pub fn panel_of(&self, t: f64) -> usize {
        let idx = self.panels.partition_point(|p| p.end < t);
        idx.min(self.panels.len() - 1)
    }

    /// Index `j` with `panels[j].start == t`, or `panels.len()` when `t` is
    /// the final endpoint. Fails when `t` is not a breakpoint.
    pub fn boundary_index(&self, t: f64) -> Result<usize> {
        if let Some(last) = self.panels.last() {
            if t == last.end {
                return Ok(self.panels.len());
            }
        }
        self.panels
            .iter()
            .position(|p| p.start == t)
            .ok_or_else(|| Error::Domain(format!("time {t} is not a panel boundary")))
    }

    /// Lagrange weights interpolating from panel `j`'s nodes to time `s`.
    pub fn interpolation_weights(&self, j: usize, s: f64) -> Vec<f64> {
        let p = self.panels[j];
        let x = (2.0 * s - p.start - p.end) / (p.end - p.start);
        self.rule.interpolation_weights(x)
    }
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
