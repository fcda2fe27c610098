//! The impulsive system bundle and the discrete operators shared by every
//! solver: per-panel propagators, per-node propagators to the panel end, and
//! the impulse transfer chain.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};
use crate::evolution::{EvolutionFamily, Realization};
use crate::impulse_flow::ImpulseSchedule;
use crate::quadrature::{PanelGrid, QuadratureConfig};
use crate::semilinear::SemilinearTerms;

/// A propagator factor stored either as a diagonal or as a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOp {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl StepOp {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            StepOp::Diagonal(d) => d.component_mul(x),
            StepOp::Dense(m) => m * x,
        }
    }

    pub fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            StepOp::Diagonal(d) => d.component_mul(x),
            StepOp::Dense(m) => m.tr_mul(x),
        }
    }

    /// `F X`.
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            StepOp::Diagonal(d) => {
                let mut y = x.clone();
                for (i, di) in d.iter().enumerate() {
                    y.row_mut(i).scale_mut(*di);
                }
                y
            }
            StepOp::Dense(m) => m * x,
        }
    }

    /// `F G Fᵀ`.
    pub fn sandwich(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            StepOp::Diagonal(d) => {
                DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| d[i] * g[(i, j)] * d[j])
            }
            StepOp::Dense(m) => m * g * m.transpose(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            StepOp::Diagonal(d) => DMatrix::from_diagonal(d),
            StepOp::Dense(m) => m.clone(),
        }
    }
}

/// Discrete propagators attached to a panel grid.
#[derive(Debug, Clone)]
pub struct PanelOps {
    /// `U(end_j, start_j)` for each panel `j`.
    pub panel: Vec<StepOp>,
    /// `U(end_j, s_n)` for each node `n` of panel `j`.
    pub node_to_end: Vec<StepOp>,
}

/// Impulse transfer chain.
///
/// With `T_m = U(b, t_m)` and `T_{k-1} = T_k (I + D_k) U(t_k, t_{k-1})`, the
/// input operator routes the control on `(t_{i-1}, t_i]` through
/// `P_i = T_i (I + D_i)` and the impulse control `v_i` through `T_i E_i`.
#[derive(Debug, Clone)]
pub struct TransferChain {
    /// `U(t_i, t_{i-1})` for `i = 1..=m+1`, with `t_{m+1} = b`.
    pub interval: Vec<DMatrix<f64>>,
    /// `T_i` for `i = 1..=m` (index `i - 1`).
    pub t: Vec<DMatrix<f64>>,
    /// `P_i = T_i (I + D_i)` for `i = 1..=m` (index `i - 1`).
    pub p: Vec<DMatrix<f64>>,
}

/// Evolution family, input operator, impulse schedule, optional semilinear
/// terms and the shared quadrature grid.
#[derive(Clone)]
pub struct ImpulsiveSystem {
    family: EvolutionFamily,
    input: DMatrix<f64>,
    schedule: ImpulseSchedule,
    semilinear: Option<SemilinearTerms>,
    grid: Arc<PanelGrid>,
    ops: Arc<PanelOps>,
    chain: Arc<TransferChain>,
    /// Panel index range for each interval `(t_{i-1}, t_i]`, `i = 1..=m+1`.
    interval_panels: Vec<std::ops::Range<usize>>,
}

impl std::fmt::Debug for ImpulsiveSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImpulsiveSystem")
            .field("family", &self.family)
            .field("input", &self.input)
            .field("schedule", &self.schedule)
            .field("semilinear", &self.semilinear.is_some())
            .field("panels", &self.grid.panels().len())
            .finish()
    }
}

impl ImpulsiveSystem {
    /// For dense families the panels coincide with the stepper cells and
    /// `quad.panels_per_interval` is ignored; every impulse time must then be
    /// a step-grid point.
    pub fn new(
        family: EvolutionFamily,
        input: DMatrix<f64>,
        schedule: ImpulseSchedule,
        quad: QuadratureConfig,
    ) -> Result<Self> {
        let n = family.dim();
        if input.nrows() != n {
            return Err(Error::Input(format!(
                "input operator has {} rows, state dimension is {n}",
                input.nrows()
            )));
        }
        check_finite("input operator", input.as_slice())?;
        schedule.validate_dims(n)?;
        let horizon = schedule.horizon();
        if (family.horizon() - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::Input(format!(
                "evolution horizon {} differs from schedule horizon {horizon}",
                family.horizon()
            )));
        }
        let breakpoints = schedule.breakpoints();
        let grid = match family.step_grid() {
            None => PanelGrid::new(&breakpoints, quad)?,
            Some(steps) => {
                for t in schedule.times() {
                    if !steps.contains(t) {
                        return Err(Error::Input(format!(
                            "impulse time {t} is not a point of the dense step grid"
                        )));
                    }
                }
                PanelGrid::new(
                    steps,
                    QuadratureConfig {
                        nodes_per_panel: quad.nodes_per_panel,
                        panels_per_interval: 1,
                    },
                )?
            }
        };
        let ops = build_ops(&family, &grid)?;
        let mut interval_panels = Vec::with_capacity(breakpoints.len() - 1);
        for w in breakpoints.windows(2) {
            let a = grid.boundary_index(w[0])?;
            let b = grid.boundary_index(w[1])?;
            interval_panels.push(a..b);
        }
        let chain = build_chain(n, &schedule, &ops, &interval_panels);
        Ok(Self {
            family,
            input,
            schedule,
            semilinear: None,
            grid: Arc::new(grid),
            ops: Arc::new(ops),
            chain: Arc::new(chain),
            interval_panels,
        })
    }

    pub fn with_semilinear(mut self, terms: SemilinearTerms) -> Self {
        self.semilinear = Some(terms);
        self
    }

    pub fn without_semilinear(mut self) -> Self {
        self.semilinear = None;
        self
    }

    pub fn family(&self) -> &EvolutionFamily {
        &self.family
    }

    /// The input operator `B`.
    pub fn input(&self) -> &DMatrix<f64> {
        &self.input
    }

    pub fn schedule(&self) -> &ImpulseSchedule {
        &self.schedule
    }

    pub fn semilinear(&self) -> Option<&SemilinearTerms> {
        self.semilinear.as_ref()
    }

    pub fn grid(&self) -> &PanelGrid {
        &self.grid
    }

    pub fn ops(&self) -> &PanelOps {
        &self.ops
    }

    pub fn chain(&self) -> &TransferChain {
        &self.chain
    }

    pub fn state_dim(&self) -> usize {
        self.family.dim()
    }

    pub fn control_dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn horizon(&self) -> f64 {
        self.schedule.horizon()
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.family.realization(), Realization::SpectralDiagonal(_))
    }

    /// Panels of the interval `(t_{i-1}, t_i]`, `i = 1..=m+1`.
    pub fn interval_panels(&self, i: usize) -> std::ops::Range<usize> {
        self.interval_panels[i - 1].clone()
    }

    /// Interval index `i` with `t ∈ (t_{i-1}, t_i]`; `t = 0` belongs to `i = 1`.
    pub fn interval_of(&self, t: f64) -> usize {
        let times = self.schedule.times();
        times.partition_point(|&tk| tk < t) + 1
    }

    /// Right endpoint `t_i` of interval `i`, with `t_{m+1} = b`.
    pub fn interval_end(&self, i: usize) -> f64 {
        let m = self.schedule.len();
        if i == m + 1 {
            self.horizon()
        } else {
            self.schedule.times()[i - 1]
        }
    }

    /// `U(t_i, ·)` integrated against node values over interval `i`:
    /// `Σ_n w_n U(t_i, s_n) F_n`, accumulated panel by panel.
    pub fn propagated_integral_nodal(&self, i: usize, values: &[DVector<f64>]) -> DVector<f64> {
        let n = self.state_dim();
        let weights = self.grid.weights();
        let mut acc = DVector::zeros(n);
        for j in self.interval_panels(i) {
            acc = self.ops.panel[j].apply(&acc);
            for node in self.grid.node_range(j) {
                let f = &values[node];
                if f.iter().all(|v| *v == 0.0) {
                    continue;
                }
                acc += self.ops.node_to_end[node].apply(f) * weights[node];
            }
        }
        acc
    }
}

fn build_ops(family: &EvolutionFamily, grid: &PanelGrid) -> Result<PanelOps> {
    let op = |s: f64, t: f64| -> Result<StepOp> {
        Ok(match family.realization() {
            Realization::SpectralDiagonal(f) => StepOp::Diagonal(DVector::from_vec(f.factors(s, t))),
            Realization::DenseGenerator(_) => StepOp::Dense(family.assemble_matrix(s, t)?),
        })
    };
    let mut panel = Vec::with_capacity(grid.panels().len());
    let mut node_to_end = Vec::with_capacity(grid.nodes().len());
    for (j, p) in grid.panels().iter().enumerate() {
        panel.push(op(p.start, p.end)?);
        for node in grid.node_range(j) {
            node_to_end.push(op(grid.nodes()[node], p.end)?);
        }
    }
    Ok(PanelOps { panel, node_to_end })
}

fn build_chain(
    n: usize,
    schedule: &ImpulseSchedule,
    ops: &PanelOps,
    interval_panels: &[std::ops::Range<usize>],
) -> TransferChain {
    let interval: Vec<DMatrix<f64>> = interval_panels
        .iter()
        .map(|range| {
            range.clone().fold(DMatrix::identity(n, n), |acc, j| {
                ops.panel[j].apply_matrix(&acc)
            })
        })
        .collect();
    let m = schedule.len();
    let mut t = vec![DMatrix::zeros(n, n); m];
    let mut p = vec![DMatrix::zeros(n, n); m];
    if m > 0 {
        t[m - 1] = interval[m].clone();
        for k in (1..=m).rev() {
            let jump = DMatrix::identity(n, n) + &schedule.d()[k - 1];
            p[k - 1] = &t[k - 1] * &jump;
            if k > 1 {
                t[k - 2] = &p[k - 1] * &interval[k - 1];
            }
        }
    }
    TransferChain { interval, t, p }
}
