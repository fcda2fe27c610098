//! Impulse schedules, jump maps and piecewise mild solutions of the linear
//! impulsive system.
//!
//! Values reported at an impulse time `t_k` are left limits; the jump
//! `x(t_k⁺) = (I + D_k) x(t_k) + E_k v_k` is applied when the march leaves `t_k`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};
use crate::system::ImpulsiveSystem;

/// Impulse instants `0 < t_1 < … < t_m < b` with their jump operators.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSchedule {
    times: Vec<f64>,
    d: Vec<DMatrix<f64>>,
    e: Vec<DMatrix<f64>>,
    horizon: f64,
}

impl ImpulseSchedule {
    pub fn new(
        times: Vec<f64>,
        d: Vec<DMatrix<f64>>,
        e: Vec<DMatrix<f64>>,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
        }
        check_finite("impulse times", &times)?;
        if times.iter().any(|&t| t <= 0.0 || t >= horizon) {
            return Err(Error::Input(
                "impulse times must lie strictly inside (0,b)".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("impulse times must be strictly increasing".into()));
        }
        if d.len() != times.len() || e.len() != times.len() {
            return Err(Error::Input(format!(
                "expected {} jump operators, got {} D and {} E",
                times.len(),
                d.len(),
                e.len()
            )));
        }
        for (k, (dk, ek)) in d.iter().zip(&e).enumerate() {
            check_finite(&format!("D_{}", k + 1), dk.as_slice())?;
            check_finite(&format!("E_{}", k + 1), ek.as_slice())?;
        }
        Ok(Self {
            times,
            d,
            e,
            horizon,
        })
    }

    /// Schedule without impulses.
    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), Vec::new(), horizon)
    }

    pub(crate) fn validate_dims(&self, n: usize) -> Result<()> {
        for (k, (dk, ek)) in self.d.iter().zip(&self.e).enumerate() {
            if dk.nrows() != n || dk.ncols() != n {
                return Err(Error::Input(format!(
                    "D_{} is {}x{}, expected {n}x{n}",
                    k + 1,
                    dk.nrows(),
                    dk.ncols()
                )));
            }
            if ek.nrows() != n {
                return Err(Error::Input(format!(
                    "E_{} has {} rows, expected {n}",
                    k + 1,
                    ek.nrows()
                )));
            }
        }
        Ok(())
    }

    /// Number of impulses `m`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn d(&self) -> &[DMatrix<f64>] {
        &self.d
    }

    pub fn e(&self) -> &[DMatrix<f64>] {
        &self.e
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `0, t_1, …, t_m, b`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.times.len() + 2);
        out.push(0.0);
        out.extend_from_slice(&self.times);
        out.push(self.horizon);
        out
    }

    /// Column counts of the `E_k`, i.e. the impulse-control dimensions.
    pub fn impulse_dims(&self) -> Vec<usize> {
        self.e.iter().map(|e| e.ncols()).collect()
    }
}

/// Distributed control as a function of time.
pub type ControlFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// A distributed control `u(·)` plus impulse controls `v_1, …, v_m`.
#[derive(Clone)]
pub struct ControlInput {
    pub u: ControlFn,
    pub v: Vec<DVector<f64>>,
}

impl std::fmt::Debug for ControlInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlInput")
            .field("v", &self.v)
            .finish_non_exhaustive()
    }
}

impl ControlInput {
    pub fn new(u: ControlFn, v: Vec<DVector<f64>>) -> Self {
        Self { u, v }
    }

    /// Zero control for a system.
    pub fn zero(system: &ImpulsiveSystem) -> Self {
        let p = system.control_dim();
        Self {
            u: Arc::new(move |_| DVector::zeros(p)),
            v: system
                .schedule()
                .impulse_dims()
                .into_iter()
                .map(DVector::zeros)
                .collect(),
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        (self.u)(t)
    }

    /// `u` sampled at every quadrature node of the system.
    pub fn at_nodes(&self, system: &ImpulsiveSystem) -> Result<Vec<DVector<f64>>> {
        let p = system.control_dim();
        system
            .grid()
            .nodes()
            .iter()
            .map(|&s| {
                let u = (self.u)(s);
                if u.len() != p {
                    return Err(Error::Input(format!(
                        "control has length {}, expected {p}",
                        u.len()
                    )));
                }
                Ok(u)
            })
            .collect()
    }

    pub(crate) fn check(&self, system: &ImpulsiveSystem) -> Result<()> {
        let dims = system.schedule().impulse_dims();
        if self.v.len() != dims.len() {
            return Err(Error::Input(format!(
                "expected {} impulse controls, got {}",
                dims.len(),
                self.v.len()
            )));
        }
        for (k, (v, d)) in self.v.iter().zip(dims).enumerate() {
            if v.len() != d {
                return Err(Error::Input(format!(
                    "v_{} has length {}, expected {d}",
                    k + 1,
                    v.len()
                )));
            }
            check_finite("impulse control", v.as_slice())?;
        }
        Ok(())
    }
}

/// Trajectory samples. `states[i]` is the value at `eval_times[i]`; at an
/// impulse time this is the left limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eval_times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Always `true`: values at impulse instants exclude the jump.
    pub left_limit_convention: bool,
    /// `x(t_k⁺)` for `k = 1..=m`.
    pub post_impulse: Vec<DVector<f64>>,
    /// `x(b)`.
    pub terminal: DVector<f64>,
}

/// `(I + D_k) x + E_k v_k`.
pub fn jump(
    x: &DVector<f64>,
    d: &DMatrix<f64>,
    e: &DMatrix<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = x.len();
    if d.nrows() != n || d.ncols() != n || e.nrows() != n || e.ncols() != v.len() {
        return Err(Error::Input(format!(
            "jump shapes inconsistent: x {n}, D {}x{}, E {}x{}, v {}",
            d.nrows(),
            d.ncols(),
            e.nrows(),
            e.ncols(),
            v.len()
        )));
    }
    Ok(x + d * x + e * v)
}

/// Source term of the mild-solution integral.
pub(crate) trait Forcing {
    /// Value at global quadrature node `n`.
    fn at_node(&self, n: usize) -> DVector<f64>;
    /// Value at an arbitrary time `s` inside panel `panel`.
    fn at(&self, panel: usize, s: f64) -> DVector<f64>;
}

/// Forcing `B u(s)` with `u` evaluated at the nodes once.
pub(crate) struct ControlForcing<'a> {
    input: &'a DMatrix<f64>,
    u: &'a ControlFn,
    nodal: Vec<DVector<f64>>,
}

impl<'a> ControlForcing<'a> {
    pub(crate) fn new(system: &'a ImpulsiveSystem, control: &'a ControlInput) -> Result<Self> {
        let nodal = control
            .at_nodes(system)?
            .into_iter()
            .map(|u| system.input() * u)
            .collect();
        Ok(Self {
            input: system.input(),
            u: &control.u,
            nodal,
        })
    }
}

impl Forcing for ControlForcing<'_> {
    fn at_node(&self, n: usize) -> DVector<f64> {
        self.nodal[n].clone()
    }

    fn at(&self, _panel: usize, s: f64) -> DVector<f64> {
        self.input * (self.u)(s)
    }
}

/// Forcing given only at the nodes, interpolated inside each panel.
pub(crate) struct NodalForcing<'a> {
    pub(crate) system: &'a ImpulsiveSystem,
    pub(crate) values: &'a [DVector<f64>],
}

impl Forcing for NodalForcing<'_> {
    fn at_node(&self, n: usize) -> DVector<f64> {
        self.values[n].clone()
    }

    fn at(&self, panel: usize, s: f64) -> DVector<f64> {
        interpolate_in_panel(self.system, self.values, panel, s)
    }
}

/// Sum of two forcings.
pub(crate) struct SumForcing<'a>(pub &'a dyn Forcing, pub &'a dyn Forcing);

impl Forcing for SumForcing<'_> {
    fn at_node(&self, n: usize) -> DVector<f64> {
        self.0.at_node(n) + self.1.at_node(n)
    }

    fn at(&self, panel: usize, s: f64) -> DVector<f64> {
        self.0.at(panel, s) + self.1.at(panel, s)
    }
}

/// Lagrange interpolation of node values inside one panel.
pub(crate) fn interpolate_in_panel(
    system: &ImpulsiveSystem,
    values: &[DVector<f64>],
    panel: usize,
    s: f64,
) -> DVector<f64> {
    let grid = system.grid();
    let weights = grid.interpolation_weights(panel, s);
    let mut out = DVector::zeros(values[0].len());
    for (w, node) in weights.iter().zip(grid.node_range(panel)) {
        out.axpy(*w, &values[node], 1.0);
    }
    out
}

/// Panel-boundary states produced by one forward march.
#[derive(Debug, Clone)]
pub(crate) struct March {
    /// State at the start of each panel, after any jump at that instant.
    pub starts: Vec<DVector<f64>>,
    /// State at the end of each panel, before any jump (left limit).
    pub ends: Vec<DVector<f64>>,
    pub post_impulse: Vec<DVector<f64>>,
}

impl March {
    pub fn terminal(&self) -> &DVector<f64> {
        self.ends.last().expect("grid has at least one panel")
    }
}

/// Marches `x' = A(t)x + F(t)` across all panels, applying the jumps.
pub(crate) fn march(
    system: &ImpulsiveSystem,
    x0: &DVector<f64>,
    impulses: &[DVector<f64>],
    forcing: &dyn Forcing,
) -> Result<March> {
    let n = system.state_dim();
    if x0.len() != n {
        return Err(Error::Input(format!(
            "initial state has length {}, expected {n}",
            x0.len()
        )));
    }
    check_finite("initial state", x0.as_slice())?;
    let grid = system.grid();
    let ops = system.ops();
    let sched = system.schedule();
    let weights = grid.weights();
    let mut starts = Vec::with_capacity(grid.panels().len());
    let mut ends = Vec::with_capacity(grid.panels().len());
    let mut post_impulse = Vec::with_capacity(sched.len());
    let mut next_impulse = 0;
    let mut x = x0.clone();
    for (j, panel) in grid.panels().iter().enumerate() {
        starts.push(x.clone());
        let mut y = ops.panel[j].apply(&x);
        for node in grid.node_range(j) {
            let f = forcing.at_node(node);
            if f.iter().all(|v| *v == 0.0) {
                continue;
            }
            y += ops.node_to_end[node].apply(&f) * weights[node];
        }
        ends.push(y.clone());
        x = y;
        if next_impulse < sched.len() && panel.end == sched.times()[next_impulse] {
            let k = next_impulse;
            x = jump(&x, &sched.d()[k], &sched.e()[k], &impulses[k])?;
            post_impulse.push(x.clone());
            next_impulse += 1;
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("mild solution produced non-finite values".into()));
    }
    Ok(March {
        starts,
        ends,
        post_impulse,
    })
}

/// Left-limit state at time `t` from a completed march.
pub(crate) fn state_at(
    system: &ImpulsiveSystem,
    march: &March,
    forcing: &dyn Forcing,
    t: f64,
) -> Result<DVector<f64>> {
    let grid = system.grid();
    let b = system.horizon();
    if !(0.0..=b).contains(&t) {
        return Err(Error::Domain(format!("evaluation time {t} outside [0, {b}]")));
    }
    if t == 0.0 {
        return Ok(march.starts[0].clone());
    }
    let j = grid.panel_of(t);
    let panel = grid.panels()[j];
    if t == panel.end {
        return Ok(march.ends[j].clone());
    }
    let family = system.family();
    let mut x = family.propagate(panel.start, t, &march.starts[j])?;
    for (s, w) in grid.rule().mapped(panel.start, t) {
        let f = forcing.at(j, s);
        x += family.propagate(s, t, &f)? * w;
    }
    Ok(x)
}

/// States at every quadrature node (left limits never arise: nodes are
/// interior to panels).
pub(crate) fn node_states(
    system: &ImpulsiveSystem,
    march: &March,
    forcing: &dyn Forcing,
) -> Result<Vec<DVector<f64>>> {
    let grid = system.grid();
    let mut out = Vec::with_capacity(grid.nodes().len());
    for (j, panel) in grid.panels().iter().enumerate() {
        for node in grid.node_range(j) {
            let t = grid.nodes()[node];
            let family = system.family();
            let mut x = family.propagate(panel.start, t, &march.starts[j])?;
            for (s, w) in grid.rule().mapped(panel.start, t) {
                let f = forcing.at(j, s);
                x += family.propagate(s, t, &f)? * w;
            }
            out.push(x);
        }
    }
    Ok(out)
}

fn check_eval_times(system: &ImpulsiveSystem, eval_times: &[f64]) -> Result<()> {
    let b = system.horizon();
    if let Some(t) = eval_times.iter().find(|t| !(0.0..=b).contains(*t)) {
        return Err(Error::Domain(format!("evaluation time {t} outside [0, {b}]")));
    }
    Ok(())
}

pub(crate) fn trajectory_from_march(
    system: &ImpulsiveSystem,
    march: &March,
    forcing: &dyn Forcing,
    eval_times: &[f64],
) -> Result<Trajectory> {
    check_eval_times(system, eval_times)?;
    let states = eval_times
        .iter()
        .map(|&t| state_at(system, march, forcing, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        eval_times: eval_times.to_vec(),
        states,
        left_limit_convention: true,
        post_impulse: march.post_impulse.clone(),
        terminal: march.terminal().clone(),
    })
}

/// Mild solution of the linear impulsive system under `control`.
///
/// On `(t_k, t_{k+1}]` the state is `U(t, t_k) x(t_k⁺) + ∫_{t_k}^t U(t, s) B u(s) ds`,
/// with `x(t_k⁺)` obtained by propagating and then applying the jump.
pub fn linear_mild_solution(
    system: &ImpulsiveSystem,
    control: &ControlInput,
    x0: &DVector<f64>,
    eval_times: &[f64],
) -> Result<Trajectory> {
    check_eval_times(system, eval_times)?;
    control.check(system)?;
    let forcing = ControlForcing::new(system, control)?;
    let march = march(system, x0, &control.v, &forcing)?;
    trajectory_from_march(system, &march, &forcing, eval_times)
}

/// `∫_{t_{i-1}}^{t_i} U(t_i, s) F(s) ds` on the shared quadrature grid.
pub fn propagated_integral(
    system: &ImpulsiveSystem,
    i: usize,
    forcing: &dyn Fn(f64) -> DVector<f64>,
) -> Result<DVector<f64>> {
    let m = system.schedule().len();
    if i == 0 || i > m + 1 {
        return Err(Error::Domain(format!("interval index {i} outside 1..={}", m + 1)));
    }
    let nodes = system.grid().nodes();
    let range = system.interval_panels(i);
    let mut values = vec![DVector::zeros(system.state_dim()); nodes.len()];
    for j in range {
        for node in system.grid().node_range(j) {
            values[node] = forcing(nodes[node]);
        }
    }
    Ok(system.propagated_integral_nodal(i, &values))
}

/// `x(t_k⁺)` from the explicit product formula:
///
/// ```text
/// ∏_{j=k}^{1} (I+D_j) U(t_j,t_{j-1}) x₀
///   + Σ_{i=1}^{k} ∏_{j=k}^{i+1} (I+D_j) U(t_j,t_{j-1}) (I+D_i) ∫_{t_{i-1}}^{t_i} U(t_i,s) F(s) ds
///   + Σ_{i=2}^{k} ∏_{j=k}^{i} (I+D_j) U(t_j,t_{j-1}) E_{i-1} v_{i-1}
///   + E_k v_k
/// ```
///
/// Products are written left to right from the highest index; empty
/// products are the identity. `k` is 1-based.
pub fn post_impulse_state_closed_form(
    system: &ImpulsiveSystem,
    control: &ControlInput,
    x0: &DVector<f64>,
    forcing: &dyn Fn(f64) -> DVector<f64>,
    k: usize,
) -> Result<DVector<f64>> {
    let sched = system.schedule();
    let m = sched.len();
    if k == 0 || k > m {
        return Err(Error::Domain(format!("impulse index {k} outside 1..={m}")));
    }
    control.check(system)?;
    let n = system.state_dim();
    let chain = system.chain();
    let ident = DMatrix::<f64>::identity(n, n);
    let stage = |j: usize| (&ident + &sched.d()[j - 1]) * &chain.interval[j - 1];
    // prod(hi, lo) = ∏_{j=hi}^{lo} (I+D_j) U(t_j, t_{j-1})
    let prod = |hi: usize, lo: usize| -> DMatrix<f64> {
        let mut acc = ident.clone();
        let mut j = hi;
        while j >= lo && j >= 1 {
            acc *= stage(j);
            j -= 1;
        }
        acc
    };

    let mut x = prod(k, 1) * x0;
    for i in 1..=k {
        let integral = propagated_integral(system, i, forcing)?;
        x += prod(k, i + 1) * ((&ident + &sched.d()[i - 1]) * integral);
    }
    for i in 2..=k {
        x += prod(k, i) * (&sched.e()[i - 2] * &control.v[i - 2]);
    }
    x += &sched.e()[k - 1] * &control.v[k - 1];
    Ok(x)
}

/// Uncontrolled terminal state `U(b, t_m) ∏_{j=m}^{1} (I+D_j) U(t_j,t_{j-1}) x₀`.
pub fn free_impulsive_response(system: &ImpulsiveSystem, x0: &DVector<f64>) -> Result<DVector<f64>> {
    let n = system.state_dim();
    if x0.len() != n {
        return Err(Error::Input(format!(
            "initial state has length {}, expected {n}",
            x0.len()
        )));
    }
    let sched = system.schedule();
    let chain = system.chain();
    let mut x = x0.clone();
    for k in 1..=sched.len() {
        x = &chain.interval[k - 1] * x;
        x += &sched.d()[k - 1] * x.clone();
    }
    Ok(&chain.interval[sched.len()] * x)
}
