//! The input operator `M`, its adjoint, the four controllability Gramians and
//! the resolvent-based controllability report.
//!
//! With the transfer chain `T_i`, `P_i = T_i (I + D_i)` and the interval
//! Gramians `G_i = ∫_{t_{i-1}}^{t_i} U(t_i,s) B Bᵀ U(t_i,s)ᵀ ds`:
//!
//! ```text
//! Γ  = ∫_{t_m}^b U(b,s) B Bᵀ U(b,s)ᵀ ds      Γ̃ = (T_m E_m)(T_m E_m)ᵀ
//! Θ  = Σ_{i=1}^{m} P_i G_i P_iᵀ              Θ̃ = Σ_{i=1}^{m-1} (T_i E_i)(T_i E_i)ᵀ
//! W  = Γ + Γ̃ + Θ + Θ̃ = M M*
//! ```

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::evolution::spectral_norm;
use crate::impulse_flow::ControlInput;
use crate::system::ImpulsiveSystem;

/// The four Gramian components and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianBundle {
    pub gamma_terminal: DMatrix<f64>,
    pub gamma_tilde: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub theta_tilde: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

impl GramianBundle {
    /// Builds a bundle around an explicit `W` with zero components; used for
    /// resolvent checks on hand-made matrices.
    pub fn from_w(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::Input("W must be square".into()));
        }
        let n = w.nrows();
        let min_eigenvalue = min_eigenvalue(&symmetrize(&w));
        Ok(Self {
            gamma_terminal: w.clone(),
            gamma_tilde: DMatrix::zeros(n, n),
            theta: DMatrix::zeros(n, n),
            theta_tilde: DMatrix::zeros(n, n),
            w,
            min_eigenvalue,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Eigenvalues of `W` in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(&self.w))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `∫_{t_{i-1}}^{t_i} U(t_i,s) B Bᵀ U(t_i,s)ᵀ ds`, accumulated panel by panel.
fn interval_gramian(system: &ImpulsiveSystem, i: usize) -> DMatrix<f64> {
    let n = system.state_dim();
    let grid = system.grid();
    let ops = system.ops();
    let weights = grid.weights();
    let mut acc = DMatrix::zeros(n, n);
    for j in system.interval_panels(i) {
        acc = ops.panel[j].sandwich(&acc);
        for node in grid.node_range(j) {
            let ub = ops.node_to_end[node].apply_matrix(system.input());
            acc += &ub * ub.transpose() * weights[node];
        }
    }
    symmetrize(&acc)
}

/// Assembles `Γ`, `Γ̃`, `Θ`, `Θ̃` and `W` on the system's quadrature grid.
pub fn assemble_gramians(system: &ImpulsiveSystem) -> Result<GramianBundle> {
    let n = system.state_dim();
    let m = system.schedule().len();
    let chain = system.chain();
    let e = system.schedule().e();
    let gamma_terminal = interval_gramian(system, m + 1);
    let mut theta = DMatrix::zeros(n, n);
    let mut theta_tilde = DMatrix::zeros(n, n);
    let mut gamma_tilde = DMatrix::zeros(n, n);
    for i in 1..=m {
        let g = interval_gramian(system, i);
        let p = &chain.p[i - 1];
        theta += p * g * p.transpose();
        let te = &chain.t[i - 1] * &e[i - 1];
        let outer = &te * te.transpose();
        if i == m {
            gamma_tilde = outer;
        } else {
            theta_tilde += outer;
        }
    }
    let theta = symmetrize(&theta);
    let w = &gamma_terminal + &gamma_tilde + &theta + &theta_tilde;
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("Gramian assembly produced non-finite entries".into()));
    }
    let min_eigenvalue = min_eigenvalue(&w);
    Ok(GramianBundle {
        gamma_terminal,
        gamma_tilde,
        theta,
        theta_tilde,
        w,
        min_eigenvalue,
    })
}

/// `M` applied to a control given by its values at the quadrature nodes.
pub fn apply_m_nodal(
    system: &ImpulsiveSystem,
    u_nodes: &[DVector<f64>],
    v: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let grid = system.grid();
    if u_nodes.len() != grid.nodes().len() {
        return Err(Error::Input(format!(
            "expected {} nodal control values, got {}",
            grid.nodes().len(),
            u_nodes.len()
        )));
    }
    let p = system.control_dim();
    if let Some(bad) = u_nodes.iter().find(|u| u.len() != p) {
        return Err(Error::Input(format!(
            "control has length {}, expected {p}",
            bad.len()
        )));
    }
    let b = system.input();
    let forcing: Vec<DVector<f64>> = u_nodes
        .iter()
        .map(|u| {
            if u.iter().all(|c| *c == 0.0) {
                DVector::zeros(system.state_dim())
            } else {
                b * u
            }
        })
        .collect();
    apply_m_forcing(system, &forcing, v)
}

/// `M` with the distributed input `B u` replaced by arbitrary node forcing.
pub(crate) fn apply_m_forcing(
    system: &ImpulsiveSystem,
    forcing: &[DVector<f64>],
    v: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let m = system.schedule().len();
    if v.len() != m {
        return Err(Error::Input(format!("expected {m} impulse controls, got {}", v.len())));
    }
    let chain = system.chain();
    let e = system.schedule().e();
    let mut out = system.propagated_integral_nodal(m + 1, forcing);
    for i in 1..=m {
        out += &chain.p[i - 1] * system.propagated_integral_nodal(i, forcing);
        if v[i - 1].len() != e[i - 1].ncols() {
            return Err(Error::Input(format!(
                "v_{i} has length {}, expected {}",
                v[i - 1].len(),
                e[i - 1].ncols()
            )));
        }
        out += &chain.t[i - 1] * (&e[i - 1] * &v[i - 1]);
    }
    Ok(out)
}

/// `M(u, {v_k})`: the terminal state reached from `x₀ = 0`.
pub fn apply_m(system: &ImpulsiveSystem, control: &ControlInput) -> Result<DVector<f64>> {
    control.check(system)?;
    apply_m_nodal(system, &control.at_nodes(system)?, &control.v)
}

/// Costate anchors of `M* φ`.
///
/// On `(t_{i-1}, t_i]` the distributed part is `Bᵀ U(t_i, t)ᵀ c_i` with
/// `c_i = P_iᵀ φ` (and `c_{m+1} = φ`, anchored at `b`); the impulse part is
/// `E_iᵀ T_iᵀ φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    /// `(t_i, c_i)` for `i = 1..=m+1`.
    pub anchors: Vec<(f64, DVector<f64>)>,
    /// `E_iᵀ ψ(t_i⁺)` for `i = 1..=m`.
    pub impulse: Vec<DVector<f64>>,
}

pub fn adjoint_state(system: &ImpulsiveSystem, phi: &DVector<f64>) -> Result<AdjointState> {
    let n = system.state_dim();
    if phi.len() != n {
        return Err(Error::Input(format!(
            "costate has length {}, expected {n}",
            phi.len()
        )));
    }
    let m = system.schedule().len();
    let chain = system.chain();
    let e = system.schedule().e();
    let mut anchors = Vec::with_capacity(m + 1);
    let mut impulse = Vec::with_capacity(m);
    for i in 1..=m {
        anchors.push((system.interval_end(i), chain.p[i - 1].tr_mul(phi)));
        impulse.push(e[i - 1].tr_mul(&chain.t[i - 1].tr_mul(phi)));
    }
    anchors.push((system.horizon(), phi.clone()));
    Ok(AdjointState { anchors, impulse })
}

impl AdjointState {
    /// `Bᵀ ψ(t)`.
    pub fn distributed(&self, system: &ImpulsiveSystem, t: f64) -> Result<DVector<f64>> {
        let b = system.horizon();
        if !(0.0..=b).contains(&t) {
            return Err(Error::Domain(format!("sample time {t} outside [0, {b}]")));
        }
        let i = system.interval_of(t);
        let (ti, c) = &self.anchors[i - 1];
        let psi = system.family().propagate_adjoint(t, *ti, c)?;
        Ok(system.input().tr_mul(&psi))
    }

    /// `Bᵀ ψ` at every quadrature node, by backward recursion over panels.
    pub fn distributed_at_nodes(&self, system: &ImpulsiveSystem) -> Vec<DVector<f64>> {
        let grid = system.grid();
        let ops = system.ops();
        let m = system.schedule().len();
        let mut out = vec![DVector::zeros(system.control_dim()); grid.nodes().len()];
        for i in 1..=m + 1 {
            let mut psi = self.anchors[i - 1].1.clone();
            for j in system.interval_panels(i).rev() {
                for node in grid.node_range(j) {
                    let at_node = ops.node_to_end[node].apply_transpose(&psi);
                    out[node] = system.input().tr_mul(&at_node);
                }
                psi = ops.panel[j].apply_transpose(&psi);
            }
        }
        out
    }
}

/// `M* φ` sampled: `Bᵀ ψ(t)` at each sample time and the impulse components.
pub fn apply_m_star(
    system: &ImpulsiveSystem,
    phi: &DVector<f64>,
    sample_times: &[f64],
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let adj = adjoint_state(system, phi)?;
    let samples = sample_times
        .iter()
        .map(|&t| adj.distributed(system, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, adj.impulse))
}

/// `M` as an explicit matrix on the discretized control space.
///
/// Columns are, in order, node-indicator controls `e_c / √w_n` for every
/// node `n` and control component `c`, followed by the unit vectors of each
/// impulse slot. With this basis the Euclidean product of coefficients equals
/// the quadrature `L²` pairing, so `M Mᵀ` approximates `W`.
pub fn input_operator_matrix(system: &ImpulsiveSystem) -> Result<DMatrix<f64>> {
    let n = system.state_dim();
    let p = system.control_dim();
    let grid = system.grid();
    let ops = system.ops();
    let chain = system.chain();
    let sched = system.schedule();
    let m = sched.len();
    let nodes = grid.nodes().len();
    let dims = sched.impulse_dims();
    let total = nodes * p + dims.iter().sum::<usize>();
    let mut out = DMatrix::zeros(n, total);
    for i in 1..=m + 1 {
        let lead = if i <= m {
            chain.p[i - 1].clone()
        } else {
            DMatrix::identity(n, n)
        };
        // lead · U(t_i, end_j), swept backward over the interval's panels.
        let mut reach = lead;
        for j in system.interval_panels(i).rev() {
            for node in grid.node_range(j) {
                let scale = grid.weights()[node].sqrt();
                let cols = &reach * ops.node_to_end[node].apply_matrix(system.input()) * scale;
                out.columns_mut(node * p, p).copy_from(&cols);
            }
            reach = &reach * ops.panel[j].to_matrix();
        }
    }
    let mut col = nodes * p;
    for (k, &d) in dims.iter().enumerate() {
        let cols = &chain.t[k] * &sched.e()[k];
        out.columns_mut(col, d).copy_from(&cols);
        col += d;
    }
    Ok(out)
}

/// Numerical rank with relative singular-value threshold `rel_tol`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * max).count()
}

/// Relative threshold on `min_eig(W) / ‖W‖` for strict positivity.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Relative singular-value threshold matching [`POSITIVITY_TOL`] on `M`.
pub const RANK_TOL: f64 = 1e-5;

/// Relative symmetry tolerance for `W`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// One row of the resolvent table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventRow {
    pub lambda: f64,
    /// `‖λ (λI + W)⁻¹‖`.
    pub norm: f64,
}

/// Strict-positivity certificate and resolvent norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityReport {
    pub min_eigenvalue: f64,
    pub w_norm: f64,
    pub strictly_positive: bool,
    pub rows: Vec<ResolventRow>,
}

impl ControllabilityReport {
    /// `true` when the norm column strictly decreases along the λ list.
    pub fn norms_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].norm < w[0].norm)
    }
}

/// `‖λ(λI + W)⁻¹‖` for each λ plus the strict-positivity flag
/// `min_eig(W) > 1e-10 ‖W‖`.
pub fn controllability_report(
    bundle: &GramianBundle,
    lambdas: &[f64],
) -> Result<ControllabilityReport> {
    let w = &bundle.w;
    let w_norm = spectral_norm(w);
    let asym = (w - w.transpose()).abs().max();
    if asym > SYMMETRY_TOL * w_norm.max(1.0) {
        return Err(Error::Numeric(format!(
            "W is not symmetric: max |W - Wᵀ| = {asym:.3e}"
        )));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::Domain(format!("λ must be positive, got {l}")));
    }
    let ev = SymmetricEigen::new(symmetrize(w)).eigenvalues;
    let min_eigenvalue = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let min_eigenvalue = if ev.is_empty() { 0.0 } else { min_eigenvalue };
    let strictly_positive = w_norm > 0.0 && min_eigenvalue > POSITIVITY_TOL * w_norm;
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            // W is symmetric, so the resolvent norm is attained at the
            // smallest nonnegative eigenvalue.
            let norm = ev
                .iter()
                .map(|mu| lambda / (lambda + mu.max(0.0)))
                .fold(0.0, f64::max);
            ResolventRow { lambda, norm }
        })
        .collect();
    Ok(ControllabilityReport {
        min_eigenvalue,
        w_norm,
        strictly_positive,
        rows,
    })
}

/// `‖λ(λI + W)⁻¹‖` computed by an explicit solve and an SVD; an independent
/// route to the eigenvalue formula used in [`controllability_report`].
pub fn resolvent_norm_by_solve(w: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let n = w.nrows();
    let shifted = w + DMatrix::identity(n, n) * lambda;
    let inv = shifted
        .try_inverse()
        .ok_or_else(|| Error::Numeric("λI + W is singular".into()))?;
    Ok(spectral_norm(&(inv * lambda)))
}

/// Synthesized distributed control as a closure over the adjoint anchors.
pub(crate) fn control_from_adjoint(system: &ImpulsiveSystem, adj: AdjointState) -> ControlInput {
    let sys = system.clone();
    let v = adj.impulse.clone();
    let adj = Arc::new(adj);
    let p = system.control_dim();
    ControlInput::new(
        Arc::new(move |t| {
            adj.distributed(&sys, t)
                .unwrap_or_else(|_| DVector::from_element(p, f64::NAN))
        }),
        v,
    )
}
