//! Semilinear forcing `f(t, x) + ∫₀ᵗ q(t−s) ξ(s, x(s)) ds`, the coupled
//! fixed-point iteration for the controlled semilinear system and the
//! existence constants of the associated Krasnoselskii argument.
//!
//! During the iteration a trajectory is stored as its values at every
//! quadrature node. Panels never straddle an impulse time, so in-panel
//! interpolation never crosses a jump.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::control::{check_lambda_list, regularized_solve, synthesize_control};
use crate::error::{Error, Result};
use crate::evolution::{spectral_norm, ScalarFn};
use crate::gramian::{apply_m_forcing, GramianBundle};
use crate::impulse_flow::{
    free_impulsive_response, march, node_states, ControlForcing, ControlInput, Forcing, March,
    NodalForcing, SumForcing,
};
use crate::system::ImpulsiveSystem;

/// State-dependent term `(t, x) ↦ ℝⁿ`.
pub type StateFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Nonlinear terms and their declared constants.
#[derive(Clone)]
pub struct SemilinearTerms {
    pub f: StateFn,
    pub xi: StateFn,
    /// Convolution kernel `q`.
    pub q: ScalarFn,
    pub lipschitz_f: f64,
    pub lipschitz_xi: f64,
    pub bound_f: f64,
    pub bound_xi: f64,
    /// Upper bound of `∫₀ᵗ |q(t−s)| ds` over `t ∈ [0, b]`.
    pub q_star: f64,
}

impl std::fmt::Debug for SemilinearTerms {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemilinearTerms")
            .field("lipschitz_f", &self.lipschitz_f)
            .field("lipschitz_xi", &self.lipschitz_xi)
            .field("bound_f", &self.bound_f)
            .field("bound_xi", &self.bound_xi)
            .field("q_star", &self.q_star)
            .finish_non_exhaustive()
    }
}

impl SemilinearTerms {
    /// `f ≡ 0`, `ξ ≡ 0`, `q ≡ 0`.
    pub fn zero(n: usize) -> Self {
        Self {
            f: Arc::new(move |_, _| DVector::zeros(n)),
            xi: Arc::new(move |_, _| DVector::zeros(n)),
            q: Arc::new(|_| 0.0),
            lipschitz_f: 0.0,
            lipschitz_xi: 0.0,
            bound_f: 0.0,
            bound_xi: 0.0,
            q_star: 0.0,
        }
    }

    /// `L_f + q* L_ξ`.
    pub fn combined_lipschitz(&self) -> f64 {
        self.lipschitz_f + self.q_star * self.lipschitz_xi
    }

    /// `C_f + q* C_ξ`.
    pub fn combined_bound(&self) -> f64 {
        self.bound_f + self.q_star * self.bound_xi
    }
}

/// Largest sampled difference quotients and norms of `f` and `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSample {
    pub quotient_f: f64,
    pub quotient_xi: f64,
    pub norm_f: f64,
    pub norm_xi: f64,
}

/// Samples `draws` random pairs `(x, y)` in the ball of `radius` and times in
/// `[0, horizon]`.
pub fn sample_lipschitz(
    terms: &SemilinearTerms,
    dim: usize,
    horizon: f64,
    radius: f64,
    draws: usize,
    seed: u64,
) -> LipschitzSample {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let point = |rng: &mut SplitMix64| {
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        let scale = if norm > 0.0 { radius * rng.random_range(0.0..1.0) / norm } else { 0.0 };
        v * scale
    };
    let mut out = LipschitzSample {
        quotient_f: 0.0,
        quotient_xi: 0.0,
        norm_f: 0.0,
        norm_xi: 0.0,
    };
    for _ in 0..draws {
        let t = rng.random_range(0.0..=horizon);
        let x = point(&mut rng);
        let y = point(&mut rng);
        let dist = (&x - &y).norm();
        let (fx, fy) = ((terms.f)(t, &x), (terms.f)(t, &y));
        let (gx, gy) = ((terms.xi)(t, &x), (terms.xi)(t, &y));
        if dist > 0.0 {
            out.quotient_f = out.quotient_f.max((&fx - &fy).norm() / dist);
            out.quotient_xi = out.quotient_xi.max((&gx - &gy).norm() / dist);
        }
        out.norm_f = out.norm_f.max(fx.norm()).max(fy.norm());
        out.norm_xi = out.norm_xi.max(gx.norm()).max(gy.norm());
    }
    out
}

/// Trajectory values at every quadrature node of a system's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrajectory {
    pub values: Vec<DVector<f64>>,
}

fn terms_or_zero(system: &ImpulsiveSystem) -> SemilinearTerms {
    system
        .semilinear()
        .cloned()
        .unwrap_or_else(|| SemilinearTerms::zero(system.state_dim()))
}

/// `∫₀ᵗ q(t−s) ξ(s, x(s)) ds` from node values of `x`.
///
/// Whole panels use their Gauss nodes; the panel containing `t` uses a Gauss
/// rule on `[start, t]` with `ξ` interpolated from that panel's nodes.
pub fn convolution_term(
    system: &ImpulsiveSystem,
    terms: &SemilinearTerms,
    traj: &NodeTrajectory,
    t: f64,
) -> Result<DVector<f64>> {
    let b = system.horizon();
    if !(0.0..=b).contains(&t) {
        return Err(Error::Domain(format!("convolution time {t} outside [0, {b}]")));
    }
    let grid = system.grid();
    if traj.values.len() != grid.nodes().len() {
        return Err(Error::Input("trajectory does not match the quadrature grid".into()));
    }
    let xi: Vec<DVector<f64>> = grid
        .nodes()
        .iter()
        .zip(&traj.values)
        .map(|(&s, x)| (terms.xi)(s, x))
        .collect();
    Ok(convolution_from_xi(system, terms, &xi, t))
}

fn convolution_from_xi(
    system: &ImpulsiveSystem,
    terms: &SemilinearTerms,
    xi: &[DVector<f64>],
    t: f64,
) -> DVector<f64> {
    let grid = system.grid();
    let mut acc = DVector::zeros(system.state_dim());
    if t == 0.0 {
        return acc;
    }
    let last = grid.panel_of(t);
    for j in 0..last {
        for node in grid.node_range(j) {
            acc.axpy(grid.weights()[node] * (terms.q)(t - grid.nodes()[node]), &xi[node], 1.0);
        }
    }
    let panel = grid.panels()[last];
    if t == panel.end {
        for node in grid.node_range(last) {
            acc.axpy(grid.weights()[node] * (terms.q)(t - grid.nodes()[node]), &xi[node], 1.0);
        }
    } else {
        for (s, w) in grid.rule().mapped(panel.start, t) {
            let weights = grid.interpolation_weights(last, s);
            let qs = (terms.q)(t - s);
            for (l, node) in weights.iter().zip(grid.node_range(last)) {
                acc.axpy(w * qs * l, &xi[node], 1.0);
            }
        }
    }
    acc
}

/// `f(s_n, x_n) + ∫₀^{s_n} q(s_n − τ) ξ(τ, x(τ)) dτ` at every node.
pub fn nonlinear_forcing(
    system: &ImpulsiveSystem,
    terms: &SemilinearTerms,
    traj: &NodeTrajectory,
) -> Result<Vec<DVector<f64>>> {
    let grid = system.grid();
    let nodes = grid.nodes();
    if traj.values.len() != nodes.len() {
        return Err(Error::Input("trajectory does not match the quadrature grid".into()));
    }
    let xi: Vec<DVector<f64>> = nodes
        .iter()
        .zip(&traj.values)
        .map(|(&s, x)| (terms.xi)(s, x))
        .collect();
    let out: Vec<DVector<f64>> = nodes
        .iter()
        .zip(&traj.values)
        .map(|(&s, x)| (terms.f)(s, x) + convolution_from_xi(system, terms, &xi, s))
        .collect();
    if out.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::Numeric("nonlinear forcing produced non-finite values".into()));
    }
    Ok(out)
}

/// `g(x) = h − (free response) − ∫_{t_m}^b U(b,s) N(s) ds
///         − Σ_i U(b,t_m) ∏_{j=m}^{i+1} (I+D_j) U(t_j,t_{j-1}) (I+D_i) ∫_{t_{i-1}}^{t_i} U(t_i,s) N(s) ds`
/// with `N = f + conv`.
pub fn g_functional(
    system: &ImpulsiveSystem,
    traj: &NodeTrajectory,
    x0: &DVector<f64>,
    h: &DVector<f64>,
) -> Result<DVector<f64>> {
    let terms = terms_or_zero(system);
    let forcing = nonlinear_forcing(system, &terms, traj)?;
    g_from_forcing(system, &forcing, x0, h)
}

fn g_from_forcing(
    system: &ImpulsiveSystem,
    forcing: &[DVector<f64>],
    x0: &DVector<f64>,
    h: &DVector<f64>,
) -> Result<DVector<f64>> {
    if h.len() != system.state_dim() {
        return Err(Error::Input(format!(
            "target has length {}, expected {}",
            h.len(),
            system.state_dim()
        )));
    }
    let zero_v: Vec<DVector<f64>> = system
        .schedule()
        .impulse_dims()
        .into_iter()
        .map(DVector::zeros)
        .collect();
    let pushed = apply_m_forcing(system, forcing, &zero_v)?;
    Ok(h - free_impulsive_response(system, x0)? - pushed)
}

/// Iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop when the sup-norm update over node values is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor `ω ∈ (0, 1]`; the update is `ω x_new + (1−ω) x_old`.
    pub relaxation: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            relaxation: 1.0,
        }
    }
}

/// Converged semilinear trajectory and control.
#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub lambda: f64,
    pub nodes: NodeTrajectory,
    pub control: ControlInput,
    pub phi_hat: DVector<f64>,
    /// `x(t_k⁺)` for `k = 1..=m`.
    pub post_impulse: Vec<DVector<f64>>,
    /// `x_λ(b)`.
    pub terminal: DVector<f64>,
    pub iterations: usize,
    /// Sup-norm update at each iteration.
    pub residual_history: Vec<f64>,
    /// Sup-norm gap between the returned node values and the mild-solution
    /// integral equation re-evaluated on them with the returned control.
    pub integral_residual: f64,
}

impl FixedPointSolution {
    /// Ratios of successive updates.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.residual_history
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

struct Step {
    nodes: Vec<DVector<f64>>,
    march: March,
    control: ControlInput,
    phi: DVector<f64>,
}

/// One Picard map: given node forcing `N`, compute `g`, `φ̂`, the control and
/// the new node trajectory.
fn picard_step(
    system: &ImpulsiveSystem,
    w: &DMatrix<f64>,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    lambda: f64,
    forcing: &[DVector<f64>],
) -> Result<Step> {
    let g = g_from_forcing(system, forcing, x0, h)?;
    let phi = regularized_solve(w, lambda, &g)?;
    let control = synthesize_control(system, &phi)?;
    let (march_out, nodes) = forward(system, x0, &control, forcing)?;
    Ok(Step {
        nodes,
        march: march_out,
        control,
        phi,
    })
}

fn forward(
    system: &ImpulsiveSystem,
    x0: &DVector<f64>,
    control: &ControlInput,
    forcing: &[DVector<f64>],
) -> Result<(March, Vec<DVector<f64>>)> {
    let cf = ControlForcing::new(system, control)?;
    let nf = NodalForcing {
        system,
        values: forcing,
    };
    let total = SumForcing(&cf, &nf);
    let m = march(system, x0, &control.v, &total as &dyn Forcing)?;
    let nodes = node_states(system, &m, &total)?;
    Ok((m, nodes))
}

fn sup_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Picard iteration for the controlled semilinear system.
///
/// Starts from the linear trajectory (`f = ξ = 0`). Each iteration evaluates
/// `g(x⁽ⁿ⁾)`, solves `(λI + W) φ̂ = g`, synthesizes `M* φ̂` and rebuilds the
/// mild solution with forcing `B u + f + conv` evaluated on `x⁽ⁿ⁾`.
pub fn solve_fixed_point(
    system: &ImpulsiveSystem,
    bundle: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    lambda: f64,
    opts: SolveOptions,
) -> Result<FixedPointSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if !(opts.relaxation > 0.0 && opts.relaxation <= 1.0) {
        return Err(Error::Domain("relaxation must lie in (0, 1]".into()));
    }
    let terms = terms_or_zero(system);
    let zero: Vec<DVector<f64>> = vec![DVector::zeros(system.state_dim()); system.grid().nodes().len()];
    let mut current = picard_step(system, &bundle.w, x0, h, lambda, &zero)?;
    let mut history = Vec::new();
    for iter in 1..=opts.max_iter {
        let traj = NodeTrajectory {
            values: current.nodes.clone(),
        };
        let forcing = nonlinear_forcing(system, &terms, &traj)?;
        let next = picard_step(system, &bundle.w, x0, h, lambda, &forcing)?;
        let diff = sup_distance(&next.nodes, &current.nodes);
        history.push(diff);
        if !diff.is_finite() {
            return Err(Error::Numeric("fixed-point iteration diverged".into()));
        }
        if diff <= opts.tol {
            let final_traj = NodeTrajectory {
                values: next.nodes.clone(),
            };
            let final_forcing = nonlinear_forcing(system, &terms, &final_traj)?;
            let (_, check) = forward(system, x0, &next.control, &final_forcing)?;
            let integral_residual = sup_distance(&check, &next.nodes);
            return Ok(FixedPointSolution {
                lambda,
                post_impulse: next.march.post_impulse.clone(),
                terminal: next.march.terminal().clone(),
                nodes: final_traj,
                control: next.control,
                phi_hat: next.phi,
                iterations: iter,
                residual_history: history,
                integral_residual,
            });
        }
        current = if opts.relaxation < 1.0 {
            let w = opts.relaxation;
            let blended = next
                .nodes
                .iter()
                .zip(&current.nodes)
                .map(|(a, b)| a * w + b * (1.0 - w))
                .collect();
            Step {
                nodes: blended,
                ..next
            }
        } else {
            next
        };
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Existence and uniqueness constants. Constants that depend on the interval
/// index `k` are evaluated for every `k = 1..=m` and the largest is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceConstants {
    pub m_bound: f64,
    pub input_norm: f64,
    pub lambda: f64,
    pub lipschitz_f: f64,
    pub lipschitz_xi: f64,
    pub bound_f: f64,
    pub bound_xi: f64,
    pub q_star: f64,
    pub script_n: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2_bound: f64,
    /// `C_i` for `k = m`.
    pub c_list: Vec<f64>,
    pub n_sum: f64,
    pub script_l: f64,
    /// Radius of the invariant ball; `None` when `𝒩 ≥ 1` or `𝒦₁ ≥ 1`.
    pub r0: Option<f64>,
    pub k_1: f64,
    pub k_2: f64,
    pub condition_c1: bool,
    pub condition_c2: bool,
    pub uniqueness: bool,
}

impl ExistenceConstants {
    /// Key/value rows for reports.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("M".to_string(), self.m_bound),
            ("M_B".to_string(), self.input_norm),
            ("lambda".to_string(), self.lambda),
            ("L_f".to_string(), self.lipschitz_f),
            ("L_xi".to_string(), self.lipschitz_xi),
            ("C_f".to_string(), self.bound_f),
            ("C_xi".to_string(), self.bound_xi),
            ("q_star".to_string(), self.q_star),
            ("script_N".to_string(), self.script_n),
            ("K0".to_string(), self.k0),
            ("K1".to_string(), self.k1),
            ("K2".to_string(), self.k2_bound),
        ];
        for (i, c) in self.c_list.iter().enumerate() {
            rows.push((format!("C_{}", i + 1), *c));
        }
        rows.extend([
            ("N".to_string(), self.n_sum),
            ("script_L".to_string(), self.script_l),
            ("r0".to_string(), self.r0.unwrap_or(f64::NAN)),
            ("k1".to_string(), self.k_1),
            ("k2".to_string(), self.k_2),
            ("condition_C1".to_string(), f64::from(u8::from(self.condition_c1))),
            ("condition_C2".to_string(), f64::from(u8::from(self.condition_c2))),
            ("uniqueness".to_string(), f64::from(u8::from(self.uniqueness))),
        ]);
        rows
    }
}

/// Evaluates the existence constants literally from operator norms.
///
/// With `U_j = U(t_j, t_{j-1})`, `C = C_f + q* C_ξ`, `L = L_f + q* L_ξ` and
/// `nested(k) = ∏_{i=k}^{m} ‖U_i‖ · ‖E_kᵀ (I+D_kᵀ) ⋯ (I+D_mᵀ)‖`:
///
/// ```text
/// 𝒩   = M + M³ M_B² b / λ
/// C_i = ∏_{j=i+1}^{k} (1+‖D_j‖) ‖U_j‖ · (1+‖D_i‖),   N = Σ_{i=1}^{k} C_i
/// 𝒦₀  = M²/λ Σ_{i=2}^{k} ∏_{j=i}^{k} (1+‖D_j‖) ‖U_j‖ ‖E_{i-1}‖ nested(i−1)
/// 𝒦₁  = M^{k+1} ∏_{j=1}^{k} (1+‖D_j‖) (1 + M² M_B² b/λ (m M^{m−k} + 1)(M N + 1) + 𝒦₀ + M²/λ ‖E_k‖ nested(k))
/// 𝒦₂  = (M² M_B² b/λ (M N + 1)(m M^{m−k} + 1) + 𝒦₀ + M²/λ ‖E_k‖ nested(k)) (‖h‖ + M C b + M² N C b) + M b C (M N + 1)
/// ℒ   = M^{k+1} ∏_{j=1}^{k} (1+‖D_j‖) + M² N b L
/// k₁  = M b L,   k₂ = (M² N b + M b) L
/// ```
pub fn check_existence_constants(
    system: &ImpulsiveSystem,
    lambda: f64,
    h_norm: f64,
) -> Result<ExistenceConstants> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
    }
    let terms = terms_or_zero(system);
    let sched = system.schedule();
    let chain = system.chain();
    let m = sched.len();
    let big_m = system.family().norm_bound();
    let mb = spectral_norm(system.input());
    let b = system.horizon();
    let n = system.state_dim();
    let d_norm: Vec<f64> = sched.d().iter().map(spectral_norm).collect();
    let e_norm: Vec<f64> = sched.e().iter().map(spectral_norm).collect();
    let u_norm: Vec<f64> = chain.interval.iter().map(spectral_norm).collect();
    let lip = terms.combined_lipschitz();
    let cap = terms.combined_bound();
    let ctrl = big_m * big_m * mb * mb * b / lambda;

    // 1-based helpers.
    let stage = |j: usize| (1.0 + d_norm[j - 1]) * u_norm[j - 1];
    let nested = |k: usize| -> f64 {
        let mut mat = sched.e()[k - 1].transpose();
        let mut unorms = 1.0;
        for i in k..=m {
            mat *= DMatrix::identity(n, n) + sched.d()[i - 1].transpose();
            unorms *= u_norm[i - 1];
        }
        unorms * spectral_norm(&mat)
    };
    let c_list_for = |k: usize| -> Vec<f64> {
        (1..=k)
            .map(|i| ((i + 1)..=k).map(stage).product::<f64>() * (1.0 + d_norm[i - 1]))
            .collect()
    };

    let script_n = big_m + big_m.powi(3) * mb * mb * b / lambda;
    let mut k0 = 0.0f64;
    let mut k1 = 0.0f64;
    let mut k2_bound = 0.0f64;
    let mut script_l = 0.0f64;
    let mut n_sum = 0.0f64;
    let mut k_2 = 0.0f64;
    let ks: Vec<usize> = if m == 0 { vec![0] } else { (1..=m).collect() };
    for &k in &ks {
        let prod_d: f64 = (1..=k).map(|j| 1.0 + d_norm[j - 1]).product();
        let nk = c_list_for(k).iter().fold(0.0, |acc, x| acc + x);
        let k0_k = big_m * big_m / lambda
            * (2..=k)
                .map(|i| {
                    (i..=k).map(stage).product::<f64>() * e_norm[i - 2] * nested(i - 1)
                })
                .fold(0.0, |acc, x| acc + x);
        let ek_term = if k >= 1 {
            big_m * big_m / lambda * e_norm[k - 1] * nested(k)
        } else {
            0.0
        };
        let mpow = m as f64 * big_m.powi(m as i32 - k as i32) + 1.0;
        let lead = big_m.powi(k as i32 + 1) * prod_d;
        let k1_k = lead * (1.0 + ctrl * mpow * (big_m * nk + 1.0) + k0_k + ek_term);
        let k2_k = (ctrl * (big_m * nk + 1.0) * mpow + k0_k + ek_term)
            * (h_norm + big_m * cap * b + big_m * big_m * nk * cap * b)
            + big_m * b * cap * (big_m * nk + 1.0);
        let l_k = lead + big_m * big_m * nk * b * lip;
        k0 = k0.max(k0_k);
        k1 = k1.max(k1_k);
        k2_bound = k2_bound.max(k2_k);
        script_l = script_l.max(l_k);
        n_sum = n_sum.max(nk);
        k_2 = k_2.max((big_m * big_m * nk * b + big_m * b) * lip);
    }
    let k_1 = big_m * b * lip;
    let mbc = big_m * b * terms.bound_f + big_m * b * terms.bound_xi * terms.q_star;
    let r0 = if script_n < 1.0 && k1 < 1.0 {
        let first = (ctrl * h_norm + ctrl * mbc + mbc) / (1.0 - script_n);
        Some(first.max(k2_bound / (1.0 - k1)))
    } else {
        None
    };
    Ok(ExistenceConstants {
        m_bound: big_m,
        input_norm: mb,
        lambda,
        lipschitz_f: terms.lipschitz_f,
        lipschitz_xi: terms.lipschitz_xi,
        bound_f: terms.bound_f,
        bound_xi: terms.bound_xi,
        q_star: terms.q_star,
        script_n,
        k0,
        k1,
        k2_bound,
        c_list: c_list_for(m),
        n_sum,
        script_l,
        r0,
        k_1,
        k_2,
        condition_c1: script_n.max(k1) < 1.0,
        condition_c2: big_m.max(script_l) < 1.0,
        uniqueness: k_1.max(k_2) < 1.0,
    })
}

/// Per-λ outcome of the semilinear controllability check.
#[derive(Debug, Clone, PartialEq)]
pub struct SemilinearRow {
    pub lambda: f64,
    pub terminal_error: f64,
    /// `λ ‖φ̂_λ‖`.
    pub lambda_phi_norm: f64,
    /// `‖(x_λ(b) − h) + λ φ̂_λ‖`.
    pub identity_residual: f64,
    /// `‖(x_λ(b) − h) − λ φ̂_λ‖`.
    pub literal_sign_residual: f64,
    pub iterations: usize,
    pub integral_residual: f64,
}

/// Runs [`solve_fixed_point`] for each λ; failures are kept per row.
pub fn verify_semilinear_controllability(
    system: &ImpulsiveSystem,
    bundle: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    lambdas: &[f64],
    opts: SolveOptions,
) -> Result<Vec<(f64, Result<SemilinearRow>)>> {
    check_lambda_list(lambdas)?;
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let row = solve_fixed_point(system, bundle, x0, h, lambda, opts).map(|sol| {
                let err = &sol.terminal - h;
                let lp = &sol.phi_hat * lambda;
                SemilinearRow {
                    lambda,
                    terminal_error: err.norm(),
                    lambda_phi_norm: lp.norm(),
                    identity_residual: (&err + &lp).norm(),
                    literal_sign_residual: (&err - &lp).norm(),
                    iterations: sol.iterations,
                    integral_residual: sol.integral_residual,
                }
            });
            (lambda, row)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::lambda_sweep;
    use crate::gramian::assemble_gramians;
    use crate::test_support::{scalar_system, scalar_system_with};
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn one(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn with_terms(sys: ImpulsiveSystem, f: StateFn, xi: StateFn, q: ScalarFn) -> ImpulsiveSystem {
        sys.with_semilinear(SemilinearTerms {
            f,
            xi,
            q,
            lipschitz_f: 0.0,
            lipschitz_xi: 0.0,
            bound_f: 0.0,
            bound_xi: 0.0,
            q_star: 0.0,
        })
    }

    fn node_traj(sys: &ImpulsiveSystem, v: f64) -> NodeTrajectory {
        NodeTrajectory {
            values: vec![one(v); sys.grid().nodes().len()],
        }
    }

    #[test]
    fn convolution_closed_forms() {
        let sys = scalar_system();
        let ones: StateFn = Arc::new(|_, _| one(1.0));
        let unit_q: ScalarFn = Arc::new(|_| 1.0);
        let terms = SemilinearTerms {
            xi: ones.clone(),
            q: unit_q,
            ..SemilinearTerms::zero(1)
        };
        let traj = node_traj(&sys, 0.0);
        assert_relative_eq!(convolution_term(&sys, &terms, &traj, 1.0).unwrap()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(convolution_term(&sys, &terms, &traj, 0.37).unwrap()[0], 0.37, epsilon = 1e-14);

        let c = 0.8;
        let exp_terms = SemilinearTerms {
            xi: Arc::new(move |_, _| one(c)),
            q: Arc::new(f64::exp),
            ..SemilinearTerms::zero(1)
        };
        let got = convolution_term(&sys, &exp_terms, &traj, 1.0).unwrap()[0];
        assert_relative_eq!(got, c * (E - 1.0), epsilon = 1e-13);
        assert!(convolution_term(&sys, &exp_terms, &traj, 1.2).is_err());
        assert_eq!(convolution_term(&sys, &SemilinearTerms::zero(1), &traj, 0.6).unwrap()[0], 0.0);
    }

    #[test]
    fn g_reduces_to_linear_rhs_and_unit_forcing() {
        let sys = scalar_system();
        let traj = node_traj(&sys, 0.3);
        let g = g_functional(&sys, &traj, &one(0.2), &one(1.0)).unwrap();
        assert_relative_eq!(g[0], 0.8, epsilon = 1e-15);
        assert_eq!(g_functional(&sys, &traj, &one(0.0), &one(0.0)).unwrap()[0], 0.0);

        let forced = with_terms(
            scalar_system(),
            Arc::new(|_, _| one(1.0)),
            Arc::new(|_, _| one(0.0)),
            Arc::new(|_| 0.0),
        );
        let g = g_functional(&forced, &traj, &one(0.0), &one(0.0)).unwrap();
        assert_relative_eq!(g[0], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_nonlinearity_reduces_to_linear() {
        let sys = scalar_system_with(&[0.4], &[0.2], &[0.5]);
        let bundle = assemble_gramians(&sys).unwrap();
        let sol = solve_fixed_point(&sys, &bundle, &one(0.1), &one(1.0), 0.01, SolveOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.residual_history, vec![0.0]);
        let rows = lambda_sweep(&sys, &bundle, &one(0.1), &one(1.0), &[0.01]).unwrap();
        assert_eq!((sol.terminal[0] - 1.0).abs(), rows[0].terminal_error_norm);
    }

    #[test]
    fn saturating_scalar_contraction() {
        let sys = with_terms(
            scalar_system(),
            Arc::new(|_, x: &DVector<f64>| x * (0.1 / (1.0 + x.norm()))),
            Arc::new(|_, x: &DVector<f64>| x * 0.0),
            Arc::new(|_| 0.0),
        );
        let bundle = assemble_gramians(&sys).unwrap();
        let sol = solve_fixed_point(&sys, &bundle, &one(0.0), &one(1.0), 0.01, SolveOptions::default()).unwrap();
        for r in sol.contraction_ratios() {
            assert!(r <= 0.1 + 1e-9, "ratio {r}");
        }
        let err = sol.terminal[0] - 1.0;
        assert_relative_eq!(err, -0.01 * sol.phi_hat[0], epsilon = 1e-12);
        assert!(sol.integral_residual <= 10.0 * 1e-8);
    }

    #[test]
    fn non_convergence_carries_history() {
        let sys = with_terms(
            scalar_system(),
            Arc::new(|_, x: &DVector<f64>| x * (0.1 / (1.0 + x.norm()))),
            Arc::new(|_, x: &DVector<f64>| x * 0.0),
            Arc::new(|_| 0.0),
        );
        let bundle = assemble_gramians(&sys).unwrap();
        let opts = SolveOptions {
            tol: 1e-30,
            max_iter: 3,
            relaxation: 1.0,
        };
        match solve_fixed_point(&sys, &bundle, &one(0.0), &one(1.0), 0.01, opts) {
            Err(Error::NonConvergence { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            solve_fixed_point(&sys, &bundle, &one(0.0), &one(1.0), 0.0, SolveOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn forcing_free_constants() {
        let sys = crate::test_support::scalar_system_input(0.0, &[0.5], &[0.0], &[0.0]);
        let c = check_existence_constants(&sys, 0.1, 1.0).unwrap();
        assert_eq!(c.script_n, c.m_bound);
        assert_eq!(c.script_l, c.m_bound.powi(2));
        assert_eq!(c.k_1, 0.0);
        assert_eq!(c.k_2, 0.0);
        assert_eq!(c.c_list, vec![1.0]);
    }

    #[test]
    fn lipschitz_sampler_respects_saturation() {
        let terms = SemilinearTerms {
            f: Arc::new(|_, x: &DVector<f64>| x * (0.1 / (1.0 + x.norm()))),
            ..SemilinearTerms::zero(3)
        };
        let s = sample_lipschitz(&terms, 3, 1.0, 5.0, 500, 7);
        assert!(s.quotient_f <= 0.1 + 1e-8);
        assert!(s.norm_f <= 0.1);
        assert_eq!(s.quotient_xi, 0.0);
    }
}
