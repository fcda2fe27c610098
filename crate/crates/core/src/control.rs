//! Regularized approximate controls.
//!
//! For `λ > 0` the costate `φ̂ = (λI + W)⁻¹ r`, with `r = h − (free response)`,
//! minimizes `J_λ(φ) = ½ φᵀWφ + (λ/2)‖φ‖² − ⟨φ, r⟩`. The control `M* φ̂`
//! steers the linear system to `x(b) = h − λ(λI + W)⁻¹ r`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evolution::spectral_norm;
use crate::gramian::{adjoint_state, control_from_adjoint, GramianBundle};
use crate::impulse_flow::{free_impulsive_response, linear_mild_solution, ControlInput};
use crate::system::ImpulsiveSystem;

/// Solves `(λI + W) φ = rhs` by Cholesky, retrying once with a diagonal
/// jitter of `1e-14 ‖W‖` if the factorization fails, followed by one step
/// of iterative refinement.
pub fn regularized_solve(w: &DMatrix<f64>, lambda: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
    }
    let n = w.nrows();
    if w.ncols() != n || rhs.len() != n {
        return Err(Error::Input(format!(
            "shape mismatch: W is {}x{}, rhs has length {}",
            w.nrows(),
            w.ncols(),
            rhs.len()
        )));
    }
    let shifted = w + DMatrix::identity(n, n) * lambda;
    let chol = match Cholesky::new(shifted.clone()) {
        Some(c) => c,
        None => {
            let jitter = 1e-14 * spectral_norm(w).max(f64::MIN_POSITIVE);
            Cholesky::new(&shifted + DMatrix::identity(n, n) * jitter).ok_or_else(|| {
                Error::Numeric("Cholesky factorization of λI + W failed".into())
            })?
        }
    };
    let mut phi = chol.solve(rhs);
    let residual = rhs - &shifted * &phi;
    phi += chol.solve(&residual);
    if !phi.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("regularized solve produced non-finite values".into()));
    }
    Ok(phi)
}

/// `J_λ(φ) = ½ φᵀWφ + (λ/2)‖φ‖² − ⟨φ, rhs⟩`.
pub fn objective(w: &DMatrix<f64>, lambda: f64, rhs: &DVector<f64>, phi: &DVector<f64>) -> f64 {
    0.5 * phi.dot(&(w * phi)) + 0.5 * lambda * phi.norm_squared() - phi.dot(rhs)
}

/// Minimizer of `J_λ` with optimality diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiHat {
    pub phi: DVector<f64>,
    /// `J_λ(φ̂)`.
    pub objective: f64,
    /// `‖Wφ̂ + λφ̂ − rhs‖`.
    pub gradient_norm: f64,
}

pub fn compute_phi_hat(bundle: &GramianBundle, lambda: f64, rhs: &DVector<f64>) -> Result<PhiHat> {
    let phi = regularized_solve(&bundle.w, lambda, rhs)?;
    let gradient = &bundle.w * &phi + &phi * lambda - rhs;
    Ok(PhiHat {
        objective: objective(&bundle.w, lambda, rhs, &phi),
        gradient_norm: gradient.norm(),
        phi,
    })
}

/// The control `M* φ`: `u(t) = Bᵀ ψ(t)` and `v_k = E_kᵀ ψ(t_k⁺)`.
pub fn synthesize_control(system: &ImpulsiveSystem, phi: &DVector<f64>) -> Result<ControlInput> {
    Ok(control_from_adjoint(system, adjoint_state(system, phi)?))
}

/// A λ-regularized control together with its costate.
#[derive(Debug, Clone)]
pub struct RegularizedControl {
    pub lambda: f64,
    pub phi_hat: DVector<f64>,
    pub control: ControlInput,
    /// `−λ(λI + W)⁻¹ (h − free response)`.
    pub predicted_terminal_error: DVector<f64>,
}

/// `h − U(b,t_m) ∏ (I+D_j) U(t_j,t_{j-1}) x₀`.
pub fn linear_rhs(system: &ImpulsiveSystem, x0: &DVector<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
    if h.len() != system.state_dim() {
        return Err(Error::Input(format!(
            "target has length {}, expected {}",
            h.len(),
            system.state_dim()
        )));
    }
    Ok(h - free_impulsive_response(system, x0)?)
}

pub fn regularized_control(
    system: &ImpulsiveSystem,
    bundle: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    lambda: f64,
) -> Result<RegularizedControl> {
    let rhs = linear_rhs(system, x0, h)?;
    let phi = compute_phi_hat(bundle, lambda, &rhs)?.phi;
    let control = synthesize_control(system, &phi)?;
    Ok(RegularizedControl {
        lambda,
        predicted_terminal_error: -&phi * lambda,
        phi_hat: phi,
        control,
    })
}

/// Simulated and predicted terminal errors `x_λ(b) − h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalErrors {
    pub simulated: DVector<f64>,
    pub formula: DVector<f64>,
}

/// Simulates the linear system under the synthesized control and compares
/// `x_λ(b) − h` with `−λ(λI + W)⁻¹ (h − free response)`.
pub fn terminal_error_linear(
    system: &ImpulsiveSystem,
    bundle: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    lambda: f64,
) -> Result<TerminalErrors> {
    let rc = regularized_control(system, bundle, x0, h, lambda)?;
    let traj = linear_mild_solution(system, &rc.control, x0, &[])?;
    Ok(TerminalErrors {
        simulated: traj.terminal - h,
        formula: rc.predicted_terminal_error,
    })
}

/// One row of a λ sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub terminal_error_norm: f64,
    pub control_l2_norm: f64,
    pub impulse_control_max_norm: f64,
}

/// `‖u‖_{L²}` on the quadrature grid.
pub fn control_l2_norm(system: &ImpulsiveSystem, control: &ControlInput) -> Result<f64> {
    let values = control.at_nodes(system)?;
    Ok(values
        .iter()
        .zip(system.grid().weights())
        .map(|(u, w)| w * u.norm_squared())
        .sum::<f64>()
        .sqrt())
}

pub fn impulse_max_norm(control: &ControlInput) -> f64 {
    control.v.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub(crate) fn check_lambda_list(lambdas: &[f64]) -> Result<()> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Domain(format!("λ must be positive, got {l}")));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Input("λ list must be strictly decreasing".into()));
    }
    Ok(())
}

/// Terminal error and control size for each λ (descending).
pub fn lambda_sweep(
    system: &ImpulsiveSystem,
    bundle: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    lambdas: &[f64],
) -> Result<Vec<SweepRow>> {
    check_lambda_list(lambdas)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let rc = regularized_control(system, bundle, x0, h, lambda)?;
            let traj = linear_mild_solution(system, &rc.control, x0, &[])?;
            Ok(SweepRow {
                lambda,
                terminal_error_norm: (traj.terminal - h).norm(),
                control_l2_norm: control_l2_norm(system, &rc.control)?,
                impulse_control_max_norm: impulse_max_norm(&rc.control),
            })
        })
        .collect()
}

/// `1, 1e-1, …, 1e-6`.
pub fn default_lambdas() -> Vec<f64> {
    (0..7).map(|k| 10f64.powi(-k)).collect()
}
