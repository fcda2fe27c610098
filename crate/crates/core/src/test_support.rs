//! Small systems shared by the unit tests.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::evolution::{EvolutionFamily, Realization, SpectralFamily};
use crate::impulse_flow::ImpulseSchedule;
use crate::quadrature::QuadratureConfig;
use crate::system::ImpulsiveSystem;

/// `x' = b·u` on `[0, 1]` with scalar impulses `D_k = d_k`, `E_k = e_k`.
pub fn scalar_system_input(b_val: f64, times: &[f64], d_vals: &[f64], e_vals: &[f64]) -> ImpulsiveSystem {
    let spectral = SpectralFamily::new(1, |_| 0.0, Arc::new(|_| 1.0), 1.0, 1e-12).unwrap();
    let family = EvolutionFamily::new(Realization::SpectralDiagonal(spectral), None).unwrap();
    let scalar = |v: &[f64]| v.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect();
    let schedule = ImpulseSchedule::new(times.to_vec(), scalar(d_vals), scalar(e_vals), 1.0).unwrap();
    ImpulsiveSystem::new(
        family,
        DMatrix::from_element(1, 1, b_val),
        schedule,
        QuadratureConfig::default(),
    )
    .unwrap()
}

pub fn scalar_system_with(times: &[f64], d_vals: &[f64], e_vals: &[f64]) -> ImpulsiveSystem {
    scalar_system_input(1.0, times, d_vals, e_vals)
}

/// `A = 0`, `B = 1`, one inert impulse at `t = 0.5`.
pub fn scalar_system() -> ImpulsiveSystem {
    scalar_system_with(&[0.5], &[0.0], &[0.0])
}
