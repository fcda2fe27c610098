//! Seeded random test systems with a time-dependent dense generator
//! `A(t) = A₀ + cos(2t) A₁`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::evolution::{DenseFamily, EvolutionFamily, Realization};
use crate::impulse_flow::ImpulseSchedule;
use crate::quadrature::QuadratureConfig;
use crate::system::ImpulsiveSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSystemConfig {
    pub state_dim: usize,
    pub control_dim: usize,
    pub impulses: usize,
    pub horizon: f64,
    /// Stepper cells per gap between consecutive impulse times.
    pub substeps: usize,
    /// Trailing states that neither `B`, `E_k` nor the coupling reach.
    pub uncontrollable: usize,
    pub seed: u64,
}

impl Default for RandomSystemConfig {
    fn default() -> Self {
        Self {
            state_dim: 3,
            control_dim: 1,
            impulses: 2,
            horizon: 1.0,
            substeps: 64,
            uncontrollable: 0,
            seed: 7,
        }
    }
}

/// A random system with a random initial state and target.
#[derive(Debug, Clone)]
pub struct RandomProblem {
    pub system: ImpulsiveSystem,
    pub x0: DVector<f64>,
    pub h: DVector<f64>,
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
}

fn uniform(rng: &mut SplitMix64, rows: usize, cols: usize, half_width: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-half_width..half_width))
}

/// Zeroes the block that couples the leading states into the trailing `k`.
fn decouple(m: &mut DMatrix<f64>, k: usize) {
    let n = m.nrows();
    if k == 0 {
        return;
    }
    m.view_mut((n - k, 0), (k, m.ncols().min(n - k))).fill(0.0);
}

/// Draws, in order: `A₀ ~ U(−1,1)`, `A₁ ~ U(−½,½)`, `B ~ U(−1,1)`, then per
/// impulse `D_k ~ U(−0.3,0.3)` and `E_k ~ U(−1,1)`, the impulse times
/// `(k + U(−0.3,0.3)) b/(m+1)`, `x₀` and `h`.
pub fn random_system(cfg: &RandomSystemConfig) -> Result<RandomProblem> {
    let n = cfg.state_dim;
    let p = cfg.control_dim;
    if n == 0 || p == 0 {
        return Err(Error::Input("state and control dimensions must be positive".into()));
    }
    if cfg.uncontrollable > n {
        return Err(Error::Input(format!(
            "uncontrollable block of {} exceeds state dimension {n}",
            cfg.uncontrollable
        )));
    }
    let k = cfg.uncontrollable;
    let mut rng = SplitMix64::seed_from_u64(cfg.seed);
    let mut a0 = uniform(&mut rng, n, n, 1.0);
    let mut a1 = uniform(&mut rng, n, n, 0.5);
    let mut b = uniform(&mut rng, n, p, 1.0);
    decouple(&mut a0, k);
    decouple(&mut a1, k);
    b.rows_mut(n - k, k).fill(0.0);
    let m = cfg.impulses;
    let mut d = Vec::with_capacity(m);
    let mut e = Vec::with_capacity(m);
    for _ in 0..m {
        let mut dk = uniform(&mut rng, n, n, 0.3);
        let mut ek = uniform(&mut rng, n, p, 1.0);
        decouple(&mut dk, k);
        ek.rows_mut(n - k, k).fill(0.0);
        d.push(dk);
        e.push(ek);
    }
    let times: Vec<f64> = (1..=m)
        .map(|j| (j as f64 + rng.random_range(-0.3..0.3)) * cfg.horizon / (m + 1) as f64)
        .collect();
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let h = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));

    let (g0, g1) = (a0.clone(), a1.clone());
    let generator = Arc::new(move |t: f64| &g0 + &g1 * (2.0 * t).cos());
    let mut breakpoints = Vec::with_capacity(m + 2);
    breakpoints.push(0.0);
    breakpoints.extend_from_slice(&times);
    breakpoints.push(cfg.horizon);
    let dense = DenseFamily::new(n, generator, &breakpoints, cfg.substeps)?;
    let family = EvolutionFamily::new(Realization::DenseGenerator(dense), None)?;
    let schedule = ImpulseSchedule::new(times, d, e, cfg.horizon)?;
    let system = ImpulsiveSystem::new(family, b, schedule, QuadratureConfig::default())?;
    Ok(RandomProblem { system, x0, h, a0, a1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_draws_are_reproducible() {
        let cfg = RandomSystemConfig::default();
        let a = random_system(&cfg).unwrap();
        let b = random_system(&cfg).unwrap();
        assert_eq!(a.a0, b.a0);
        assert_eq!(a.x0, b.x0);
        assert_eq!(a.system.schedule().times(), b.system.schedule().times());
        let c = random_system(&RandomSystemConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.a0, c.a0);
    }

    #[test]
    fn impulse_times_stay_in_their_slots() {
        let cfg = RandomSystemConfig { impulses: 4, ..Default::default() };
        let p = random_system(&cfg).unwrap();
        for (j, t) in p.system.schedule().times().iter().enumerate() {
            let centre = (j + 1) as f64 / 5.0;
            assert!((t - centre).abs() <= 0.3 / 5.0 + 1e-15);
        }
    }

    #[test]
    fn uncontrollable_block_is_decoupled() {
        let cfg = RandomSystemConfig { uncontrollable: 1, ..Default::default() };
        let p = random_system(&cfg).unwrap();
        assert_eq!(p.a0[(2, 0)], 0.0);
        assert_eq!(p.a0[(2, 1)], 0.0);
        assert_eq!(p.system.input()[(2, 0)], 0.0);
        assert!(random_system(&RandomSystemConfig { uncontrollable: 4, ..cfg }).is_err());
    }
}
