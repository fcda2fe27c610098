//! Turns a resolved [`RunConfig`] into a system, initial state and target.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use impulsim_core::evolution::{MatrixFn, ScalarFn};
use impulsim_core::heat::{build_heat_system, HeatConfig};
use impulsim_core::random::{random_system, RandomSystemConfig};
use impulsim_core::semilinear::SemilinearTerms;
use impulsim_core::{
    DenseFamily, DenseScheme, EvolutionFamily, ImpulseSchedule, ImpulsiveSystem, QuadratureConfig,
    Realization, SpectralFamily,
};

use crate::config::{Coefficient, NonlinearityPreset, RunConfig, Scheme, SystemKind};
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Problem {
    pub system: ImpulsiveSystem,
    pub x0: DVector<f64>,
    pub h: DVector<f64>,
    /// Present for the heat system.
    pub heat: Option<HeatConfig>,
}

fn matrix(key: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::Config(format!("key `{key}`: expected a nonempty matrix")));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Config(format!("key `{key}`: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn shape_conflict(a: &str, b: &str, detail: String) -> CliError {
    CliError::Config(format!("blocks `{a}` and `{b}` conflict: {detail}"))
}

fn coefficient_fn(c: Coefficient) -> ScalarFn {
    match c {
        Coefficient::OnePlusSqrt => Arc::new(|t: f64| 1.0 + t.max(0.0).sqrt()),
        Coefficient::Constant { value } => Arc::new(move |_| value),
    }
}

pub fn quadrature(cfg: &RunConfig) -> QuadratureConfig {
    QuadratureConfig {
        nodes_per_panel: cfg.experiment.nodes_per_panel.expect("resolved"),
        panels_per_interval: cfg.experiment.panels_per_interval.expect("resolved"),
    }
}

/// Componentwise `f = 0.1 sin(x + t)`, `ξ = 0.05 tanh x`, `q = e^{−τ}` with
/// `q* = 1 − e^{−b}`.
pub fn bounded_sine_terms(horizon: f64) -> SemilinearTerms {
    SemilinearTerms {
        f: Arc::new(|t, x: &DVector<f64>| x.map(|v| 0.1 * (v + t).sin())),
        xi: Arc::new(|_, x: &DVector<f64>| x.map(|v| 0.05 * v.tanh())),
        q: Arc::new(|tau: f64| (-tau).exp()),
        lipschitz_f: 0.1,
        lipschitz_xi: 0.05,
        bound_f: 0.1,
        bound_xi: 0.05,
        q_star: 1.0 - (-horizon).exp(),
    }
}

pub fn heat_config(cfg: &RunConfig) -> HeatConfig {
    let s = &cfg.system;
    HeatConfig {
        n_modes: s.modes.expect("resolved"),
        coefficient: coefficient_fn(s.coefficient.expect("resolved")),
        impulse_times: cfg.schedule.times.clone().expect("resolved"),
        horizon: cfg.schedule.horizon.expect("resolved"),
        spatial_intervals: s.spatial_intervals.expect("resolved"),
        semilinear: cfg.semilinear.preset == Some(NonlinearityPreset::Heat),
        quadrature: quadrature(cfg),
        ..HeatConfig::default()
    }
}

fn vector_or(key: &str, given: &Option<Vec<f64>>, default: DVector<f64>) -> Result<DVector<f64>, CliError> {
    match given {
        None => Ok(default),
        Some(v) if v.len() == default.len() => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(shape_conflict(
            "experiment",
            "system",
            format!("`{key}` has length {}, state dimension is {}", v.len(), default.len()),
        )),
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    let s = &cfg.system;
    let sch = &cfg.schedule;
    let horizon = sch.horizon.expect("resolved");
    let quad = quadrature(cfg);
    let (system, x0, h, heat) = match cfg.kind() {
        SystemKind::Heat => {
            let hc = heat_config(cfg);
            let p = build_heat_system(&hc)?;
            (p.system, p.x0, p.h, Some(hc))
        }
        SystemKind::Random => {
            let rc = RandomSystemConfig {
                state_dim: s.state_dim.expect("resolved"),
                control_dim: s.control_dim.expect("resolved"),
                impulses: s.impulses.expect("resolved"),
                horizon,
                substeps: s.substeps.expect("resolved"),
                uncontrollable: s.uncontrollable.expect("resolved"),
                seed: cfg.experiment.seed.expect("resolved"),
            };
            let p = random_system(&rc)?;
            let system = ImpulsiveSystem::new(
                p.system.family().clone(),
                p.system.input().clone(),
                p.system.schedule().clone(),
                quad,
            )?;
            (system, p.x0, p.h, None)
        }
        kind @ (SystemKind::Dense | SystemKind::Spectral) => {
            let times = sch.times.clone().expect("resolved");
            let family = if kind == SystemKind::Dense {
                let a0 = matrix("system.a0", s.a0.as_ref().expect("resolved"))?;
                let a1 = matrix("system.a1", s.a1.as_ref().expect("resolved"))?;
                let n = a0.nrows();
                if a0.ncols() != n || a1.shape() != (n, n) {
                    return Err(CliError::Config(format!(
                        "keys `system.a0`, `system.a1`: expected square {n}x{n} matrices"
                    )));
                }
                let gen: MatrixFn = Arc::new(move |t: f64| &a0 + &a1 * (2.0 * t).cos());
                let mut breakpoints = vec![0.0];
                breakpoints.extend(times.iter().copied().filter(|&t| t > 0.0 && t < horizon));
                breakpoints.push(horizon);
                let scheme = match s.scheme.expect("resolved") {
                    Scheme::Magnus4 => DenseScheme::Magnus4,
                    Scheme::Midpoint => DenseScheme::Midpoint,
                };
                let dense = DenseFamily::with_scheme(n, gen, &breakpoints, s.substeps.expect("resolved"), scheme)?;
                EvolutionFamily::new(Realization::DenseGenerator(dense), s.norm_bound)?
            } else {
                let n = s.modes.expect("resolved");
                let ev = s.eigenvalues.clone().expect("resolved");
                if ev.len() != n {
                    return Err(CliError::Config(format!(
                        "keys `system.eigenvalues`, `system.modes`: {} eigenvalues for {n} modes",
                        ev.len()
                    )));
                }
                let spec = SpectralFamily::new(
                    n,
                    move |k| ev[k - 1],
                    coefficient_fn(s.coefficient.expect("resolved")),
                    horizon,
                    1e-12,
                )?;
                EvolutionFamily::new(Realization::SpectralDiagonal(spec), s.norm_bound)?
            };
            let n = family.dim();
            let input = matrix("system.input", s.input.as_ref().expect("resolved"))?;
            if input.nrows() != n {
                return Err(shape_conflict(
                    "system",
                    "system",
                    format!("`input` has {} rows, state dimension is {n}", input.nrows()),
                ));
            }
            let d = sch.d.as_ref().expect("resolved");
            let e = sch.e.as_ref().expect("resolved");
            if d.len() != times.len() || e.len() != times.len() {
                return Err(shape_conflict(
                    "schedule",
                    "schedule",
                    format!("{} impulse times but {} D and {} E matrices", times.len(), d.len(), e.len()),
                ));
            }
            let d = d
                .iter()
                .enumerate()
                .map(|(k, m)| matrix(&format!("schedule.d[{k}]"), m))
                .collect::<Result<Vec<_>, _>>()?;
            let e = e
                .iter()
                .enumerate()
                .map(|(k, m)| matrix(&format!("schedule.e[{k}]"), m))
                .collect::<Result<Vec<_>, _>>()?;
            let sched = ImpulseSchedule::new(times, d, e, horizon)?;
            let system = ImpulsiveSystem::new(family, input, sched, quad)?;
            (system, DVector::zeros(n), DVector::zeros(n), None)
        }
    };
    let x0 = vector_or("x0", &cfg.experiment.x0, x0)?;
    let h = vector_or("target", &cfg.experiment.target, h)?;
    let system = match cfg.semilinear.preset.expect("resolved") {
        NonlinearityPreset::BoundedSine => system.with_semilinear(bounded_sine_terms(horizon)),
        NonlinearityPreset::Off => system.without_semilinear(),
        NonlinearityPreset::Heat => system,
    };
    Ok(Problem { system, x0, h, heat })
}
