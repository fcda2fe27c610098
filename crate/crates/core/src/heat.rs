//! One-dimensional impulsive semilinear heat problem on `[0, π]` with
//! Dirichlet conditions, truncated to the sine eigenbasis
//! `w_n(ζ) = √(2/π) sin(nζ)`, eigenvalues `−n²`.
//!
//! The nonlinearities act pointwise on the spatial profile:
//!
//! ```text
//! f(t, z) = e^{−t} z / ((9 + eᵗ)(1 + z)),   ξ(t, z) = eᵗ z / (5 + z),   q(τ) = e^τ
//! ```
//!
//! They are evaluated on a uniform collocation grid and projected back onto
//! the retained modes.

use std::f64::consts::{E, PI};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::control::lambda_sweep;
use crate::error::{Error, Result};
use crate::evolution::{EvolutionFamily, Realization, ScalarFn, SpectralFamily};
use crate::gramian::{assemble_gramians, GramianBundle};
use crate::impulse_flow::ImpulseSchedule;
use crate::output::CsvTable;
use crate::quadrature::QuadratureConfig;
use crate::semilinear::{
    check_existence_constants, verify_semilinear_controllability, ExistenceConstants,
    SemilinearTerms, SolveOptions,
};
use crate::system::ImpulsiveSystem;

/// Spatial profile `ζ ↦ z(ζ)`.
pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Declared constants of the heat nonlinearities.
pub const HEAT_LIPSCHITZ_F: f64 = 0.1;
pub const HEAT_LIPSCHITZ_XI: f64 = E / 25.0;
pub const HEAT_BOUND_F: f64 = 0.1;
pub const HEAT_BOUND_XI: f64 = E / 5.0;
pub const HEAT_Q_STAR: f64 = E - 1.0;

/// Uniform trapezoid grid on `[0, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpatialGrid {
    /// `intervals` equal subintervals, `intervals + 1` points.
    pub fn uniform(intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::Input("spatial grid needs at least one interval".into()));
        }
        let h = PI / intervals as f64;
        let points = (0..=intervals)
            .map(|i| if i == intervals { PI } else { i as f64 * h })
            .collect();
        let weights = (0..=intervals)
            .map(|i| if i == 0 || i == intervals { 0.5 * h } else { h })
            .collect();
        Ok(Self { points, weights })
    }

    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn sample(&self, f: &dyn Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&z| f(z)).collect()
    }

    /// `basis[(p, n-1)] = w_n(ζ_p)`.
    pub fn basis(&self, n_modes: usize) -> Result<DMatrix<f64>> {
        self.check_resolution(n_modes)?;
        let c = (2.0 / PI).sqrt();
        Ok(DMatrix::from_fn(self.points.len(), n_modes, |p, n| {
            c * ((n + 1) as f64 * self.points[p]).sin()
        }))
    }

    fn check_resolution(&self, n_modes: usize) -> Result<()> {
        // Points per wavelength of sin(nζ) is 2·intervals/n.
        if self.intervals() < 2 * n_modes {
            return Err(Error::Resolution(format!(
                "{} spatial intervals resolve fewer than 4 points per wavelength of mode {n_modes}",
                self.intervals()
            )));
        }
        Ok(())
    }
}

/// `⟨g, w_n⟩` by trapezoid quadrature, `n = 1..=n_modes`.
pub fn spectral_project(samples: &[f64], grid: &SpatialGrid, n_modes: usize) -> Result<DVector<f64>> {
    if samples.len() != grid.points.len() {
        return Err(Error::Input(format!(
            "{} samples on a grid of {} points",
            samples.len(),
            grid.points.len()
        )));
    }
    let basis = grid.basis(n_modes)?;
    let weighted = DVector::from_iterator(
        samples.len(),
        samples.iter().zip(&grid.weights).map(|(g, w)| g * w),
    );
    Ok(basis.tr_mul(&weighted))
}

/// `Σ_n c_n w_n(ζ_p)` on the grid.
pub fn spectral_lift(coeffs: &DVector<f64>, grid: &SpatialGrid) -> Result<Vec<f64>> {
    let basis = grid.basis(coeffs.len())?;
    Ok((basis * coeffs).iter().copied().collect())
}

/// Settings of the heat problem.
#[derive(Clone)]
pub struct HeatConfig {
    pub n_modes: usize,
    /// Diffusion coefficient `a(t) > 0`.
    pub coefficient: ScalarFn,
    pub impulse_times: Vec<f64>,
    pub horizon: f64,
    pub spatial_intervals: usize,
    pub initial_profile: ProfileFn,
    pub target_profile: ProfileFn,
    /// Spatial profiles of the open-loop impulse controls `v_k`.
    pub v_profiles: Vec<ProfileFn>,
    pub semilinear: bool,
    pub quadrature: QuadratureConfig,
}

impl std::fmt::Debug for HeatConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HeatConfig")
            .field("n_modes", &self.n_modes)
            .field("impulse_times", &self.impulse_times)
            .field("horizon", &self.horizon)
            .field("spatial_intervals", &self.spatial_intervals)
            .field("semilinear", &self.semilinear)
            .field("quadrature", &self.quadrature)
            .finish_non_exhaustive()
    }
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            n_modes: 8,
            coefficient: Arc::new(|t: f64| 1.0 + t.max(0.0).sqrt()),
            impulse_times: vec![0.5],
            horizon: 1.0,
            spatial_intervals: 128,
            initial_profile: Arc::new(f64::sin),
            target_profile: Arc::new(|z: f64| z * (PI - z) / 4.0),
            v_profiles: vec![
                Arc::new(|z: f64| (PI * z).sin()),
                Arc::new(|z: f64| (PI * z).cos()),
            ],
            semilinear: true,
            quadrature: QuadratureConfig::default(),
        }
    }
}

/// The assembled heat system with its initial state and target.
#[derive(Debug, Clone)]
pub struct HeatProblem {
    pub system: ImpulsiveSystem,
    pub grid: SpatialGrid,
    pub x0: DVector<f64>,
    pub h: DVector<f64>,
    /// Coefficients of the open-loop impulse controls.
    pub v: Vec<DVector<f64>>,
}

/// Pointwise map `z ↦ g(t, z)` lifted to coefficients.
fn pointwise_term(
    grid: &SpatialGrid,
    basis: &DMatrix<f64>,
    g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync> {
    let weighted_basis = {
        let mut wb = basis.clone();
        for (p, w) in grid.weights.iter().enumerate() {
            wb.row_mut(p).scale_mut(*w);
        }
        wb
    };
    let basis = basis.clone();
    Arc::new(move |t, c| {
        let z = &basis * c;
        let gz = z.map(|zp| g(t, zp));
        weighted_basis.tr_mul(&gz)
    })
}

/// `f(t, z) = e^{−t} z / ((9 + eᵗ)(1 + z))`.
pub fn heat_f(t: f64, z: f64) -> f64 {
    let den = (9.0 + t.exp()) * (1.0 + z);
    if den <= 0.0 {
        return f64::NAN;
    }
    (-t).exp() * z / den
}

/// `ξ(t, z) = eᵗ z / (5 + z)`.
pub fn heat_xi(t: f64, z: f64) -> f64 {
    if 5.0 + z <= 0.0 {
        return f64::NAN;
    }
    t.exp() * z / (5.0 + z)
}

pub fn build_heat_system(config: &HeatConfig) -> Result<HeatProblem> {
    let n = config.n_modes;
    if n == 0 {
        return Err(Error::Input("n_modes must be at least 1".into()));
    }
    let grid = SpatialGrid::uniform(config.spatial_intervals)?;
    let basis = grid.basis(n)?;
    let spectral = SpectralFamily::heat(n, config.coefficient.clone(), config.horizon)?;
    let family = EvolutionFamily::new(Realization::SpectralDiagonal(spectral), None)?;
    let m = config.impulse_times.len();
    let ident = DMatrix::<f64>::identity(n, n);
    let schedule = ImpulseSchedule::new(
        config.impulse_times.clone(),
        vec![ident.clone(); m],
        vec![ident.clone(); m],
        config.horizon,
    )?;
    let mut system = ImpulsiveSystem::new(family, ident, schedule, config.quadrature)?;
    if config.semilinear {
        system = system.with_semilinear(SemilinearTerms {
            f: pointwise_term(&grid, &basis, heat_f),
            xi: pointwise_term(&grid, &basis, heat_xi),
            q: Arc::new(f64::exp),
            lipschitz_f: HEAT_LIPSCHITZ_F,
            lipschitz_xi: HEAT_LIPSCHITZ_XI,
            bound_f: HEAT_BOUND_F,
            bound_xi: HEAT_BOUND_XI,
            q_star: HEAT_Q_STAR,
        });
    }
    let project = |f: &ProfileFn| spectral_project(&grid.sample(&**f), &grid, n);
    let x0 = project(&config.initial_profile)?;
    let h = project(&config.target_profile)?;
    let v = (0..m)
        .map(|k| match config.v_profiles.get(k) {
            Some(p) => project(p),
            None => Ok(DVector::zeros(n)),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeatProblem {
        system,
        grid,
        x0,
        h,
        v,
    })
}

/// Per-λ row of the demo sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoRow {
    pub lambda: f64,
    pub terminal_error: f64,
    pub lambda_phi_norm: f64,
    pub iterations: usize,
    pub identity_residual: f64,
}

/// Everything the demo computed.
#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub constants: ExistenceConstants,
    pub rows: Vec<DemoRow>,
    pub bundle: GramianBundle,
    /// `(ζ, target, achieved)` for the smallest λ.
    pub profile: Vec<(f64, f64, f64)>,
}

/// Builds the heat problem, evaluates the existence constants at the
/// smallest λ, runs the semilinear λ sweep and writes `constants.csv`,
/// `sweep.csv` and `profile.csv` into `out_dir` when given.
pub fn run_demo(
    config: &HeatConfig,
    lambdas: &[f64],
    opts: SolveOptions,
    out_dir: Option<&Path>,
) -> Result<DemoOutcome> {
    let problem = build_heat_system(config)?;
    let sys = &problem.system;
    let bundle = assemble_gramians(sys)?;
    let lambda_min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    if !lambda_min.is_finite() {
        return Err(Error::Input("λ list is empty".into()));
    }
    let constants = check_existence_constants(sys, lambda_min, problem.h.norm())?;

    let mut rows = Vec::with_capacity(lambdas.len());
    let mut terminal = None;
    if config.semilinear {
        let results = verify_semilinear_controllability(sys, &bundle, &problem.x0, &problem.h, lambdas, opts)?;
        for (lambda, res) in results {
            let r = res?;
            rows.push(DemoRow {
                lambda,
                terminal_error: r.terminal_error,
                lambda_phi_norm: r.lambda_phi_norm,
                iterations: r.iterations,
                identity_residual: r.identity_residual,
            });
        }
        let last = crate::semilinear::solve_fixed_point(sys, &bundle, &problem.x0, &problem.h, lambda_min, opts)?;
        terminal = Some(last.terminal);
    } else {
        let sweep = lambda_sweep(sys, &bundle, &problem.x0, &problem.h, lambdas)?;
        for r in sweep {
            let rc = crate::control::regularized_control(sys, &bundle, &problem.x0, &problem.h, r.lambda)?;
            let lp = &rc.phi_hat * r.lambda;
            rows.push(DemoRow {
                lambda: r.lambda,
                terminal_error: r.terminal_error_norm,
                lambda_phi_norm: lp.norm(),
                iterations: 1,
                identity_residual: (r.terminal_error_norm - lp.norm()).abs(),
            });
            if r.lambda == lambda_min {
                let traj = crate::impulse_flow::linear_mild_solution(sys, &rc.control, &problem.x0, &[])?;
                terminal = Some(traj.terminal);
            }
        }
    }
    let terminal = terminal.ok_or_else(|| Error::Input("λ list is empty".into()))?;
    let target = spectral_lift(&problem.h, &problem.grid)?;
    let achieved = spectral_lift(&terminal, &problem.grid)?;
    let profile: Vec<(f64, f64, f64)> = problem
        .grid
        .points
        .iter()
        .zip(target.iter().zip(&achieved))
        .map(|(&z, (&t, &a))| (z, t, a))
        .collect();

    let outcome = DemoOutcome {
        constants,
        rows,
        bundle,
        profile,
    };
    if let Some(dir) = out_dir {
        write_demo(&outcome, dir, "")?;
    }
    Ok(outcome)
}

pub fn constants_table(c: &ExistenceConstants) -> CsvTable {
    let mut t = CsvTable::new(["name", "value"]);
    for (k, v) in c.rows() {
        t.push(vec![k, crate::output::fmt_f64(v)]);
    }
    t
}

/// Writes `constants.csv`, `sweep.csv` and `profile.csv`, each name preceded
/// by `prefix`.
pub fn write_demo(outcome: &DemoOutcome, dir: &Path, prefix: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Input(format!("cannot create {}: {e}", dir.display())))?;
    constants_table(&outcome.constants).write(&dir.join(format!("{prefix}constants.csv")))?;
    let mut sweep = CsvTable::new([
        "lambda",
        "terminal_error",
        "lambda_phi_norm",
        "iterations",
        "identity_residual",
    ]);
    for r in &outcome.rows {
        sweep.push(vec![
            crate::output::fmt_f64(r.lambda),
            crate::output::fmt_f64(r.terminal_error),
            crate::output::fmt_f64(r.lambda_phi_norm),
            r.iterations.to_string(),
            crate::output::fmt_f64(r.identity_residual),
        ]);
    }
    sweep.write(&dir.join(format!("{prefix}sweep.csv")))?;
    let mut profile = CsvTable::new(["zeta", "target", "achieved", "abserr"]);
    for &(z, t, a) in &outcome.profile {
        profile.push_numeric(&[z, t, a, (t - a).abs()]);
    }
    profile.write(&dir.join(format!("{prefix}profile.csv")))?;
    Ok(())
}
