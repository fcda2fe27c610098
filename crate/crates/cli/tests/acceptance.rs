//! Acceptance gate: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_xoshiro::SplitMix64;

use impulsim_cli::{run, Cli, Command};
use impulsim_core::control::{synthesize_control, terminal_error_linear};
use impulsim_core::evolution::{spectral_norm, MatrixFn};
use impulsim_core::gramian::{
    apply_m_nodal, apply_m_star, assemble_gramians, controllability_report, input_operator_matrix,
    numerical_rank, RANK_TOL,
};
use impulsim_core::heat::{build_heat_system, run_demo, HeatConfig};
use impulsim_core::impulse_flow::linear_mild_solution;
use impulsim_core::output::{csv_body, read_numeric_csv};
use impulsim_core::random::{random_system, RandomProblem, RandomSystemConfig};
use impulsim_core::semilinear::{verify_semilinear_controllability, SolveOptions};
use impulsim_core::{DenseFamily, EvolutionFamily, ImpulsiveSystem, Realization, SpectralFamily};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli(config: &Path, out: &Path, command: Command) -> Result<(), String> {
    let args = Cli {
        config: Some(config.to_path_buf()),
        out: Some(out.to_path_buf()),
        seed: None,
        quiet: true,
        command,
    };
    run(&args).map(|_| ()).map_err(|e| e.to_string())
}

fn preset_file(dir: &Path, preset: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{preset}.toml"));
    std::fs::write(&path, format!("schema_version = 1\npreset = \"{preset}\"\n")).unwrap();
    path
}

fn terminal_error_identity(suite: &[RandomProblem]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for p in suite {
        let bundle = assemble_gramians(&p.system).map_err(|e| e.to_string())?;
        for lambda in [1e-1, 1e-3] {
            let te = terminal_error_linear(&p.system, &bundle, &p.x0, &p.h, lambda).map_err(|e| e.to_string())?;
            worst = worst.max((&te.simulated - &te.formula).norm() / (1.0 + p.h.norm()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 5.0,
        format!("20 systems, max relative gap {worst:.2e}, {secs:.2} s"),
    )
}

fn scalar_closed_form(tmp: &Path) -> Outcome {
    let out = tmp.join("c2");
    cli(&preset_file(tmp, "scalar-a0"), &out, Command::Sweep)?;
    let (_, rows) = read_numeric_csv(&out.join("sweep.csv")).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for r in &rows {
        worst = worst.max((r[1] - r[0] / (1.0 + r[0])).abs());
    }
    check(rows.len() == 3 && worst <= 1e-8, format!("λ ∈ {{1, 0.1, 0.01}}, max |error − λ/(1+λ)| {worst:.2e}"))
}

fn factorization(suite: &[RandomProblem]) -> Outcome {
    let heat = build_heat_system(&HeatConfig { n_modes: 4, ..HeatConfig::default() }).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for sys in suite.iter().map(|p| &p.system).chain([&heat.system]) {
        let w = assemble_gramians(sys).map_err(|e| e.to_string())?.w;
        let m = input_operator_matrix(sys).map_err(|e| e.to_string())?;
        worst = worst.max(spectral_norm(&(&m * m.transpose() - &w)) / spectral_norm(&w));
    }
    check(worst <= 1e-6, format!("random suite + 4-mode heat, max ‖MMᵀ − W‖/‖W‖ {worst:.2e}"))
}

fn duality(suite: &[RandomProblem]) -> Outcome {
    let mut rng = SplitMix64::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for p in suite {
        let sys = &p.system;
        let nodes = sys.grid().nodes().to_vec();
        let weights = sys.grid().weights().to_vec();
        let dims = sys.schedule().impulse_dims();
        for _ in 0..100 {
            let u: Vec<DVector<f64>> = nodes
                .iter()
                .map(|_| DVector::from_fn(sys.control_dim(), |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let v: Vec<DVector<f64>> =
                dims.iter().map(|&d| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect();
            let phi = DVector::from_fn(sys.state_dim(), |_, _| rng.random_range(-1.0..1.0));
            let mc = apply_m_nodal(sys, &u, &v).map_err(|e| e.to_string())?;
            let (su, sv) = apply_m_star(sys, &phi, &nodes).map_err(|e| e.to_string())?;
            let mut rhs = 0.0;
            let mut c2 = 0.0;
            for ((a, b), w) in u.iter().zip(&su).zip(&weights) {
                rhs += w * a.dot(b);
                c2 += w * a.norm_squared();
            }
            for (a, b) in v.iter().zip(&sv) {
                rhs += a.dot(b);
                c2 += a.norm_squared();
            }
            let scale = (1.0 + mc.norm()) * (1.0 + c2.sqrt()) * (1.0 + phi.norm());
            worst = worst.max((mc.dot(&phi) - rhs).abs() / scale);
        }
    }
    check(worst <= 1e-8, format!("100 pairs × 20 systems, max scaled gap {worst:.2e}"))
}

fn cocycle() -> Outcome {
    let mut rng = SplitMix64::seed_from_u64(5);
    let spec = SpectralFamily::heat(8, Arc::new(|t: f64| 1.0 + t.sqrt()), 1.0).map_err(|e| e.to_string())?;
    let spectral = EvolutionFamily::new(Realization::SpectralDiagonal(spec), None).map_err(|e| e.to_string())?;
    let gen: MatrixFn =
        Arc::new(|t: f64| DMatrix::from_row_slice(2, 2, &[-0.5, 1.0 + t, -1.0, -0.2 * t.cos()]));
    let dense = DenseFamily::new(2, gen, &[0.0, 0.4, 1.0], 32).map_err(|e| e.to_string())?;
    let dense = EvolutionFamily::new(Realization::DenseGenerator(dense), None).map_err(|e| e.to_string())?;
    let grid = dense.step_grid().unwrap().to_vec();
    let (mut ws, mut wd) = (0.0f64, 0.0f64);
    let mut identity_exact = true;
    for _ in 0..200 {
        let mut t3 = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        t3.sort_by(f64::total_cmp);
        let x = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let direct = spectral.propagate(t3[0], t3[2], &x).unwrap();
        let split = spectral.propagate(t3[1], t3[2], &spectral.propagate(t3[0], t3[1], &x).unwrap()).unwrap();
        ws = ws.max((direct - split).norm() / x.norm());
        identity_exact &= spectral.propagate(t3[1], t3[1], &x).unwrap() == x;

        let mut idx = [rng.random_range(0..grid.len()), rng.random_range(0..grid.len()), rng.random_range(0..grid.len())];
        idx.sort();
        let (s, r, t) = (grid[idx[0]], grid[idx[1]], grid[idx[2]]);
        let y = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let direct = dense.propagate(s, t, &y).unwrap();
        let split = dense.propagate(r, t, &dense.propagate(s, r, &y).unwrap()).unwrap();
        wd = wd.max((direct - split).norm() / y.norm());
        identity_exact &= dense.propagate(r, r, &y).unwrap() == y;
    }
    check(
        ws <= 1e-8 && wd <= 1e-12 && identity_exact,
        format!("spectral {ws:.2e}, dense on step grid {wd:.2e}, U(s,s) = I exact: {identity_exact}"),
    )
}

fn certificates(suite: &[RandomProblem]) -> Outcome {
    let mut systems: Vec<ImpulsiveSystem> = suite.iter().map(|p| p.system.clone()).collect();
    for seed in 0..4u64 {
        let cfg = RandomSystemConfig { state_dim: 4, uncontrollable: 1 + seed as usize % 2, seed: 70 + seed, ..Default::default() };
        systems.push(random_system(&cfg).map_err(|e| e.to_string())?.system);
    }
    let (mut agree, mut deficient, mut spd) = (0, 0, 0);
    let mut resolvent_ok = true;
    for sys in &systems {
        let bundle = assemble_gramians(sys).map_err(|e| e.to_string())?;
        let rank = numerical_rank(&input_operator_matrix(sys).map_err(|e| e.to_string())?, RANK_TOL);
        let report = controllability_report(&bundle, &[1.0]).map_err(|e| e.to_string())?;
        agree += usize::from(report.strictly_positive == (rank == sys.state_dim()));
        deficient += usize::from(rank < sys.state_dim());
        if report.strictly_positive {
            spd += 1;
            let mu = report.min_eigenvalue;
            let lambdas: Vec<f64> = (0..7).map(|k| mu * 10f64.powi(2 - k)).collect();
            let table = controllability_report(&bundle, &lambdas).map_err(|e| e.to_string())?;
            let at = controllability_report(&bundle, &[1e-3 * mu]).map_err(|e| e.to_string())?.rows[0].norm;
            resolvent_ok &= table.norms_decreasing() && at <= 1e-3 / (1e-3 + 1.0) * (1.0 + 1e-9);
        }
    }
    check(
        agree == systems.len() && resolvent_ok,
        format!(
            "{agree}/{} positivity-rank agreements ({deficient} rank-deficient), {spd} SPD resolvent tables ok: {resolvent_ok}",
            systems.len()
        ),
    )
}

fn time_stepping_oracle(suite: &[RandomProblem]) -> Outcome {
    let eval: Vec<f64> = (0..=40).map(|j| j as f64 / 40.0).collect();
    let mut worst: f64 = 0.0;
    for p in suite {
        let sys = &p.system;
        let sched = sys.schedule();
        let (a0, a1) = (p.a0.clone(), p.a1.clone());
        let a = move |t: f64| &a0 + &a1 * (2.0 * t).cos();
        let phi = DVector::from_fn(sys.state_dim(), |i, _| 0.4 - 0.15 * i as f64);
        let control = synthesize_control(sys, &phi).map_err(|e| e.to_string())?;
        let traj = linear_mild_solution(sys, &control, &p.x0, &eval).map_err(|e| e.to_string())?;
        let (states, terminal) = common::rk4_impulsive(
            &a, sys.input(), &*control.u, sched.times(), sched.d(), sched.e(), &control.v, &p.x0, 1.0, 640, &eval,
        );
        worst = worst.max((&traj.terminal - terminal).amax());
        for (x, y) in traj.states.iter().zip(&states) {
            worst = worst.max((x - y).amax());
        }
    }
    check(worst <= 1e-6, format!("RK4 at 10× the step count, sup-norm gap {worst:.2e}"))
}

fn semilinear_identity(suite: &[RandomProblem]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut literal: f64 = 0.0;
    for p in suite.iter().step_by(5) {
        let sys = p.system.clone().with_semilinear(impulsim_cli::build::bounded_sine_terms(1.0));
        let bundle = assemble_gramians(&sys).map_err(|e| e.to_string())?;
        let rows = verify_semilinear_controllability(&sys, &bundle, &p.x0, &p.h, &[1.0, 1e-2], SolveOptions::default())
            .map_err(|e| e.to_string())?;
        for (_, r) in rows {
            let r = r.map_err(|e| e.to_string())?;
            worst = worst.max(r.identity_residual / (1.0 + p.h.norm()));
            literal = literal.max(r.literal_sign_residual / (1.0 + p.h.norm()));
        }
    }
    let lambdas = [1.0, 1e-1, 1e-2, 1e-3, 1e-4];
    let demo = run_demo(&HeatConfig::default(), &lambdas, SolveOptions::default(), None).map_err(|e| e.to_string())?;
    let decreasing = demo.rows.len() == 5 && demo.rows.windows(2).all(|w| w[1].terminal_error < w[0].terminal_error);
    let heat_worst = demo.rows.iter().map(|r| r.identity_residual).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && heat_worst <= 1e-6 && decreasing && secs < 60.0,
        format!(
            "x(b) − h = −λφ̂ to {:.2e}; heat demo converged at 5 λ, error column decreasing: {decreasing}; {secs:.2} s \
             (with the opposite sign the residual is {literal:.2e})",
            worst.max(heat_worst)
        ),
    )
}

fn heat_constants(tmp: &Path) -> Outcome {
    use std::f64::consts::E;
    let out = tmp.join("c9");
    cli(&preset_file(tmp, "heat-sec4"), &out, Command::CheckConstants)?;
    let text = std::fs::read_to_string(out.join("constants.csv")).map_err(|e| e.to_string())?;
    let value = |key: &str| -> f64 {
        csv_body(&text)
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")).map(|v| v.parse().unwrap()))
            .unwrap_or(f64::NAN)
    };
    let exact = value("L_f") == 0.1
        && value("L_xi") == E / 25.0
        && value("C_f") == 0.1
        && value("C_xi") == E / 5.0
        && value("q_star") == E - 1.0;
    let k1 = value("k1");
    let gap = (k1 - (0.1 + (E - 1.0) * E / 25.0)).abs();
    check(exact && gap <= 1e-10, format!("declared constants exact: {exact}, k1 = {k1:.10} (gap {gap:.1e})"))
}

fn determinism(tmp: &Path) -> Outcome {
    let mut compared = 0;
    for (preset, command, files) in [
        ("heat-sec4", Command::HeatDemo, vec!["constants", "sweep", "profile"]),
        ("random", Command::Synthesize, vec!["terminal_errors", "control", "impulse_control"]),
        ("random", Command::Semilinear, vec!["semilinear", "constants"]),
    ] {
        let cfg = preset_file(tmp, preset);
        let (a, b) = (tmp.join(format!("d-{preset}-a")), tmp.join(format!("d-{preset}-b")));
        cli(&cfg, &a, command)?;
        cli(&cfg, &b, command)?;
        // The echoed configuration must reproduce the run on its own.
        let c = tmp.join(format!("d-{preset}-c"));
        cli(&a.join("resolved_config.toml"), &c, command)?;
        for f in files {
            let read = |d: &Path| std::fs::read_to_string(d.join(format!("{f}.csv"))).map(|t| csv_body(&t));
            let (ta, tb, tc) = (read(&a), read(&b), read(&c));
            match (ta, tb, tc) {
                (Ok(x), Ok(y), Ok(z)) if x == y && x == z => compared += 1,
                _ => return Err(format!("{preset}/{f}.csv differs between runs")),
            }
        }
    }
    Ok(format!("{compared} CSV bodies byte-identical across repeated and echoed-config runs"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let suite = common::random_suite();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("terminal-error identity on random systems", Box::new(|| terminal_error_identity(&suite))),
        ("scalar closed form", Box::new(|| scalar_closed_form(tmp.path()))),
        ("MMᵀ factorization of W", Box::new(|| factorization(&suite))),
        ("adjoint duality", Box::new(|| duality(&suite))),
        ("cocycle and identity", Box::new(cocycle)),
        ("positivity certificates", Box::new(|| certificates(&suite))),
        ("time-stepping oracle", Box::new(|| time_stepping_oracle(&suite))),
        ("semilinear terminal identity and heat demo", Box::new(|| semilinear_identity(&suite))),
        ("heat constants", Box::new(|| heat_constants(tmp.path()))),
        ("determinism", Box::new(|| determinism(tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
