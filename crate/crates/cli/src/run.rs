//! Subcommand execution.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use impulsim_core::control::{lambda_sweep, regularized_control, terminal_error_linear};
use impulsim_core::gramian::{assemble_gramians, controllability_report};
use impulsim_core::heat::{constants_table, run_demo, write_demo};
use impulsim_core::impulse_flow::{linear_mild_solution, ControlInput};
use impulsim_core::output::{fmt_f64, CsvTable};
use impulsim_core::semilinear::{check_existence_constants, verify_semilinear_controllability, SolveOptions};

use crate::build::{build_problem, Problem};
use crate::config::{RunConfig, SimulatedControl, SystemKind};
use crate::error::CliError;

/// Name of the echoed configuration inside the output directory.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Parser)]
#[command(name = "impulsim", version, about = "Controllability experiments for impulsive evolution systems")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Trajectory of the linear system under the zero or regularized control.
    Simulate,
    /// Gramian, its eigenvalues and the resolvent norm table.
    Gramian,
    /// Regularized control samples and terminal errors.
    Synthesize,
    /// Terminal error and control size over the λ list.
    Sweep,
    /// Fixed-point solves over the λ list with the existence constants.
    Semilinear,
    /// Existence constants at the smallest λ.
    CheckConstants,
    /// The heat example end to end.
    HeatDemo,
}

/// Files written and summary lines.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

struct Out<'a> {
    dir: &'a Path,
    prefix: &'a str,
    report: RunReport,
}

impl Out<'_> {
    fn write(&mut self, name: &str, table: &CsvTable) -> Result<(), CliError> {
        let path = self.dir.join(format!("{}{name}.csv", self.prefix));
        table.write(&path)?;
        self.report.files.push(path);
        Ok(())
    }

    fn say(&mut self, line: String) {
        self.report.summary.push(line);
    }
}

fn solve_options(cfg: &RunConfig) -> SolveOptions {
    SolveOptions {
        tol: cfg.experiment.tol.expect("resolved"),
        max_iter: cfg.experiment.max_iter.expect("resolved"),
        relaxation: cfg.experiment.relaxation.expect("resolved"),
    }
}

fn lambdas(cfg: &RunConfig) -> &[f64] {
    cfg.experiment.lambdas.as_deref().expect("resolved")
}

fn smallest_lambda(cfg: &RunConfig) -> f64 {
    *lambdas(cfg).last().expect("nonempty after resolve")
}

fn eval_times(cfg: &RunConfig, horizon: f64) -> Vec<f64> {
    let k = cfg.experiment.eval_points.expect("resolved");
    (0..k)
        .map(|i| if i + 1 == k { horizon } else { horizon * i as f64 / (k - 1) as f64 })
        .collect()
}

fn header(first: &[&str], stem: &str, n: usize) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain((1..=n).map(|i| format!("{stem}_{i}")))
        .collect()
}

fn row(first: &[f64], v: &DVector<f64>) -> Vec<f64> {
    first.iter().copied().chain(v.iter().copied()).collect()
}

/// Runs one subcommand on a resolved configuration, writing CSV files into
/// `dir`.
pub fn execute(command: Command, cfg: &RunConfig, dir: &Path) -> Result<RunReport, CliError> {
    let prefix = cfg.output.prefix.as_deref().unwrap_or("");
    let mut out = Out {
        dir,
        prefix,
        report: RunReport::default(),
    };
    let problem = build_problem(cfg)?;
    let Problem { system, x0, h, heat } = &problem;
    let n = system.state_dim();
    match command {
        Command::Simulate => {
            let control = match cfg.experiment.control.expect("resolved") {
                SimulatedControl::Zero => ControlInput::zero(system),
                SimulatedControl::Regularized => {
                    let bundle = assemble_gramians(system)?;
                    regularized_control(system, &bundle, x0, h, smallest_lambda(cfg))?.control
                }
            };
            let times = eval_times(cfg, system.horizon());
            let traj = linear_mild_solution(system, &control, x0, &times)?;
            let mut t = CsvTable::new(header(&["t"], "x", n));
            for (ti, x) in traj.eval_times.iter().zip(&traj.states) {
                t.push_numeric(&row(&[*ti], x));
            }
            out.write("trajectory", &t)?;
            let mut post = CsvTable::new(header(&["k", "t"], "x", n));
            for (k, (tk, x)) in system.schedule().times().iter().zip(&traj.post_impulse).enumerate() {
                post.push_numeric(&row(&[(k + 1) as f64, *tk], x));
            }
            out.write("post_impulse", &post)?;
            out.say(format!("terminal state norm {:.6e}", traj.terminal.norm()));
        }
        Command::Gramian => {
            let bundle = assemble_gramians(system)?;
            let report = controllability_report(&bundle, lambdas(cfg))?;
            let mut w = CsvTable::new(header(&[], "w", n));
            for i in 0..n {
                w.push_numeric(&bundle.w.row(i).iter().copied().collect::<Vec<_>>());
            }
            out.write("gramian", &w)?;
            let mut ev = CsvTable::new(["index", "eigenvalue"]);
            for (i, mu) in bundle.eigenvalues().iter().enumerate() {
                ev.push_numeric(&[(i + 1) as f64, *mu]);
            }
            out.write("eigenvalues", &ev)?;
            let mut rt = CsvTable::new(["lambda", "resolvent_norm"]);
            for r in &report.rows {
                rt.push_numeric(&[r.lambda, r.norm]);
            }
            out.write("resolvent", &rt)?;
            let mut cert = CsvTable::new(["name", "value"]);
            cert.push(vec!["min_eigenvalue".into(), fmt_f64(report.min_eigenvalue)]);
            cert.push(vec!["w_norm".into(), fmt_f64(report.w_norm)]);
            cert.push(vec!["strictly_positive".into(), report.strictly_positive.to_string()]);
            cert.push(vec!["norms_decreasing".into(), report.norms_decreasing().to_string()]);
            out.write("certificate", &cert)?;
            out.say(format!(
                "min eigenvalue {:.6e}, strictly positive {}",
                report.min_eigenvalue, report.strictly_positive
            ));
        }
        Command::Synthesize => {
            let bundle = assemble_gramians(system)?;
            let mut te = CsvTable::new(["lambda", "component", "simulated", "formula"]);
            for &lambda in lambdas(cfg) {
                let errs = terminal_error_linear(system, &bundle, x0, h, lambda)?;
                for i in 0..n {
                    te.push(vec![
                        fmt_f64(lambda),
                        (i + 1).to_string(),
                        fmt_f64(errs.simulated[i]),
                        fmt_f64(errs.formula[i]),
                    ]);
                }
                out.say(format!(
                    "λ = {lambda:.1e}: |simulated − formula| = {:.3e}",
                    (&errs.simulated - &errs.formula).norm()
                ));
            }
            out.write("terminal_errors", &te)?;
            let rc = regularized_control(system, &bundle, x0, h, smallest_lambda(cfg))?;
            let mut ct = CsvTable::new(header(&["t"], "u", system.control_dim()));
            for t in eval_times(cfg, system.horizon()) {
                ct.push_numeric(&row(&[t], &rc.control.eval(t)));
            }
            out.write("control", &ct)?;
            let mut it = CsvTable::new(["k", "t", "component", "value"]);
            for (k, (tk, v)) in system.schedule().times().iter().zip(&rc.control.v).enumerate() {
                for (c, value) in v.iter().enumerate() {
                    it.push(vec![(k + 1).to_string(), fmt_f64(*tk), (c + 1).to_string(), fmt_f64(*value)]);
                }
            }
            out.write("impulse_control", &it)?;
        }
        Command::Sweep => {
            let bundle = assemble_gramians(system)?;
            let rows = lambda_sweep(system, &bundle, x0, h, lambdas(cfg))?;
            let mut t = CsvTable::new(["lambda", "terminal_error", "control_l2_norm", "impulse_control_max_norm"]);
            for r in &rows {
                t.push_numeric(&[r.lambda, r.terminal_error_norm, r.control_l2_norm, r.impulse_control_max_norm]);
                out.say(format!("λ = {:.1e}: terminal error {:.6e}", r.lambda, r.terminal_error_norm));
            }
            out.write("sweep", &t)?;
        }
        Command::Semilinear => {
            let bundle = assemble_gramians(system)?;
            let constants = check_existence_constants(system, smallest_lambda(cfg), h.norm())?;
            out.write("constants", &constants_table(&constants))?;
            let rows = verify_semilinear_controllability(system, &bundle, x0, h, lambdas(cfg), solve_options(cfg))?;
            let mut t = CsvTable::new([
                "lambda",
                "terminal_error",
                "lambda_phi_norm",
                "identity_residual",
                "literal_sign_residual",
                "iterations",
                "integral_residual",
            ]);
            let mut failure = None;
            for (lambda, r) in rows {
                match r {
                    Ok(r) => {
                        t.push(vec![
                            fmt_f64(r.lambda),
                            fmt_f64(r.terminal_error),
                            fmt_f64(r.lambda_phi_norm),
                            fmt_f64(r.identity_residual),
                            fmt_f64(r.literal_sign_residual),
                            r.iterations.to_string(),
                            fmt_f64(r.integral_residual),
                        ]);
                        out.say(format!(
                            "λ = {lambda:.1e}: terminal error {:.6e} after {} iterations",
                            r.terminal_error, r.iterations
                        ));
                    }
                    Err(e) => {
                        out.say(format!("λ = {lambda:.1e}: {e}"));
                        failure.get_or_insert(e);
                    }
                }
            }
            out.write("semilinear", &t)?;
            if let Some(e) = failure {
                return Err(e.into());
            }
        }
        Command::CheckConstants => {
            let constants = check_existence_constants(system, smallest_lambda(cfg), h.norm())?;
            out.write("constants", &constants_table(&constants))?;
            out.say(format!(
                "k1 = {:.6}, k2 = {:.6}, C1 {}, C2 {}",
                constants.k_1, constants.k_2, constants.condition_c1, constants.condition_c2
            ));
        }
        Command::HeatDemo => {
            let hc = match (cfg.kind(), heat) {
                (SystemKind::Heat, Some(hc)) => hc,
                _ => {
                    return Err(CliError::Config(
                        "key `system.kind`: heat-demo needs kind = \"heat\"".into(),
                    ))
                }
            };
            let outcome = run_demo(hc, lambdas(cfg), solve_options(cfg), None)?;
            write_demo(&outcome, dir, prefix)?;
            for name in ["constants", "sweep", "profile"] {
                out.report.files.push(dir.join(format!("{prefix}{name}.csv")));
            }
            for r in &outcome.rows {
                out.say(format!(
                    "λ = {:.1e}: terminal error {:.6e} after {} iterations",
                    r.lambda, r.terminal_error, r.iterations
                ));
            }
        }
    }
    Ok(out.report)
}

/// Loads the configuration, applies command-line overrides, echoes the
/// resolved configuration and runs the subcommand.
pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = Some(seed);
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = Some(dir.to_string_lossy().into_owned());
    }
    let dir = PathBuf::from(cfg.output.dir.clone().expect("resolved"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let echoed = dir.join(RESOLVED_CONFIG);
    std::fs::write(&echoed, cfg.to_toml_string()?)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", echoed.display())))?;
    let mut report = execute(cli.command, &cfg, &dir)?;
    report.files.insert(0, echoed);
    Ok(report)
}

/// Process entry: returns the exit code. Errors go to stderr as one JSON line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                print!("{e}");
                return 0;
            }
            let err = CliError::Config(e.to_string().lines().next().unwrap_or("").to_string());
            eprintln!("{}", err.json_line());
            return err.exit_code();
        }
    };
    match run(&cli) {
        Ok(report) => {
            if !cli.quiet {
                for line in &report.summary {
                    println!("{line}");
                }
                for f in &report.files {
                    println!("wrote {}", f.display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.json_line());
            e.exit_code()
        }
    }
}
