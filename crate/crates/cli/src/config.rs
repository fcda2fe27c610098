//! TOML run configuration.
//!
//! A file may name a `preset`; its table is expanded first and the file's own
//! keys are merged over it. Unknown keys are rejected at every level. After
//! [`RunConfig::resolve`] every field the selected system kind uses is
//! explicit, so the echoed file reproduces the run on its own.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;
use crate::presets::preset_table;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub system: SystemBlock,
    #[serde(default)]
    pub schedule: ScheduleBlock,
    #[serde(default)]
    pub semilinear: SemilinearBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// `A(t) = a0 + cos(2t) a1` stepped on a grid.
    Dense,
    /// Diagonal modes `μ_n a(t)`.
    Spectral,
    /// The sine-basis heat problem.
    Heat,
    /// A seeded random dense system.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Magnus4,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Coefficient {
    /// `a(t) = 1 + √t`.
    OnePlusSqrt,
    Constant { value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SystemKind>,
    /// Dense generator, constant part (rows).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<Vec<Vec<f64>>>,
    /// Dense generator, `cos(2t)` part (rows).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<Vec<Vec<f64>>>,
    /// Input operator `B` (rows).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// Spectral eigenvalues; defaults to `−n²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<Coefficient>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_intervals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulses: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncontrollable: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_bound: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// `D_k` (rows), one per impulse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<Vec<f64>>>>,
    /// `E_k` (rows), one per impulse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityPreset {
    Off,
    /// The heat-problem `f`, `ξ`, `q`; requires `system.kind = "heat"`.
    Heat,
    /// `f = 0.1 sin(x + t)`, `ξ = 0.05 tanh x`, `q = e^{−τ}` componentwise.
    BoundedSine,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemilinearBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<NonlinearityPreset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulatedControl {
    Zero,
    /// The regularized control for the smallest λ.
    Regularized,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes_per_panel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panels_per_interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<SimulatedControl>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

/// Recursively overlays `top` on `base`; tables merge, everything else is
/// replaced.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parses TOML text, expands the preset and fills defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_err(format!("invalid TOML: {}", e.message())))?;
        let table = match user.get("preset") {
            None => user,
            Some(Value::String(name)) => {
                let mut base = preset_table(name)?;
                merge(&mut base, user);
                base
            }
            Some(_) => return Err(config_err("key `preset`: expected a string")),
        };
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("schema violation: {}", e.message())))?;
        cfg.resolve()
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Io(format!("cannot serialize config: {e}")))
    }

    pub fn kind(&self) -> SystemKind {
        self.system.kind.expect("resolved config has a system kind")
    }

    /// Checks the schema version and fills every default the system kind
    /// needs.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "key `schema_version`: expected {SCHEMA_VERSION}, found {}",
                self.schema_version
            )));
        }
        let kind = self
            .system
            .kind
            .ok_or_else(|| config_err("key `system.kind`: expected one of dense, spectral, heat, random"))?;
        let s = &mut self.system;
        let sch = &mut self.schedule;
        sch.horizon.get_or_insert(1.0);
        match kind {
            SystemKind::Dense => {
                let a0 = s
                    .a0
                    .clone()
                    .ok_or_else(|| config_err("key `system.a0`: required for a dense system"))?;
                let n = a0.len();
                s.a1.get_or_insert_with(|| vec![vec![0.0; n]; n]);
                s.substeps.get_or_insert(64);
                s.scheme.get_or_insert(Scheme::Magnus4);
                fill_input_and_jumps(s, sch, n)?;
            }
            SystemKind::Spectral => {
                let n = s
                    .modes
                    .ok_or_else(|| config_err("key `system.modes`: required for a spectral system"))?;
                s.eigenvalues
                    .get_or_insert_with(|| (1..=n).map(|k| -((k * k) as f64)).collect());
                s.coefficient.get_or_insert(Coefficient::Constant { value: 1.0 });
                fill_input_and_jumps(s, sch, n)?;
            }
            SystemKind::Heat => {
                s.modes.get_or_insert(8);
                s.coefficient.get_or_insert(Coefficient::OnePlusSqrt);
                s.spatial_intervals.get_or_insert(128);
                sch.times.get_or_insert_with(|| vec![0.5]);
                if s.input.is_some() || sch.d.is_some() || sch.e.is_some() {
                    return Err(config_err(
                        "keys `system.input`, `schedule.d`, `schedule.e`: the heat system uses identities",
                    ));
                }
            }
            SystemKind::Random => {
                s.state_dim.get_or_insert(3);
                s.control_dim.get_or_insert(1);
                s.impulses.get_or_insert(2);
                s.uncontrollable.get_or_insert(0);
                s.substeps.get_or_insert(64);
                if sch.times.is_some() || sch.d.is_some() || sch.e.is_some() {
                    return Err(config_err(
                        "keys `schedule.times`, `schedule.d`, `schedule.e`: a random system draws its own schedule",
                    ));
                }
            }
        }
        let sl = self.semilinear.preset.get_or_insert(NonlinearityPreset::Off);
        if *sl == NonlinearityPreset::Heat && kind != SystemKind::Heat {
            return Err(config_err(
                "blocks `semilinear` and `system` conflict: preset `heat` needs system.kind = \"heat\"",
            ));
        }
        let ex = &mut self.experiment;
        ex.lambdas.get_or_insert_with(impulsim_core::control::default_lambdas);
        ex.tol.get_or_insert(1e-8);
        ex.max_iter.get_or_insert(200);
        ex.relaxation.get_or_insert(1.0);
        ex.nodes_per_panel.get_or_insert(8);
        ex.panels_per_interval.get_or_insert(16);
        ex.seed.get_or_insert(7);
        ex.eval_points.get_or_insert(101);
        ex.control.get_or_insert(SimulatedControl::Regularized);
        let lambdas = ex.lambdas.as_ref().expect("filled above");
        if lambdas.is_empty() {
            return Err(config_err("key `experiment.lambdas`: expected a nonempty list"));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(config_err(format!("key `experiment.lambdas`: λ must be positive, found {l}")));
        }
        if lambdas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(config_err("key `experiment.lambdas`: expected a strictly decreasing list"));
        }
        if ex.eval_points.expect("filled above") < 2 {
            return Err(config_err("key `experiment.eval_points`: expected at least 2"));
        }
        self.output.dir.get_or_insert_with(|| "out".to_string());
        self.output.prefix.get_or_insert_with(String::new);
        Ok(self)
    }
}

fn fill_input_and_jumps(s: &mut SystemBlock, sch: &mut ScheduleBlock, n: usize) -> Result<(), CliError> {
    let input = s
        .input
        .get_or_insert_with(|| (0..n).map(|i| vec![if i == 0 { 1.0 } else { 0.0 }]).collect());
    let p = input.first().map_or(0, Vec::len);
    let m = sch.times.get_or_insert_with(Vec::new).len();
    sch.d.get_or_insert_with(|| vec![vec![vec![0.0; n]; n]; m]);
    sch.e.get_or_insert_with(|| vec![vec![vec![0.0; p]; n]; m]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_preset_resolves_defaults() {
        let cfg = RunConfig::from_toml_str("schema_version = 1\npreset = \"heat-sec4\"\n").unwrap();
        assert_eq!(cfg.kind(), SystemKind::Heat);
        assert_eq!(cfg.system.modes, Some(8));
        assert_eq!(cfg.schedule.times, Some(vec![0.5]));
        assert_eq!(cfg.semilinear.preset, Some(NonlinearityPreset::Heat));
        assert_eq!(cfg.system.coefficient, Some(Coefficient::OnePlusSqrt));
    }

    #[test]
    fn user_keys_override_preset() {
        let cfg = RunConfig::from_toml_str(
            "schema_version = 1\npreset = \"heat-sec4\"\n[system]\nmodes = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.system.modes, Some(4));
        assert_eq!(cfg.system.spatial_intervals, Some(128));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("schema_version = 1\npreset = \"scalar-a0\"\n[system]\nmodez = 3\n")
            .unwrap_err();
        assert!(err.to_string().contains("modez"), "{err}");
        let err = RunConfig::from_toml_str("schema_version = 2\npreset = \"scalar-a0\"\n").unwrap_err();
        assert!(err.to_string().contains("schema_version"));
        assert!(RunConfig::from_toml_str("schema_version = 1\npreset = \"nope\"\n").is_err());
    }

    #[test]
    fn conflicting_blocks_are_named() {
        let err = RunConfig::from_toml_str(
            "schema_version = 1\npreset = \"scalar-a0\"\n[semilinear]\npreset = \"heat\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("semilinear") && err.to_string().contains("system"));
    }

    #[test]
    fn echoed_config_round_trips() {
        for preset in ["scalar-a0", "heat-sec4", "random"] {
            let cfg = RunConfig::from_toml_str(&format!("schema_version = 1\npreset = \"{preset}\"\n")).unwrap();
            let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            assert_eq!(cfg, again);
        }
    }
}
