//! Named configuration presets.

use toml::Table;

use crate::error::CliError;

/// `x' = u` on `[0, 1]`, one inert impulse at `1/2`, `x₀ = 0`, `h = 1`.
const SCALAR_A0: &str = r#"
schema_version = 1

[system]
kind = "dense"
a0 = [[0.0]]
input = [[1.0]]
substeps = 4

[schedule]
horizon = 1.0
times = [0.5]
d = [[[0.0]]]
e = [[[0.0]]]

[experiment]
lambdas = [1.0, 0.1, 0.01]
x0 = [0.0]
target = [1.0]
"#;

/// Eight sine modes, `a(t) = 1 + √t`, identity jumps at `1/2`, heat
/// nonlinearities.
const HEAT_SEC4: &str = r#"
schema_version = 1

[system]
kind = "heat"
modes = 8
coefficient = { kind = "one-plus-sqrt" }
spatial_intervals = 128

[schedule]
horizon = 1.0
times = [0.5]

[semilinear]
preset = "heat"

[experiment]
lambdas = [1.0, 0.1, 0.01, 0.001, 0.0001]
"#;

/// A seeded random dense system.
const RANDOM: &str = r#"
schema_version = 1

[system]
kind = "random"
state_dim = 3
control_dim = 1
impulses = 2
uncontrollable = 0
substeps = 64

[schedule]
horizon = 1.0

[experiment]
lambdas = [0.1, 0.001]
seed = 7
"#;

pub const PRESET_NAMES: [&str; 3] = ["scalar-a0", "heat-sec4", "random"];

pub fn preset_table(name: &str) -> Result<Table, CliError> {
    let text = match name {
        "scalar-a0" => SCALAR_A0,
        "heat-sec4" => HEAT_SEC4,
        "random" => RANDOM,
        other => {
            return Err(CliError::Config(format!(
                "key `preset`: unknown preset {other:?}, expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    text.parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("preset {name}: {}", e.message())))
}
