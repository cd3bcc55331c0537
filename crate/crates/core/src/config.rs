//! Run configuration (TOML) with strict parsing and collected validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::ConvergenceThresholds;
use crate::dynamics::{DEFAULT_CFL, DEFAULT_FILTER};
use crate::geometry::GeometrySpec;
use crate::physics::PhysicalConstants;

/// Largest filter coefficient accepted; larger values make the explicit
/// filter the binding stability constraint.
pub const MAX_FILTER: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for the random initial perturbation.
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometrySpec,
    pub constants: PhysicalConstants,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    /// Mean density; the fluid mass is `density * |C|`.
    pub density: f64,
    /// Maximum of `|v|` in the initial perturbation.
    pub v_amplitude: f64,
    /// Maximum of `|rho - rho_bar| / rho_bar` in the initial perturbation.
    pub rho_amplitude: f64,
    /// Initial angular momentum; excludes `omega`.
    pub angular_momentum: Option<[f64; 3]>,
    /// Initial angular velocity; excludes `angular_momentum`.
    pub omega: Option<[f64; 3]>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { density: 1.0, v_amplitude: 0.0, rho_amplitude: 0.0, angular_momentum: None, omega: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSpec {
    pub cfl: f64,
    pub filter: f64,
    /// Fixed time step; when absent the step is recomputed from the CFL bound.
    pub dt: Option<f64>,
    pub max_steps: u64,
    pub max_time: Option<f64>,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self { cfl: DEFAULT_CFL, filter: DEFAULT_FILTER, dt: None, max_steps: 10_000, max_time: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSpec {
    /// Emit a CSV row every this many steps.
    pub output_every: u64,
    pub stop_on_convergence: bool,
    pub convergence: ConvergenceThresholds,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self { output_every: 10, stop_on_convergence: true, convergence: ConvergenceThresholds::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub directory: PathBuf,
    /// Write a checkpoint every this many steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), checkpoint_every: 0 }
    }
}

fn check(out: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        out.push(msg());
    }
}

impl RunConfig {
    /// Every violated constraint, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self.constants.violations();
        if let Err(e) = self.geometry.build() {
            out.push(e.to_string());
        }
        let init = &self.initial;
        check(&mut out, init.density > 0.0 && init.density.is_finite(), || {
            format!("initial.density must be positive, got {}", init.density)
        });
        check(&mut out, init.v_amplitude >= 0.0 && init.v_amplitude.is_finite(), || {
            format!("initial.v_amplitude must be non-negative, got {}", init.v_amplitude)
        });
        check(&mut out, init.rho_amplitude >= 0.0 && init.rho_amplitude < 1.0, || {
            format!("initial.rho_amplitude must lie in [0, 1), got {}", init.rho_amplitude)
        });
        check(&mut out, !(init.angular_momentum.is_some() && init.omega.is_some()), || {
            "initial.angular_momentum and initial.omega are mutually exclusive".to_string()
        });
        for (name, v) in [("angular_momentum", init.angular_momentum), ("omega", init.omega)] {
            if let Some(v) = v {
                check(&mut out, v.iter().all(|x| x.is_finite()), || format!("initial.{name} must be finite"));
            }
        }
        let int = &self.integrator;
        check(&mut out, int.cfl > 0.0 && int.cfl <= 1.0, || format!("integrator.cfl must lie in (0, 1], got {}", int.cfl));
        check(&mut out, int.filter >= 0.0 && int.filter <= MAX_FILTER, || {
            format!("integrator.filter must lie in [0, {MAX_FILTER}], got {}", int.filter)
        });
        if let Some(dt) = int.dt {
            check(&mut out, dt > 0.0 && dt.is_finite(), || format!("integrator.dt must be positive, got {dt}"));
        }
        if let Some(t) = int.max_time {
            check(&mut out, t > 0.0, || format!("integrator.max_time must be positive, got {t}"));
        }
        let d = &self.diagnostics;
        check(&mut out, d.output_every > 0, || "diagnostics.output_every must be at least 1".to_string());
        check(&mut out, d.convergence.v_l2 > 0.0 && d.convergence.variation > 0.0, || {
            "diagnostics.convergence thresholds must be positive".to_string()
        });
        check(&mut out, d.convergence.window > 0, || "diagnostics.convergence.window must be at least 1".to_string());
        out
    }

    /// Resolved configuration, defaults included, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text)?;
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[geometry]
sides = [0.3, 0.4, 0.5]
grid = [8, 8, 8]
body_mass = 1.0
body_inertia = [0.02, 0.03, 0.04, 0.0, 0.0, 0.0]

[constants]
a = 10.0
gamma = 1.4
mu = 0.05
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.integrator, IntegratorSpec::default());
        assert_eq!(cfg.initial, InitialSpec::default());
        assert_eq!(cfg.constants.lambda, 0.0);
        let echoed = cfg.to_toml();
        assert!(echoed.contains("cfl = 0.4"));
        assert!(echoed.contains("window = 100"));
        assert_eq!(parse_config(&echoed).unwrap(), cfg);
    }

    #[test]
    fn gamma_below_one_rejected() {
        let text = MINIMAL.replace("gamma = 1.4", "gamma = 0.9");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("gamma must exceed 1"), "{err}");
    }

    #[test]
    fn violations_are_listed_together() {
        let text = MINIMAL.replace("gamma = 1.4", "gamma = 0.9").replace("mu = 0.05", "mu = -1.0");
        match parse_config(&text) {
            Err(ConfigError::Invalid(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("mu = 0.05", "mu = 0.05\nnu = 1.0");
        assert!(matches!(parse_config(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn duplicate_section_reports_line() {
        let text = format!("{MINIMAL}\n[constants]\na = 1.0\ngamma = 2.0\nmu = 1.0\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }
}
