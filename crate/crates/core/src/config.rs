//! Scenario files.
//!
//! A scenario is a TOML document with one table per concern:
//!
//! ```toml
//! [params]
//! theta = 0.0073
//! xi = 0.003
//! eta = 0.001
//! rho = 0.01
//! gamma = 0.02
//!
//! [initial]
//! s = 7.2
//! i = 0.1
//! r = 0.0
//!
//! [measure]
//! atoms = [{ amplitude = 0.001, rate = 1.0 }]
//!
//! [integrator]            # optional; defaults shown
//! dt = 0.1
//! t_end = 600.0
//! record_every = 10
//! scheme = "jump_euler"   # or "deterministic_rk4"
//!
//! [run]                   # optional; defaults shown
//! n_paths = 1000
//! master_seed = 1
//! # phi_override = 9.126e-4
//!
//! [sweep]                 # only needed by the `sweep` command
//! parameter = "xi"        # epsilon | theta | xi | psi0
//! grid = [0.001, 0.002, 0.003]
//! ```
//!
//! Unknown keys are rejected anywhere in the document.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EpidemicParams, JumpMeasure, SirState};
use crate::montecarlo::{Scenario, SweepParameter};
use crate::sde::IntegratorConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

impl ConfigError {
    fn invalid(key: &'static str, message: impl ToString) -> Self {
        ConfigError::Invalid {
            key,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "RunSection::default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "RunSection::default_master_seed")]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_override: Option<f64>,
}

impl RunSection {
    pub const fn default_n_paths() -> usize {
        1000
    }
    pub const fn default_master_seed() -> u64 {
        1
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_paths: Self::default_n_paths(),
            master_seed: Self::default_master_seed(),
            phi_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
}

/// A fully validated scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: EpidemicParams,
    pub initial: SirState,
    #[serde(default)]
    pub measure: JumpMeasure,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params
            .validate()
            .map_err(|e| ConfigError::invalid("params", e))?;
        self.initial
            .validate()
            .map_err(|e| ConfigError::invalid("initial", e))?;
        self.measure
            .validate()
            .map_err(|e| ConfigError::invalid("measure", e))?;
        self.integrator
            .validate()
            .map_err(|e| ConfigError::invalid("integrator", e))?;
        if self.run.n_paths == 0 {
            return Err(ConfigError::invalid(
                "run.n_paths",
                "n_paths must be at least 1",
            ));
        }
        if let Some(phi) = self.run.phi_override {
            if !phi.is_finite() {
                return Err(ConfigError::invalid(
                    "run.phi_override",
                    format!("phi_override must be finite (got {phi})"),
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() {
                return Err(ConfigError::invalid("sweep.grid", "grid must not be empty"));
            }
            if let Some(w) = sweep.grid.windows(2).find(|w| !(w[1] > w[0])) {
                return Err(ConfigError::invalid(
                    "sweep.grid",
                    format!("grid must be strictly increasing ({} then {})", w[0], w[1]),
                ));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            params: self.params,
            initial: self.initial,
            measure: self.measure.clone(),
            integrator: self.integrator,
            phi_override: self.run.phi_override,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let config: ScenarioConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::Scheme;

    const BASE: &str = r#"
[params]
theta = 0.0073
xi = 0.003
eta = 0.001
rho = 0.01
gamma = 0.02

[initial]
s = 7.2
i = 0.1
r = 0.0

[measure]
atoms = [{ amplitude = 0.001, rate = 1.0 }]
"#;

    #[test]
    fn reference_document_with_defaults() {
        let c = parse_config(BASE).unwrap();
        assert_eq!(c.params, EpidemicParams::reference());
        assert_eq!(c.measure.atoms.len(), 1);
        assert_eq!(c.integrator.dt, 0.1);
        assert_eq!(c.integrator.t_end, 600.0);
        assert_eq!(c.integrator.scheme, Scheme::JumpEuler);
        assert_eq!(c.run.n_paths, 1000);
        assert_eq!(c.run.phi_override, None);
        assert!(c.sweep.is_none());
    }

    #[test]
    fn zero_eta_is_rejected_by_name() {
        let err = parse_config(&BASE.replace("eta = 0.001", "eta = 0.0")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Invalid { key: "params", .. }));
        assert!(msg.contains("eta must be positive"), "{msg}");
    }

    #[test]
    fn amplitude_below_minus_one_is_rejected() {
        let err = parse_config(&BASE.replace("amplitude = 0.001", "amplitude = -1.5")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("amplitude -1.5 must exceed -1"), "{msg}");
    }

    #[test]
    fn unknown_keys_and_syntax_errors_carry_context() {
        let err = parse_config(&format!("{BASE}\n[run]\nn_path = 3\n")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(msg.contains("n_path"), "{msg}");

        let err = parse_config(&BASE.replace("xi = 0.003", "xi = = 0.003")).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");

        let err = parse_config("[params]\ntheta = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("missing field"), "{err}");
    }

    #[test]
    fn run_and_sweep_sections_validate() {
        let zero = format!("{BASE}\n[run]\nn_paths = 0\n");
        assert!(matches!(
            parse_config(&zero),
            Err(ConfigError::Invalid {
                key: "run.n_paths",
                ..
            })
        ));
        let grid = format!("{BASE}\n[sweep]\nparameter = \"xi\"\ngrid = [0.002, 0.001]\n");
        assert!(matches!(
            parse_config(&grid),
            Err(ConfigError::Invalid {
                key: "sweep.grid",
                ..
            })
        ));
        let ok = format!(
            "{BASE}\n[run]\nphi_override = 9.126e-4\nmaster_seed = 7\n\
             [sweep]\nparameter = \"psi0\"\ngrid = [0.5, 1.0]\n"
        );
        let c = parse_config(&ok).unwrap();
        assert_eq!(c.run.phi_override, Some(9.126e-4));
        assert_eq!(c.run.master_seed, 7);
        assert_eq!(c.sweep.unwrap().parameter, SweepParameter::Psi0);
    }

    #[test]
    fn serialization_round_trips() {
        let c = parse_config(&format!("{BASE}\n[run]\nphi_override = 9.126e-4\n")).unwrap();
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }
}
