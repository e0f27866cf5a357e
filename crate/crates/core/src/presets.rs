//! Built-in scenarios behind `levysir reproduce`.
//!
//! Every preset shares the reference rates (θ = 0.0073, ξ = 0.003,
//! η = 0.001, ρ = 0.01, γ = 0.02) and a single jump atom of amplitude
//! 0.001. Step size, horizon, initial state, jump rate, seeds and path
//! counts are choices made here and are written to each run's manifest.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{RunSection, ScenarioConfig, SweepSection};
use crate::model::{EpidemicParams, JumpMeasure, SirState};
use crate::montecarlo::SweepParameter;
use crate::sde::{IntegratorConfig, Scheme};

pub const REFERENCE_AMPLITUDE: f64 = 0.001;
pub const REFERENCE_JUMP_RATE: f64 = 1.0;
pub const PRESET_SEED: u64 = 20_200_601;

/// (ψ₀ − ψ)(η+γ) for ψ = 0.9994 at ξ = 0.003.
pub const PHI_OVERRIDE_LOW_CONTACT: f64 = 9.126e-4;
/// (ψ₀ − ψ)(η+γ) for ψ = 1.1042 at ξ = 0.0033.
pub const PHI_OVERRIDE_HIGH_CONTACT: f64 = 9.0e-4;
pub const HIGH_CONTACT_XI: f64 = 0.0033;

/// Horizon of the sweep presets: long enough for every grid point with
/// ψ < 1 to fall below the extinction floor from I(0) = 0.1.
pub const SWEEP_T_END: f64 = 12_000.0;
pub const SWEEP_PATHS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1a,
    Fig1b,
    Fig1c,
    Fig1d,
    Fig2,
    Fig3,
}

impl Figure {
    pub const ALL: [Figure; 6] = [
        Figure::Fig1a,
        Figure::Fig1b,
        Figure::Fig1c,
        Figure::Fig1d,
        Figure::Fig2,
        Figure::Fig3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig1a => "fig1a",
            Figure::Fig1b => "fig1b",
            Figure::Fig1c => "fig1c",
            Figure::Fig1d => "fig1d",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown figure `{s}` (expected fig1a..fig1d, fig2, fig3)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Ensemble,
    Sweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub figure: Figure,
    pub description: &'static str,
    pub kind: PresetKind,
    pub config: ScenarioConfig,
    /// Settings the preset had to choose itself.
    pub chosen_defaults: Vec<String>,
}

/// Start one unit below the steady population, with I = 0.1 and no
/// recovered individuals.
pub fn default_initial() -> SirState {
    SirState {
        s: 7.2,
        i: 0.1,
        r: 0.0,
    }
}

fn base_config(t_end: f64, n_paths: usize) -> ScenarioConfig {
    ScenarioConfig {
        params: EpidemicParams::reference(),
        initial: default_initial(),
        measure: JumpMeasure::single(REFERENCE_AMPLITUDE, REFERENCE_JUMP_RATE)
            .expect("reference measure is valid"),
        integrator: IntegratorConfig {
            dt: 0.1,
            t_end,
            record_every: 10,
            scheme: Scheme::JumpEuler,
        },
        run: RunSection {
            n_paths,
            master_seed: PRESET_SEED,
            phi_override: None,
        },
        sweep: None,
    }
}

/// `k * units / scale` for k = 1..=count, each point correctly rounded.
fn grid(units: f64, scale: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| k as f64 * units / scale).collect()
}

pub fn preset(figure: Figure) -> Preset {
    let common = |c: &ScenarioConfig| {
        vec![
            format!("dt = {}", c.integrator.dt),
            format!("t_end = {}", c.integrator.t_end),
            format!("record_every = {}", c.integrator.record_every),
            format!("n_paths = {}", c.run.n_paths),
            format!("master_seed = {}", c.run.master_seed),
            format!(
                "initial state (S, I, R) = ({}, {}, {})",
                c.initial.s, c.initial.i, c.initial.r
            ),
            format!("jump rate of the single atom = {REFERENCE_JUMP_RATE}"),
            "scheme = jump_euler with Poisson jump counts per step".to_string(),
        ]
    };
    let sweep_preset = |description, parameter: SweepParameter, grid: Vec<f64>| {
        let mut config = base_config(SWEEP_T_END, SWEEP_PATHS);
        let mut chosen = common(&config);
        chosen.push(format!("{} grid = {:?}", parameter.name(), grid));
        config.sweep = Some(SweepSection { parameter, grid });
        (description, PresetKind::Sweep, config, chosen)
    };

    let (description, kind, config, chosen_defaults) = match figure {
        Figure::Fig1a => sweep_preset(
            "stochastic reproduction number and extinction versus jump amplitude",
            SweepParameter::Epsilon,
            grid(1.0, 1e3, 10),
        ),
        Figure::Fig1b => sweep_preset(
            "stochastic reproduction number and extinction versus recruitment theta",
            SweepParameter::Theta,
            grid(7.0, 1e4, 10),
        ),
        Figure::Fig1c => sweep_preset(
            "stochastic reproduction number and extinction versus contact rate xi",
            SweepParameter::Xi,
            grid(3.0, 1e4, 11),
        ),
        Figure::Fig1d => sweep_preset(
            "stochastic reproduction number and extinction versus psi0 (via xi)",
            SweepParameter::Psi0,
            grid(1.0, 10.0, 11),
        ),
        Figure::Fig2 => {
            let mut config = base_config(600.0, 1000);
            config.run.phi_override = Some(PHI_OVERRIDE_LOW_CONTACT);
            let mut chosen = common(&config);
            chosen.push(format!(
                "phi_override = {PHI_OVERRIDE_LOW_CONTACT} (gives psi = 0.9994; the measure alone gives psi >= psi0)"
            ));
            (
                "sample paths and ensemble bands for xi = 0.003 with psi reported as 0.9994",
                PresetKind::Ensemble,
                config,
                chosen,
            )
        }
        Figure::Fig3 => {
            let mut config = base_config(2000.0, 1000);
            config.params.xi = HIGH_CONTACT_XI;
            config.run.phi_override = Some(PHI_OVERRIDE_HIGH_CONTACT);
            let mut chosen = common(&config);
            chosen.push(format!(
                "phi_override = {PHI_OVERRIDE_HIGH_CONTACT} (gives psi = 1.1043)"
            ));
            (
                "sample paths and ensemble bands for xi = 0.0033 (persistent regime)",
                PresetKind::Ensemble,
                config,
                chosen,
            )
        }
    };
    Preset {
        figure,
        description,
        kind,
        config,
        chosen_defaults,
    }
}
