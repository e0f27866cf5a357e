//! Fixed-step integrators: classical RK4 for the deterministic system and
//! a jump-adapted Euler scheme for the compensated-Poisson system.
//!
//! Positivity policy: a step that would leave a compartment negative is
//! clamped to zero and counted. The continuous model is positive, so a
//! non-zero clamp count means the step size is too coarse.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{drift, jump_delta, EpidemicParams, JumpMeasure, SirState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("dt must be positive and finite (got {0})")]
    InvalidStep(f64),
    #[error("t_end ({t_end}) must be at least dt ({dt})")]
    HorizonTooShort { t_end: f64, dt: f64 },
    #[error("record_every must be at least 1")]
    ZeroDecimation,
    #[error(
        "dt * total jump rate = {product} >= 1; reduce dt so that at most one \
         jump per step is the typical case"
    )]
    JumpRateTooHigh { product: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DeterministicRk4,
    JumpEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "IntegratorConfig::default_dt")]
    pub dt: f64,
    #[serde(default = "IntegratorConfig::default_t_end")]
    pub t_end: f64,
    #[serde(default = "IntegratorConfig::default_record_every")]
    pub record_every: usize,
    #[serde(default = "IntegratorConfig::default_scheme")]
    pub scheme: Scheme,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: Self::default_dt(),
            t_end: Self::default_t_end(),
            record_every: Self::default_record_every(),
            scheme: Self::default_scheme(),
        }
    }
}

impl IntegratorConfig {
    pub const fn default_dt() -> f64 {
        0.1
    }
    pub const fn default_t_end() -> f64 {
        600.0
    }
    pub const fn default_record_every() -> usize {
        10
    }
    pub const fn default_scheme() -> Scheme {
        Scheme::JumpEuler
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SdeError::InvalidStep(self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(SdeError::HorizonTooShort {
                t_end: self.t_end,
                dt: self.dt,
            });
        }
        if self.record_every == 0 {
            return Err(SdeError::ZeroDecimation);
        }
        Ok(())
    }

    /// Number of steps, t_end/dt rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Time of step k. When 1/dt is an integer the division form avoids
    /// artifacts such as 3 * 0.1 = 0.30000000000000004.
    pub fn time_at(&self, k: usize) -> f64 {
        let per_unit = 1.0 / self.dt;
        if (per_unit - per_unit.round()).abs() < 1e-9 {
            k as f64 / per_unit.round()
        } else {
            k as f64 * self.dt
        }
    }
}

/// Per-path pseudo-random stream.
///
/// The master seed keys a ChaCha8 generator and the path index selects its
/// 64-bit stream id, so every (seed, index) pair addresses an independent
/// keystream and paths can be generated in any order.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(path_index);
        Self { rng }
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        // mean is finite and positive here, so construction cannot fail.
        let dist = Poisson::new(mean).expect("positive finite Poisson mean");
        dist.sample(&mut self.rng) as u64
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Result of one integrator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub state: SirState,
    pub jumps_fired: u64,
    /// Compartments clamped to zero in this step.
    pub clamps: u32,
}

fn clamp_positive(s: f64, i: f64, r: f64) -> (SirState, u32) {
    let mut clamps = 0;
    let mut fix = |v: f64| {
        if v < 0.0 {
            clamps += 1;
            0.0
        } else {
            v
        }
    };
    let state = SirState {
        s: fix(s),
        i: fix(i),
        r: fix(r),
    };
    (state, clamps)
}

fn axpy(state: &SirState, h: f64, d: &crate::model::Derivative) -> SirState {
    SirState {
        s: state.s + h * d.ds,
        i: state.i + h * d.di,
        r: state.r + h * d.dr,
    }
}

fn rk4_raw(state: &SirState, params: &EpidemicParams, dt: f64) -> (f64, f64, f64) {
    let k1 = drift(state, params);
    let k2 = drift(&axpy(state, 0.5 * dt, &k1), params);
    let k3 = drift(&axpy(state, 0.5 * dt, &k2), params);
    let k4 = drift(&axpy(state, dt, &k3), params);
    let w = dt / 6.0;
    (
        state.s + w * (k1.ds + 2.0 * k2.ds + 2.0 * k3.ds + k4.ds),
        state.i + w * (k1.di + 2.0 * k2.di + 2.0 * k3.di + k4.di),
        state.r + w * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr),
    )
}

/// One classical fourth-order Runge–Kutta step of the deterministic system.
pub fn step_deterministic(state: &SirState, params: &EpidemicParams, dt: f64) -> StepResult {
    let (s, i, r) = rk4_raw(state, params, dt);
    let (state, clamps) = clamp_positive(s, i, r);
    StepResult {
        state,
        jumps_fired: 0,
        clamps,
    }
}

/// One explicit Euler step of the deterministic system.
pub fn step_euler(state: &SirState, params: &EpidemicParams, dt: f64) -> StepResult {
    let d = drift(state, params);
    let (state, clamps) = clamp_positive(
        state.s + dt * d.ds,
        state.i + dt * d.di,
        state.r + dt * d.dr,
    );
    StepResult {
        state,
        jumps_fired: 0,
        clamps,
    }
}

/// Pure-noise part of one jump-Euler step: Σᵢ (kᵢ − λᵢ·dt)·εᵢ·S·I moved
/// from S to I, with kᵢ ~ Poisson(λᵢ·dt) and (S, I) the pre-jump state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpIncrement {
    pub ds: f64,
    pub di: f64,
    pub jumps_fired: u64,
}

pub fn jump_increment(
    pre_jump: &SirState,
    measure: &JumpMeasure,
    dt: f64,
    rng: &mut RandomStream,
) -> JumpIncrement {
    let mut ds = 0.0;
    let mut di = 0.0;
    let mut jumps_fired = 0;
    for atom in &measure.atoms {
        let expected = atom.rate * dt;
        let fired = rng.poisson(expected);
        jumps_fired += fired;
        // Compensated count: π − ν·dt.
        let weight = fired as f64 - expected;
        let (js, ji) = jump_delta(pre_jump, atom.amplitude);
        ds += weight * js;
        di += weight * ji;
    }
    JumpIncrement {
        ds,
        di,
        jumps_fired,
    }
}

/// One jump-adapted Euler step.
///
/// Drift is applied first, then jumps and their compensator are evaluated
/// at the post-drift state. R carries no noise.
pub fn step_jump(
    state: &SirState,
    params: &EpidemicParams,
    measure: &JumpMeasure,
    dt: f64,
    rng: &mut RandomStream,
) -> StepResult {
    let d = drift(state, params);
    let pre_jump = axpy(state, dt, &d);
    let inc = jump_increment(&pre_jump, measure, dt, rng);
    let (state, clamps) = clamp_positive(pre_jump.s + inc.ds, pre_jump.i + inc.di, pre_jump.r);
    StepResult {
        state,
        jumps_fired: inc.jumps_fired,
        clamps,
    }
}

/// A recorded sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SirState>,
    /// Cumulative jump count at each recorded time.
    pub jumps_cum: Vec<u64>,
    pub jump_count: u64,
    pub clamp_count: u64,
    pub seed: u64,
    pub path_index: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn last(&self) -> Option<&SirState> {
        self.states.last()
    }
}

fn check_jump_setup(measure: &JumpMeasure, config: &IntegratorConfig) -> Result<(), SdeError> {
    if config.scheme != Scheme::JumpEuler {
        return Ok(());
    }
    if measure.is_empty() {
        log::warn!("jump_euler scheme with an empty jump measure; the run is deterministic Euler");
        return Ok(());
    }
    let product = config.dt * measure.total_rate();
    if product >= 1.0 {
        return Err(SdeError::JumpRateTooHigh { product });
    }
    Ok(())
}

/// Integrate from `initial` to `config.t_end` using stream (seed, 0).
pub fn simulate(
    initial: &SirState,
    params: &EpidemicParams,
    measure: &JumpMeasure,
    config: &IntegratorConfig,
    seed: u64,
) -> Result<Trajectory, SdeError> {
    simulate_path(initial, params, measure, config, seed, 0)
}

/// Integrate one ensemble member; the random stream is (master_seed, path_index).
///
/// Every `record_every`-th state is kept, and the terminal state is always
/// kept so that the recorded grid spans [0, t_end].
pub fn simulate_path(
    initial: &SirState,
    params: &EpidemicParams,
    measure: &JumpMeasure,
    config: &IntegratorConfig,
    master_seed: u64,
    path_index: u64,
) -> Result<Trajectory, SdeError> {
    config.validate()?;
    check_jump_setup(measure, config)?;

    let n_steps = config.n_steps();
    let capacity = n_steps / config.record_every + 2;
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        jumps_cum: Vec::with_capacity(capacity),
        jump_count: 0,
        clamp_count: 0,
        seed: master_seed,
        path_index,
    };
    traj.times.push(0.0);
    traj.states.push(*initial);
    traj.jumps_cum.push(0);

    let mut rng = RandomStream::new(master_seed, path_index);
    let mut state = *initial;
    for k in 1..=n_steps {
        let step = match config.scheme {
            Scheme::DeterministicRk4 => step_deterministic(&state, params, config.dt),
            Scheme::JumpEuler => step_jump(&state, params, measure, config.dt, &mut rng),
        };
        state = step.state;
        traj.jump_count += step.jumps_fired;
        traj.clamp_count += u64::from(step.clamps);
        if k % config.record_every == 0 || k == n_steps {
            traj.times.push(config.time_at(k));
            traj.states.push(state);
            traj.jumps_cum.push(traj.jump_count);
        }
    }
    if traj.clamp_count > 0 {
        log::debug!(
            "path {path_index}: {} positivity clamps (dt = {})",
            traj.clamp_count,
            config.dt
        );
    }
    Ok(traj)
}
