//! Ensemble orchestration: seeded fan-out of sample paths, cross-path
//! statistics, growth-rate estimates, outcome classification and
//! one-parameter sweeps.
//!
//! Paths are simulated in parallel with rayon but always reduced in
//! path-index order, so results are bit-identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, StochasticThresholds};
use crate::model::{Compartment, EpidemicParams, JumpMeasure, ModelError, SirState};
use crate::sde::{simulate_path, IntegratorConfig, SdeError, Trajectory};

/// I below this counts as extinct.
pub const EXTINCTION_FLOOR: f64 = 1e-6;
/// Minimum share of extinct paths for an `Extinct` verdict.
pub const EXTINCT_FRACTION_MIN: f64 = 0.9;
/// Maximum share of extinct paths for a `Persistent` verdict.
pub const PERSISTENT_FRACTION_MAX: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("n_paths must be at least 1")]
    NoPaths,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("growth-rate estimate needs I(0) > 0 (got {0})")]
    NonPositiveInitialInfected(f64),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sweep grid must be strictly increasing (index {index}: {value})")]
    GridNotIncreasing { index: usize, value: f64 },
    #[error("epsilon sweep needs a jump measure with at least one atom")]
    EpsilonWithoutMeasure,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Everything needed to run a path or an ensemble, minus the seed and path count.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: EpidemicParams,
    pub initial: SirState,
    pub measure: JumpMeasure,
    pub integrator: IntegratorConfig,
    pub phi_override: Option<f64>,
}

impl Scenario {
    pub fn thresholds(&self) -> Result<StochasticThresholds, AnalysisError> {
        analysis::thresholds(&self.params, &self.measure, self.phi_override)
    }

    /// Copy of the scenario with one parameter replaced.
    pub fn with_parameter(
        &self,
        parameter: SweepParameter,
        value: f64,
    ) -> Result<Scenario, MonteCarloError> {
        let mut out = self.clone();
        match parameter {
            SweepParameter::Epsilon => {
                if out.measure.atoms.is_empty() {
                    return Err(MonteCarloError::EpsilonWithoutMeasure);
                }
                for atom in &mut out.measure.atoms {
                    atom.amplitude = value;
                }
                out.measure.validate()?;
            }
            SweepParameter::Theta => out.params.theta = value,
            SweepParameter::Xi => out.params.xi = value,
            SweepParameter::Psi0 => {
                let p = &out.params;
                out.params.xi = value * p.eta * (p.eta + p.gamma) / p.theta;
            }
        }
        out.params.validate()?;
        Ok(out)
    }
}

/// Mean, variance and 5/50/95% quantiles of one compartment over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompartmentStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub s: CompartmentStats,
    pub i: CompartmentStats,
    pub r: CompartmentStats,
    /// Share of paths with I below the floor at each recorded time.
    pub extinct_fraction_series: Vec<f64>,
    /// Share of paths with I below the floor at t_end.
    pub extinct_fraction: f64,
    /// Per-path ln(I(t_end)/I(0))/t_end; −∞ for paths started at I = 0.
    pub lyapunov_estimates: Vec<f64>,
    /// Per-path time average of I over [0, t_end].
    pub time_average_i: Vec<f64>,
    pub terminal_i: Vec<f64>,
    pub total_jumps: u64,
    pub clamp_count: u64,
}

impl EnsembleStats {
    pub fn compartment(&self, c: Compartment) -> &CompartmentStats {
        match c {
            Compartment::S => &self.s,
            Compartment::I => &self.i,
            Compartment::R => &self.r,
        }
    }

    pub fn median_lyapunov(&self) -> f64 {
        median(&self.lyapunov_estimates)
    }

    pub fn median_time_average_i(&self) -> f64 {
        median(&self.time_average_i)
    }

    pub fn mean_time_average_i(&self) -> f64 {
        self.time_average_i.iter().sum::<f64>() / self.n_paths as f64
    }

    pub fn mean_terminal_i(&self) -> f64 {
        self.terminal_i.iter().sum::<f64>() / self.n_paths as f64
    }
}

/// Linear-interpolation quantile (the "type 7" rule) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = h - lo as f64;
            let (a, b) = (sorted[lo], sorted[hi]);
            if a == b || frac == 0.0 {
                a
            } else if !(a.is_finite() && b.is_finite()) {
                // −∞ estimates from paths started at I = 0.
                if frac < 0.5 {
                    a
                } else {
                    b
                }
            } else {
                a + frac * (b - a)
            }
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Sample mean and its normal-approximation standard error over the
/// finite entries of `values`.
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len() as f64;
    if finite.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = finite.iter().sum::<f64>() / n;
    if finite.len() < 2 {
        return (mean, 0.0);
    }
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// (1/t_end)·∫₀^t_end X dt by the trapezoidal rule on the recorded grid.
pub fn time_average(
    trajectory: &Trajectory,
    component: Compartment,
) -> Result<f64, MonteCarloError> {
    let first = trajectory
        .states
        .first()
        .ok_or(MonteCarloError::EmptyTrajectory)?;
    if trajectory.len() == 1 {
        return Ok(first.get(component));
    }
    let span = trajectory.t_end() - trajectory.times[0];
    let integral: f64 = trajectory
        .times
        .windows(2)
        .zip(trajectory.states.windows(2))
        .map(|(t, x)| 0.5 * (t[1] - t[0]) * (x[0].get(component) + x[1].get(component)))
        .sum();
    Ok(integral / span)
}

/// ln(max(I(t_end), floor))/t_end − ln(I(0))/t_end.
pub fn lyapunov_estimate(trajectory: &Trajectory) -> Result<f64, MonteCarloError> {
    let (first, last) = match (trajectory.states.first(), trajectory.states.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(MonteCarloError::EmptyTrajectory),
    };
    if !(first.i > 0.0) {
        return Err(MonteCarloError::NonPositiveInitialInfected(first.i));
    }
    let t = trajectory.t_end();
    Ok((last.i.max(EXTINCTION_FLOOR).ln() - first.i.ln()) / t)
}

fn compartment_stats(
    trajectories: &[Trajectory],
    n_times: usize,
    component: Compartment,
) -> CompartmentStats {
    let n = trajectories.len() as f64;
    let mut out = CompartmentStats::default();
    let mut column = Vec::with_capacity(trajectories.len());
    for k in 0..n_times {
        column.clear();
        column.extend(trajectories.iter().map(|t| t.states[k].get(component)));
        column.sort_by(f64::total_cmp);
        let (mean, variance) = if column[0] == column[column.len() - 1] {
            (column[0], 0.0)
        } else {
            let mean = column.iter().sum::<f64>() / n;
            (
                mean,
                column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n,
            )
        };
        out.mean.push(mean);
        out.variance.push(variance);
        out.q05.push(quantile_sorted(&column, 0.05));
        out.q50.push(quantile_sorted(&column, 0.50));
        out.q95.push(quantile_sorted(&column, 0.95));
    }
    out
}

/// Simulate `n_paths` independent paths; path k uses stream (master_seed, k).
pub fn run_paths(
    scenario: &Scenario,
    n_paths: usize,
    master_seed: u64,
) -> Result<Vec<Trajectory>, MonteCarloError> {
    if n_paths == 0 {
        return Err(MonteCarloError::NoPaths);
    }
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            simulate_path(
                &scenario.initial,
                &scenario.params,
                &scenario.measure,
                &scenario.integrator,
                master_seed,
                k,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(paths)
}

/// Cross-path statistics of already simulated trajectories, reduced in
/// slice order.
pub fn aggregate(trajectories: &[Trajectory]) -> Result<EnsembleStats, MonteCarloError> {
    let first = trajectories.first().ok_or(MonteCarloError::NoPaths)?;
    if first.is_empty() {
        return Err(MonteCarloError::EmptyTrajectory);
    }
    let n_times = first.len();
    let n = trajectories.len();

    let extinct_fraction_series: Vec<f64> = (0..n_times)
        .map(|k| {
            trajectories
                .iter()
                .filter(|t| t.states[k].i < EXTINCTION_FLOOR)
                .count() as f64
                / n as f64
        })
        .collect();

    let mut lyapunov_estimates = Vec::with_capacity(n);
    let mut time_average_i = Vec::with_capacity(n);
    let mut terminal_i = Vec::with_capacity(n);
    for t in trajectories {
        lyapunov_estimates.push(match lyapunov_estimate(t) {
            Ok(v) => v,
            Err(MonteCarloError::NonPositiveInitialInfected(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        });
        time_average_i.push(time_average(t, Compartment::I)?);
        terminal_i.push(t.states[n_times - 1].i);
    }

    Ok(EnsembleStats {
        n_paths: n,
        times: first.times.clone(),
        s: compartment_stats(trajectories, n_times, Compartment::S),
        i: compartment_stats(trajectories, n_times, Compartment::I),
        r: compartment_stats(trajectories, n_times, Compartment::R),
        extinct_fraction: extinct_fraction_series[n_times - 1],
        extinct_fraction_series,
        lyapunov_estimates,
        time_average_i,
        terminal_i,
        total_jumps: trajectories.iter().map(|t| t.jump_count).sum(),
        clamp_count: trajectories.iter().map(|t| t.clamp_count).sum(),
    })
}

pub fn run_ensemble(
    scenario: &Scenario,
    n_paths: usize,
    master_seed: u64,
) -> Result<EnsembleStats, MonteCarloError> {
    let paths = run_paths(scenario, n_paths, master_seed)?;
    aggregate(&paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Extinct,
    Persistent,
    Indeterminate,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Extinct => "extinct",
            Outcome::Persistent => "persistent",
            Outcome::Indeterminate => "indeterminate",
        }
    }
}

/// Ensemble verdict.
///
/// Extinct: at least 90% of paths below the floor and a negative median
/// growth rate. Persistent: at most 10% extinct and, when persistence
/// limits exist, a median time-averaged I above half of I⋆.
pub fn classify(stats: &EnsembleStats, thresholds: &StochasticThresholds) -> Outcome {
    if stats.extinct_fraction >= EXTINCT_FRACTION_MIN && stats.median_lyapunov() < 0.0 {
        return Outcome::Extinct;
    }
    if stats.extinct_fraction <= PERSISTENT_FRACTION_MAX {
        let level_ok = match thresholds.persistence_limits {
            Some(lim) => stats.median_time_average_i() > 0.5 * lim.i_star,
            None => true,
        };
        if level_ok {
            return Outcome::Persistent;
        }
    }
    Outcome::Indeterminate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Epsilon,
    Theta,
    Xi,
    /// Target ψ₀, realized by rescaling ξ.
    Psi0,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::Theta => "theta",
            SweepParameter::Xi => "xi",
            SweepParameter::Psi0 => "psi0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param_value: f64,
    pub psi0: f64,
    pub psi: f64,
    pub extinct_fraction: f64,
    pub mean_terminal_i: f64,
    pub median_lyapunov: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub n_paths: usize,
    pub rows: Vec<SweepRow>,
}

/// One ensemble per grid point, all with the same master seed.
pub fn sweep(
    base: &Scenario,
    parameter: SweepParameter,
    grid: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<SweepTable, MonteCarloError> {
    if grid.is_empty() {
        return Err(MonteCarloError::EmptyGrid);
    }
    for (index, w) in grid.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(MonteCarloError::GridNotIncreasing {
                index: index + 1,
                value: w[1],
            });
        }
    }
    let scenarios = grid
        .iter()
        .map(|&v| base.with_parameter(parameter, v))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::with_capacity(grid.len());
    for (&value, scenario) in grid.iter().zip(&scenarios) {
        let thresholds = scenario.thresholds()?;
        let stats = run_ensemble(scenario, n_paths, master_seed)?;
        log::info!(
            "{} = {value}: psi0 = {}, psi = {}, extinct = {}",
            parameter.name(),
            thresholds.psi0,
            thresholds.psi,
            stats.extinct_fraction
        );
        rows.push(SweepRow {
            param_value: value,
            psi0: thresholds.psi0,
            psi: thresholds.psi,
            extinct_fraction: stats.extinct_fraction,
            mean_terminal_i: stats.mean_terminal_i(),
            median_lyapunov: stats.median_lyapunov(),
            outcome: classify(&stats, &thresholds),
        });
    }
    Ok(SweepTable {
        parameter,
        n_paths,
        rows,
    })
}
