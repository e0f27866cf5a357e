//! Command implementations and CSV emission for the `levysir` binary.
//!
//! Exit codes: 0 success, 1 invalid input (arguments or scenario file),
//! 2 runtime failure in the numerics, 3 I/O failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{self, PersistenceLimits, Stability, StabilityReport, StochasticThresholds};
use crate::config::{parse_config, ConfigError, ScenarioConfig};
use crate::model::{EpidemicParams, SirState};
use crate::montecarlo::{self, EnsembleStats, MonteCarloError, SweepTable};
use crate::presets::{self, Figure, PresetKind};
use crate::sde::{self, Trajectory};

pub const SIMULATE_HEADER: [&str; 5] = ["t", "S", "I", "R", "jumps_cum"];
pub const ENSEMBLE_HEADER: [&str; 14] = [
    "t",
    "S_mean",
    "S_q05",
    "S_q50",
    "S_q95",
    "I_mean",
    "I_q05",
    "I_q50",
    "I_q95",
    "R_mean",
    "R_q05",
    "R_q50",
    "R_q95",
    "extinct_fraction",
];
pub const SWEEP_HEADER: [&str; 5] = [
    "param_value",
    "psi0",
    "psi",
    "extinct_fraction",
    "mean_terminal_I",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MonteCarloError> for CliError {
    fn from(e: MonteCarloError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<sde::SdeError> for CliError {
    fn from(e: sde::SdeError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    CliError::io(path, source)
}

#[derive(Debug, Parser)]
#[command(
    name = "levysir",
    version,
    about = "SIR dynamics under compensated Poisson jump noise: threshold analysis and Monte Carlo"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `levysir-out`; `analyze` writes a CSV only when given).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the scenario's run.master_seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of paths, overriding run.n_paths.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Jump correction used for psi instead of the measure-based value.
    #[arg(long = "phi-override", global = true, allow_negative_numbers = true)]
    pub phi_override: Option<f64>,
    /// Suppress the text report on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand, Clone)]
pub enum Command {
    /// Equilibria, spectrum, reproduction numbers and thresholds.
    Analyze,
    /// One sample path to simulate.csv.
    Simulate,
    /// Ensemble bands to ensemble.csv.
    Ensemble,
    /// One-parameter sweep (needs a [sweep] table) to sweep.csv.
    Sweep,
    /// Run a built-in figure preset.
    Reproduce {
        /// fig1a, fig1b, fig1c, fig1d, fig2 or fig3.
        figure: Figure,
    },
}

impl GlobalArgs {
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("levysir-out"))
    }

    /// Apply --seed, --paths and --phi-override on top of a scenario.
    pub fn apply(&self, config: &mut ScenarioConfig) -> Result<(), CliError> {
        if let Some(seed) = self.seed {
            config.run.master_seed = seed;
        }
        if let Some(paths) = self.paths {
            config.run.n_paths = paths;
        }
        if let Some(phi) = self.phi_override {
            config.run.phi_override = Some(phi);
        }
        config.validate()?;
        Ok(())
    }

    pub fn load_config(&self) -> Result<ScenarioConfig, CliError> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Validation("--config <path> is required".into()))?;
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = parse_config(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        self.apply(&mut config)?;
        Ok(config)
    }
}

/// Shortest decimal string that parses back to the same f64, switching to
/// exponent notation for very small or very large magnitudes.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_simulate_csv(trajectory: &Trajectory, path: &Path) -> Result<(), CliError> {
    let rows = trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .zip(&trajectory.jumps_cum)
        .map(|((t, x), j)| {
            vec![
                fmt_num(*t),
                fmt_num(x.s),
                fmt_num(x.i),
                fmt_num(x.r),
                j.to_string(),
            ]
        });
    write_rows(path, &SIMULATE_HEADER, rows)
}

pub fn write_ensemble_csv(stats: &EnsembleStats, path: &Path) -> Result<(), CliError> {
    let rows = (0..stats.times.len()).map(|k| {
        let mut row = vec![fmt_num(stats.times[k])];
        for c in [&stats.s, &stats.i, &stats.r] {
            row.extend([c.mean[k], c.q05[k], c.q50[k], c.q95[k]].map(fmt_num));
        }
        row.push(fmt_num(stats.extinct_fraction_series[k]));
        row
    });
    write_rows(path, &ENSEMBLE_HEADER, rows)
}

pub fn write_sweep_csv(table: &SweepTable, path: &Path) -> Result<(), CliError> {
    let rows = table.rows.iter().map(|r| {
        [
            r.param_value,
            r.psi0,
            r.psi,
            r.extinct_fraction,
            r.mean_terminal_i,
        ]
        .map(fmt_num)
        .to_vec()
    });
    write_rows(path, &SWEEP_HEADER, rows)
}

/// Result of `analyze`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub params: EpidemicParams,
    pub dfe: SirState,
    pub endemic: Option<SirState>,
    pub psi0: f64,
    pub stability: StabilityReport,
    pub total_jump_rate: f64,
    /// Thresholds with φ taken from the jump measure.
    pub from_measure: StochasticThresholds,
    /// Thresholds with the φ override, when one is configured.
    pub overridden: Option<StochasticThresholds>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    /// Thresholds that drive classification: the override when present.
    pub fn effective(&self) -> &StochasticThresholds {
        self.overridden.as_ref().unwrap_or(&self.from_measure)
    }

    /// (key, value) pairs in report order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("theta".into(), self.params.theta),
            ("xi".into(), self.params.xi),
            ("eta".into(), self.params.eta),
            ("rho".into(), self.params.rho),
            ("gamma".into(), self.params.gamma),
            ("dfe_S".into(), self.dfe.s),
            ("dfe_I".into(), self.dfe.i),
            ("dfe_R".into(), self.dfe.r),
        ];
        if let Some(e) = self.endemic {
            out.extend([
                ("endemic_S".into(), e.s),
                ("endemic_I".into(), e.i),
                ("endemic_R".into(), e.r),
            ]);
        }
        for (k, l) in self.stability.eigenvalues.iter().enumerate() {
            out.push((format!("dfe_eigenvalue_{}_re", k + 1), l.re));
            out.push((format!("dfe_eigenvalue_{}_im", k + 1), l.im));
        }
        out.push(("psi0".into(), self.psi0));
        out.push(("total_jump_rate".into(), self.total_jump_rate));
        let mut push_thresholds = |prefix: &str, t: &StochasticThresholds| {
            out.push((format!("{prefix}phi"), t.phi));
            out.push((format!("{prefix}psi"), t.psi));
            out.push((
                format!("{prefix}extinction_rate_bound"),
                t.extinction_rate_bound,
            ));
            if let Some(PersistenceLimits {
                s_star,
                i_star,
                r_star,
            }) = t.persistence_limits
            {
                out.push((format!("{prefix}s_star"), s_star));
                out.push((format!("{prefix}i_star"), i_star));
                out.push((format!("{prefix}r_star"), r_star));
            }
        };
        push_thresholds("measure_", &self.from_measure);
        if let Some(o) = &self.overridden {
            push_thresholds("override_", o);
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(
            s,
            "parameters: theta={} xi={} eta={} rho={} gamma={}",
            p.theta, p.xi, p.eta, p.rho, p.gamma
        );
        let _ = writeln!(
            s,
            "disease-free equilibrium: (S, I, R) = ({}, {}, {})",
            self.dfe.s, self.dfe.i, self.dfe.r
        );
        match self.endemic {
            Some(e) => {
                let _ = writeln!(
                    s,
                    "endemic equilibrium: (S, I, R) = ({:.6}, {:.6}, {:.6})",
                    e.s, e.i, e.r
                );
            }
            None => {
                let _ = writeln!(s, "endemic equilibrium: none (psi0 <= 1)");
            }
        }
        let ev: Vec<String> = self
            .stability
            .eigenvalues
            .iter()
            .map(|l| format!("{:.6e}", l.re))
            .collect();
        let _ = writeln!(
            s,
            "DFE eigenvalues: [{}] -> {} (general solver deviation {:.1e})",
            ev.join(", "),
            self.stability.classification.label(),
            self.stability.solver_deviation()
        );
        let _ = writeln!(s, "psi0 = {:.4}", self.psi0);
        let write_thr = |s: &mut String, label: &str, t: &StochasticThresholds| {
            let _ = writeln!(s, "{label}: phi = {:.4e}, psi = {:.4}, extinction rate bound (eta+gamma)(psi-1) = {:.4e}", t.phi, t.psi, t.extinction_rate_bound);
            match t.persistence_limits {
                Some(l) => {
                    let _ = writeln!(
                        s,
                        "  persistence limits: S* = {:.4}, I* = {:.4}, R* = {:.5}",
                        l.s_star, l.i_star, l.r_star
                    );
                }
                None => {
                    let _ = writeln!(s, "  psi <= 1: extinction regime, no persistence limits");
                }
            }
        };
        write_thr(&mut s, "measure-based", &self.from_measure);
        if let Some(o) = &self.overridden {
            write_thr(&mut s, "override", o);
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let rows = self.entries().into_iter().map(|(k, v)| vec![k, fmt_num(v)]);
        write_rows(path, &["key", "value"], rows)
    }
}

pub fn cmd_analyze(config: &ScenarioConfig) -> Result<AnalysisReport, CliError> {
    let params = config.params;
    let eq = analysis::equilibria(&params);
    let from_measure = analysis::thresholds(&params, &config.measure, None)?;
    let overridden = config
        .run
        .phi_override
        .map(|phi| analysis::thresholds(&params, &config.measure, Some(phi)))
        .transpose()?;

    let mut notes = Vec::new();
    notes.push(
        "the measure-based jump correction is ln(1+x)-x summed over atoms, never positive, \
         so the measure-based psi is never below psi0"
            .to_string(),
    );
    if let Some(o) = &overridden {
        if o.psi < o.psi0 {
            notes.push(format!(
                "psi = {:.4} < psi0 requires phi = {:.4e} > 0, which no jump measure produces; \
                 it is reported from the override only",
                o.psi, o.phi
            ));
        }
    }
    let effective = overridden.as_ref().unwrap_or(&from_measure);
    if let Some(l) = effective.persistence_limits {
        notes.push(format!(
            "S* and R* are the closed-form limits S* = theta/eta - ((eta+gamma+rho)/(eta+rho)) I* \
             and R* = gamma/(eta+rho) I*; values S* = 7.2977, R* = 0.0015 quoted for the xi = 0.0033 \
             scenario do not satisfy them (formula gives {:.4}, {:.5})",
            l.s_star, l.r_star
        ));
    }

    Ok(AnalysisReport {
        params,
        dfe: eq.dfe,
        endemic: eq.endemic,
        psi0: eq.psi0,
        stability: analysis::classify_dfe_stability(&params),
        total_jump_rate: config.measure.total_rate(),
        from_measure,
        overridden,
        notes,
    })
}

pub fn cmd_simulate(
    config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<(Trajectory, PathBuf), CliError> {
    let traj = sde::simulate(
        &config.initial,
        &config.params,
        &config.measure,
        &config.integrator,
        config.run.master_seed,
    )?;
    let path = out_dir.join("simulate.csv");
    write_simulate_csv(&traj, &path)?;
    Ok((traj, path))
}

pub fn cmd_ensemble(
    config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<(EnsembleStats, PathBuf), CliError> {
    let stats = montecarlo::run_ensemble(
        &config.scenario(),
        config.run.n_paths,
        config.run.master_seed,
    )?;
    let path = out_dir.join("ensemble.csv");
    write_ensemble_csv(&stats, &path)?;
    Ok((stats, path))
}

pub fn cmd_sweep(
    config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<(SweepTable, PathBuf), CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Validation("sweep needs a [sweep] table in the config".into()))?;
    let table = montecarlo::sweep(
        &config.scenario(),
        sweep.parameter,
        &sweep.grid,
        config.run.n_paths,
        config.run.master_seed,
    )?;
    let path = out_dir.join("sweep.csv");
    write_sweep_csv(&table, &path)?;
    Ok((table, path))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    figure: String,
    description: &'a str,
    outputs: Vec<String>,
    chosen_defaults: &'a [String],
    scenario: &'a ScenarioConfig,
}

/// What `reproduce` produced.
#[derive(Debug)]
pub struct ReproduceOutput {
    pub figure: Figure,
    pub config: ScenarioConfig,
    pub files: Vec<PathBuf>,
    pub analysis: AnalysisReport,
    pub ensemble: Option<EnsembleStats>,
    pub sweep: Option<SweepTable>,
}

pub fn cmd_reproduce(
    figure: Figure,
    out_dir: &Path,
    overrides: &GlobalArgs,
) -> Result<ReproduceOutput, CliError> {
    let preset = presets::preset(figure);
    let mut config = preset.config.clone();
    overrides.apply(&mut config)?;
    let dir = out_dir.join(figure.name());
    ensure_dir(&dir)?;

    let analysis = cmd_analyze(&config)?;
    let analysis_path = dir.join("analysis.txt");
    fs::write(&analysis_path, analysis.render_text())
        .map_err(|e| CliError::io(&analysis_path, e))?;
    let mut files = vec![analysis_path];
    let (mut ensemble, mut sweep) = (None, None);

    match preset.kind {
        PresetKind::Ensemble => {
            let (_, sim_path) = cmd_simulate(&config, &dir)?;
            let (stats, ens_path) = cmd_ensemble(&config, &dir)?;
            files.push(sim_path);
            files.push(ens_path);
            ensemble = Some(stats);
        }
        PresetKind::Sweep => {
            let (table, path) = cmd_sweep(&config, &dir)?;
            files.push(path);
            sweep = Some(table);
        }
    }

    let manifest_path = dir.join("manifest.toml");
    let manifest = Manifest {
        figure: figure.name().to_string(),
        description: preset.description,
        outputs: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        chosen_defaults: &preset.chosen_defaults,
        scenario: &config,
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&manifest_path, text).map_err(|e| CliError::io(&manifest_path, e))?;
    files.push(manifest_path);

    Ok(ReproduceOutput {
        figure,
        config,
        files,
        analysis,
        ensemble,
        sweep,
    })
}

fn summarize_ensemble(stats: &EnsembleStats, thresholds: &StochasticThresholds) -> String {
    let (lyap_mean, lyap_se) = montecarlo::mean_and_standard_error(&stats.lyapunov_estimates);
    format!(
        "paths = {}, extinct fraction at t_end = {}, median growth rate = {:.4e} (mean {:.4e} +/- {:.1e}), \
         mean time-average I = {:.4e}, jumps = {}, clamps = {}, outcome = {}",
        stats.n_paths,
        stats.extinct_fraction,
        stats.median_lyapunov(),
        lyap_mean,
        lyap_se,
        stats.mean_time_average_i(),
        stats.total_jumps,
        stats.clamp_count,
        montecarlo::classify(stats, thresholds).label()
    )
}

/// Dispatch a parsed command line. Returns the text that `main` prints.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let g = &cli.global;
    let mut out = String::new();
    match &cli.command {
        Command::Analyze => {
            let config = g.load_config()?;
            let report = cmd_analyze(&config)?;
            out.push_str(&report.render_text());
            if let Some(dir) = &g.out {
                report.write_csv(&dir.join("analysis.csv"))?;
            }
        }
        Command::Simulate => {
            let config = g.load_config()?;
            let (traj, path) = cmd_simulate(&config, &g.out_dir())?;
            let _ = writeln!(
                out,
                "wrote {} ({} rows, {} jumps, {} clamps)",
                path.display(),
                traj.len(),
                traj.jump_count,
                traj.clamp_count
            );
        }
        Command::Ensemble => {
            let config = g.load_config()?;
            let thresholds = config.scenario().thresholds()?;
            let (stats, path) = cmd_ensemble(&config, &g.out_dir())?;
            let _ = writeln!(out, "wrote {}", path.display());
            let _ = writeln!(out, "{}", summarize_ensemble(&stats, &thresholds));
        }
        Command::Sweep => {
            let config = g.load_config()?;
            let (table, path) = cmd_sweep(&config, &g.out_dir())?;
            let _ = writeln!(out, "wrote {}", path.display());
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{} = {}: psi0 = {:.4}, psi = {:.4}, extinct = {}, outcome = {}",
                    table.parameter.name(),
                    r.param_value,
                    r.psi0,
                    r.psi,
                    r.extinct_fraction,
                    r.outcome.label()
                );
            }
        }
        Command::Reproduce { figure } => {
            let res = cmd_reproduce(*figure, &g.out_dir(), g)?;
            out.push_str(&res.analysis.render_text());
            if let Some(stats) = &res.ensemble {
                let _ = writeln!(
                    out,
                    "{}",
                    summarize_ensemble(stats, res.analysis.effective())
                );
            }
            if let Some(table) = &res.sweep {
                for r in &table.rows {
                    let _ = writeln!(
                        out,
                        "{} = {}: psi = {:.4}, extinct = {}, outcome = {}",
                        table.parameter.name(),
                        r.param_value,
                        r.psi,
                        r.extinct_fraction,
                        r.outcome.label()
                    );
                }
            }
            for f in &res.files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
        }
    }
    Ok(out)
}

/// Classification label of the DFE, exposed for scripts.
pub fn dfe_label(params: &EpidemicParams) -> Stability {
    analysis::classify_dfe_stability(params).classification
}
