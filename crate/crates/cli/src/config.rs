//! Experiment configuration: one JSON schema across all commands, selected
//! by a top-level `"command"` discriminator, with common plumbing fields
//! (`name`, `seed`, `out_dir`, `jobs`) beside the per-command parameters.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use drift_camouflage::paths::TimeGrid;

use crate::CliError;

/// A full experiment file after parsing. Flag overrides are applied onto
/// this struct before it is echoed into the run's manifest, so the manifest
/// always records the parameters that actually ran.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    /// Experiment name, echoed into reports and the manifest.
    pub name: String,
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    /// Output directory; defaults to `./out` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Worker-pool size; defaults to all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Per-command parameter block, discriminated by `"command"`.
    #[serde(flatten)]
    pub experiment: Experiment,
}

/// The per-command parameter blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Experiment {
    Hidden(HiddenParams),
    Concat(ConcatParams),
    Discrete(DiscreteParams),
    Calibrate(CalibrateParams),
}

impl Experiment {
    pub fn label(&self) -> &'static str {
        match self {
            Experiment::Hidden(_) => "hidden",
            Experiment::Concat(_) => "concat",
            Experiment::Discrete(_) => "discrete",
            Experiment::Calibrate(_) => "calibrate",
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_csv_paths() -> usize {
    10
}

fn default_depth() -> usize {
    4
}

fn default_diffuse_horizon() -> usize {
    64
}

fn default_diffuse_threshold() -> String {
    "1/1000".into()
}

fn default_true() -> bool {
    true
}

/// `hidden`: drift size, grid, ensemble size, battery level, and how many
/// paths to spill to CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HiddenParams {
    pub mu: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_csv_paths")]
    pub csv_paths: usize,
}

/// `concat`: like `hidden` plus the per-segment excursion threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcatParams {
    pub mu: f64,
    pub delta: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_csv_paths")]
    pub csv_paths: usize,
}

/// `discrete`: the biased-bit law (probabilities as exact rational strings
/// like `"7/10"`), the scrambling window, and the index family — greedy by
/// default, or explicit `sets` mapping each target index to its inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteParams {
    pub law: LawSpec,
    pub window: usize,
    pub bits_per_set: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<BTreeMap<String, Vec<i64>>>,
    /// Monte Carlo windows to scramble as a cross-check; 0 skips it.
    #[serde(default)]
    pub n_windows: usize,
    #[serde(default = "default_diffuse_horizon")]
    pub diffuse_horizon: usize,
    #[serde(default = "default_diffuse_threshold")]
    pub diffuse_threshold: String,
}

/// The bit law: a single probability, a repeating block, or an explicit
/// table indexed backward from the present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawSpec {
    Constant { p: String },
    Periodic { block: Vec<String> },
    Table { table: Vec<String> },
}

/// `calibrate`: grid and ensemble shape for repeated null-battery runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateParams {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub n_runs: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// When true, rates outside `[alpha/2, 2 alpha]` exit with code 3.
    #[serde(default = "default_true")]
    pub enforce_window: bool,
}

/// Plumbing shared by every command: identity, seed, destination, and the
/// effective config echo for the manifest.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub name: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub command: &'static str,
    pub echo: serde_json::Value,
}

impl RunContext {
    pub fn from_config(config: &ConfigFile) -> Result<Self, CliError> {
        if config.name.is_empty() {
            return Err(CliError::Config("experiment name must not be empty".into()));
        }
        let echo = serde_json::to_value(config)
            .map_err(|err| CliError::Runtime(format!("cannot echo config: {err}")))?;
        Ok(RunContext {
            name: config.name.clone(),
            seed: config.seed,
            out_dir: config.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            command: config.experiment.label(),
            echo,
        })
    }
}

/// Build the simulation grid from a step size and horizon, refusing grids
/// that are degenerate, absurdly large, or whose horizon is not a whole
/// number of steps — silent truncation would make the manifest lie about
/// the horizon that actually ran.
pub fn grid_from(dt: f64, horizon: f64) -> Result<TimeGrid, CliError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(CliError::Config(format!("dt must be positive and finite, got {dt}")));
    }
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(CliError::Config(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let steps = (horizon / dt).round();
    if steps < 1.0 {
        return Err(CliError::Config(format!(
            "horizon {horizon} is shorter than a single step of dt = {dt}"
        )));
    }
    if steps > 5e7 {
        return Err(CliError::Config(format!(
            "grid would need {steps:.0} steps; the harness caps at 5e7"
        )));
    }
    let n_steps = steps as usize;
    if (n_steps as f64 * dt - horizon).abs() > 1e-6 * horizon.max(1.0) {
        return Err(CliError::Config(format!(
            "horizon {horizon} is not a whole number of dt = {dt} steps"
        )));
    }
    Ok(TimeGrid::new(dt, n_steps)?)
}

/// Shared sanity check for significance levels.
pub fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}
