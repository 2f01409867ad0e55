//! Experiment specs, named presets and the runner that writes an episode's
//! log, metrics and summary to an output directory.
//!
//! Spec file:
//!
//! ```toml
//! name = "tripod-0.3"
//! config = "robot.toml"   # optional, relative to the spec file
//! gait = "tripod"
//! velocity = 0.3          # forward, m/s
//! lateral = 0.0           # m/s
//! yaw_rate = 0.0          # rad/s
//! step_frequency = 1.0    # Hz, 0 stands still
//! duration = 30.0         # s
//! seed = 0
//! output = "out/tripod"   # optional
//! ```

use crate::config::{config_to_text, load_config, Config};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::ModelError;
use crate::sim::{run_episode, EpisodeError, EpisodeLog, EpisodeSetup, EpisodeStats, LogError};
use crate::trajectory::PlanarTwist;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

fn default_gait() -> String {
    "tripod".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    #[serde(default = "default_gait")]
    pub gait: String,
    pub velocity: f64,
    #[serde(default)]
    pub lateral: f64,
    #[serde(default)]
    pub yaw_rate: f64,
    pub step_frequency: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(name: &str, gait: &str, velocity: f64, step_frequency: f64, duration: f64) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            config: None,
            gait: gait.to_string(),
            velocity,
            lateral: 0.0,
            yaw_rate: 0.0,
            step_frequency,
            duration,
            seed: 0,
            output: None,
        }
    }

    /// Checks what can be checked before any simulation starts.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Spec(format!("experiment `{}`: {m}", self.name)));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration {} must be > 0", self.duration));
        }
        if !(self.step_frequency >= 0.0 && self.step_frequency.is_finite()) {
            return bad(format!("step frequency {} must be >= 0", self.step_frequency));
        }
        if ![self.velocity, self.lateral, self.yaw_rate].iter().all(|v| v.is_finite()) {
            return bad("commanded twist must be finite".into());
        }
        if let Some(c) = &self.config {
            if !c.is_file() {
                return bad(format!("config file {} does not exist", c.display()));
            }
        }
        Ok(())
    }

    pub fn twist(&self) -> PlanarTwist {
        PlanarTwist::new(self.velocity, self.lateral, self.yaw_rate)
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Spec(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl ExperimentError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, ExperimentError::Episode(EpisodeError::Divergence(_)))
    }

    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_) | ExperimentError::Spec(_))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec, ExperimentError> {
    toml::from_str(text).map_err(|e| ExperimentError::Spec(format!("experiment spec: {}", e.message())))
}

/// Reads a spec and resolves its `config` path against the spec's directory.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut spec = parse_spec(&text)?;
    if let (Some(c), Some(dir)) = (&spec.config, path.parent()) {
        if c.is_relative() {
            spec.config = Some(dir.join(c));
        }
    }
    Ok(spec)
}

pub fn load_config_file(path: &Path) -> Result<Config, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(load_config(&text)?)
}

/// The spec's config file, or built-in defaults when it names none.
pub fn resolve_config(spec: &ExperimentSpec) -> Result<Config, ExperimentError> {
    spec.validate()?;
    match &spec.config {
        Some(p) => load_config_file(p),
        None => Ok(Config::default()),
    }
}

pub const PRESETS: [&str; 5] = ["stand", "tripod-0.3", "tripod-0.5", "amble-0.3", "resonance-pair"];

/// Experiment specs of a named preset.
pub fn preset(name: &str) -> Option<Vec<ExperimentSpec>> {
    let specs = match name {
        "stand" => vec![ExperimentSpec::new("stand", "tripod", 0.0, 0.0, 10.0)],
        "tripod-0.3" => vec![ExperimentSpec::new("tripod-0.3", "tripod", 0.3, 1.0, 30.0)],
        "tripod-0.5" => vec![ExperimentSpec::new("tripod-0.5", "tripod", 0.5, 1.0, 40.0)],
        "amble-0.3" => vec![ExperimentSpec::new("amble-0.3", "amble", 0.3, 0.75, 30.0)],
        "resonance-pair" => vec![
            ExperimentSpec::new("tripod-0.5-0.75hz", "tripod", 0.5, 0.75, 30.0),
            ExperimentSpec::new("tripod-0.5-1.00hz", "tripod", 0.5, 1.0, 30.0),
        ],
        _ => return None,
    };
    Some(specs)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub spec: ExperimentSpec,
    pub metrics: MetricsReport,
    pub stats: EpisodeStats,
    pub log_csv: String,
    /// Directory the artifacts were written to, if any.
    pub output: Option<PathBuf>,
}

pub fn episode_setup(spec: &ExperimentSpec, config: &Config) -> Result<EpisodeSetup, ExperimentError> {
    spec.validate()?;
    let gait = config.gait(&spec.gait)?.clone();
    let mut setup = EpisodeSetup::new(config.model.clone(), gait, spec.twist(), spec.step_frequency, spec.duration);
    setup.controller = config.controller;
    setup.plant = config.plant;
    setup.seed = spec.seed;
    Ok(setup)
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Runs one experiment, writing `log.csv`, `metrics.csv`, `summary.txt`,
/// `spec.toml` and the effective `config.toml` into `out` when given. A
/// diverged episode still writes its partial log and metrics before
/// returning the error.
pub fn run_experiment(spec: &ExperimentSpec, config: &Config, out: Option<&Path>) -> Result<ExperimentOutcome, ExperimentError> {
    let setup = episode_setup(spec, config)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let spec_text = toml::to_string(spec).map_err(|e| ExperimentError::Spec(e.to_string()))?;
        write(&dir.join("spec.toml"), &spec_text)?;
        write(&dir.join("config.toml"), &config_to_text(config))?;
    }
    let episode = match run_episode(&setup) {
        Ok(e) => e,
        Err(failure) => {
            if let Some(dir) = out {
                write(&dir.join("log.csv"), &failure.log.to_csv_string())?;
                if !failure.log.rows.is_empty() {
                    let written = EpisodeLog::read_csv(failure.log.to_csv_string().as_bytes())?;
                    let partial = compute_metrics(&written, &config.model);
                    write(&dir.join("metrics.csv"), &partial.to_csv())?;
                    write(&dir.join("summary.txt"), &format!("{}\n{}", failure.error, partial.summary()))?;
                }
            }
            return Err(failure.error.into());
        }
    };
    // Metrics come from the log as written so that recomputing them from the file agrees exactly.
    let log_csv = episode.log.to_csv_string();
    let metrics = compute_metrics(&EpisodeLog::read_csv(log_csv.as_bytes())?, &config.model);
    if let Some(dir) = out {
        write(&dir.join("log.csv"), &log_csv)?;
        write(&dir.join("metrics.csv"), &metrics.to_csv())?;
        write(&dir.join("summary.txt"), &metrics.summary())?;
    }
    Ok(ExperimentOutcome {
        spec: spec.clone(),
        metrics,
        stats: episode.stats,
        log_csv,
        output: out.map(Path::to_path_buf),
    })
}

/// Side-by-side CSV of the headline metrics of several runs.
pub fn comparison_csv(outcomes: &[ExperimentOutcome]) -> String {
    let mut s = String::from(
        "name,step_frequency,commanded_forward,forward_velocity_mean,lateral_velocity_rms,height_peak_to_peak,max_femur_torque\n",
    );
    for o in outcomes {
        let m = &o.metrics;
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.9},{:.9},{:.9},{:.6}\n",
            o.spec.name,
            o.spec.step_frequency,
            m.commanded_forward,
            m.forward_velocity_mean,
            m.lateral_velocity_rms,
            m.height_peak_to_peak,
            m.max_torque[1]
        ));
    }
    s
}

/// Runs every spec of a preset into `out/<name>/`, adding `comparison.csv`
/// when the preset has more than one run.
pub fn run_preset(specs: &[ExperimentSpec], config: &Config, out: &Path) -> Result<Vec<ExperimentOutcome>, ExperimentError> {
    let mut outcomes = Vec::with_capacity(specs.len());
    for spec in specs {
        outcomes.push(run_experiment(spec, config, Some(&out.join(&spec.name)))?);
    }
    if outcomes.len() > 1 {
        write(&out.join("comparison.csv"), &comparison_csv(&outcomes))?;
    }
    Ok(outcomes)
}
