//! Run configuration: JSON file, command-line overrides and the `PNEC_SEED` fallback.

use std::path::{Path, PathBuf};

use pnec::simulation::{CameraKind, Estimator, InitMode, NoiseSpec, NoiseType, SceneConfig};
use pnec::SolverConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEED_ENV: &str = "PNEC_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    RunSynthetic,
    SweepNoise,
    SweepAnisotropy,
    SweepOffset,
    EstimateFile,
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::RunSynthetic => "run-synthetic",
            Command::SweepNoise => "sweep-noise",
            Command::SweepAnisotropy => "sweep-anisotropy",
            Command::SweepOffset => "sweep-offset",
            Command::EstimateFile => "estimate-file",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Markdown => "md",
        }
    }
}

/// Values swept by the experiment commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub cameras: Vec<CameraKind>,
    /// Translation settings to run; `--no-translation` restricts this to `[false]`.
    pub translation: Vec<bool>,
    /// Noise types; empty means the type of the base `noise` spec.
    pub noise_types: Vec<NoiseType>,
    /// Pixel noise levels for `sweep-noise`.
    pub levels: Vec<f64>,
    /// Fixed anisotropy values for `sweep-anisotropy`.
    pub betas: Vec<f64>,
    /// Covariance offset fractions for `sweep-offset`.
    pub offsets: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cameras: vec![CameraKind::Omni, CameraKind::Pinhole],
            translation: vec![true, false],
            noise_types: Vec::new(),
            levels: vec![0.5, 1.0, 1.5],
            betas: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            offsets: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25],
        }
    }
}

/// Fully resolved configuration. Serializes to a valid config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub solver: SolverConfig,
    pub scene: SceneConfig,
    pub noise: NoiseSpec,
    pub grid: GridConfig,
    pub init: InitMode,
    pub estimators: Vec<Estimator>,
    pub trials: usize,
    pub master_seed: u64,
    pub output_path: PathBuf,
    pub output_format: OutputFormat,
    pub parallelism: usize,
    /// Correspondence file for `estimate-file`.
    pub input: Option<PathBuf>,
}

/// File contents before overrides; every key is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    command: Option<Command>,
    solver: SolverConfig,
    scene: SceneConfig,
    noise: NoiseSpec,
    grid: GridConfig,
    init: InitMode,
    estimators: Vec<Estimator>,
    trials: usize,
    master_seed: Option<u64>,
    output_path: Option<PathBuf>,
    output_format: OutputFormat,
    parallelism: Option<usize>,
    input: Option<PathBuf>,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            command: None,
            solver: SolverConfig::default(),
            scene: SceneConfig::default(),
            noise: NoiseSpec::default(),
            grid: GridConfig::default(),
            init: InitMode::PerturbedTruth { degrees: 1.0 },
            estimators: vec![Estimator::Nec, Estimator::Pnec],
            trials: 1000,
            master_seed: None,
            output_path: None,
            output_format: OutputFormat::Csv,
            parallelism: None,
            input: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub parallelism: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub outer_iterations: Option<usize>,
    pub lattice_points: Option<usize>,
    pub scf_iterations: Option<usize>,
    pub regularization: Option<f64>,
    pub camera: Option<CameraKind>,
    pub no_translation: bool,
    pub input: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config key `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("no command given; pass a subcommand or set `command` in the config")]
    MissingCommand,
    #[error("{SEED_ENV}={0:?} is not an unsigned integer")]
    BadSeed(String),
}

fn invalid(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.to_string() }
}

/// Parse a config document. An empty or whitespace-only document means all defaults.
/// A run manifest is accepted as well and yields the configuration it records.
fn parse_file(text: &str) -> Result<FileConfig, ConfigError> {
    if text.trim().is_empty() {
        return Ok(FileConfig::default());
    }
    let mut value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ConfigError::Parse { key: "<document>".into(), message: e.to_string() })?;
    if value.get("tool").and_then(|t| t.as_str()) == Some(crate::report::MANIFEST_TOOL) {
        value = value.get("config").cloned().unwrap_or(serde_json::Value::Null);
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        ConfigError::Parse { key, message: e.into_inner().to_string() }
    })
}

/// Merge the optional config file, the overrides and the seed fallback, then validate.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &Overrides,
    env_seed: Option<&str>,
) -> Result<RunConfig, ConfigError> {
    let text = match file {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?,
        None => String::new(),
    };
    resolve(parse_file(&text)?, overrides, env_seed)
}

/// As [`parse_config`] for an in-memory document.
pub fn parse_config_str(
    text: &str,
    overrides: &Overrides,
    env_seed: Option<&str>,
) -> Result<RunConfig, ConfigError> {
    resolve(parse_file(text)?, overrides, env_seed)
}

fn resolve(
    mut f: FileConfig,
    o: &Overrides,
    env_seed: Option<&str>,
) -> Result<RunConfig, ConfigError> {
    let command = o.command.or(f.command).ok_or(ConfigError::MissingCommand)?;
    if let Some(v) = o.outer_iterations {
        f.solver.outer_iterations = v;
    }
    if let Some(v) = o.lattice_points {
        f.solver.lattice_points = v;
    }
    if let Some(v) = o.scf_iterations {
        f.solver.scf_iterations = v;
    }
    if let Some(v) = o.regularization {
        f.solver.regularization = v;
    }
    if let Some(camera) = o.camera {
        f.grid.cameras = vec![camera];
    }
    if o.no_translation {
        f.grid.translation = vec![false];
        f.scene.translation_enabled = false;
    }
    let master_seed = match (o.seed, f.master_seed, env_seed) {
        (Some(s), _, _) | (None, Some(s), _) => s,
        (None, None, Some(text)) => text
            .trim()
            .parse()
            .map_err(|_| ConfigError::BadSeed(text.to_string()))?,
        (None, None, None) => 0,
    };
    let output_format = o.format.unwrap_or(f.output_format);
    let output_path = o.output.clone().or(f.output_path).unwrap_or_else(|| {
        PathBuf::from(format!("pnec-{}.{}", command.name(), output_format.extension()))
    });
    let parallelism = o.parallelism.or(f.parallelism).unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    let config = RunConfig {
        command,
        solver: f.solver,
        scene: f.scene,
        noise: f.noise,
        grid: f.grid,
        init: f.init,
        estimators: f.estimators,
        trials: o.trials.unwrap_or(f.trials),
        master_seed,
        output_path,
        output_format,
        parallelism,
        input: o.input.clone().or(f.input),
    };
    validate(&config)?;
    Ok(config)
}

pub fn validate(c: &RunConfig) -> Result<(), ConfigError> {
    c.solver.validate().map_err(|e| invalid("solver", e))?;
    c.scene.validate().map_err(|e| invalid("scene", e))?;
    c.noise.validate().map_err(|e| invalid("noise", e))?;
    if c.trials < 1 {
        return Err(invalid("trials", "must be >= 1"));
    }
    if c.parallelism < 1 {
        return Err(invalid("parallelism", "must be >= 1"));
    }
    if c.estimators.is_empty() {
        return Err(invalid("estimators", "at least one estimator is required"));
    }
    if let InitMode::PerturbedTruth { degrees } = c.init {
        if !(degrees.is_finite() && (0.0..180.0).contains(&degrees)) {
            return Err(invalid("init.degrees", format!("must be in [0, 180), got {degrees}")));
        }
    }
    let g = &c.grid;
    if g.cameras.is_empty() {
        return Err(invalid("grid.cameras", "must not be empty"));
    }
    if g.translation.is_empty() {
        return Err(invalid("grid.translation", "must not be empty"));
    }
    if let Some(l) = g.levels.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(invalid("grid.levels", format!("levels must be > 0, got {l}")));
    }
    if let Some(b) = g.betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(invalid("grid.betas", format!("betas must be in [0, 1], got {b}")));
    }
    if let Some(x) = g.offsets.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid("grid.offsets", format!("offsets must be in [0, 1], got {x}")));
    }
    let swept = match c.command {
        Command::SweepNoise => Some(("grid.levels", g.levels.is_empty())),
        Command::SweepAnisotropy => Some(("grid.betas", g.betas.is_empty())),
        Command::SweepOffset => Some(("grid.offsets", g.offsets.is_empty())),
        _ => None,
    };
    if let Some((key, true)) = swept {
        return Err(invalid(key, "must not be empty for this command"));
    }
    if c.command == Command::EstimateFile && c.input.is_none() {
        return Err(invalid("input", "estimate-file needs a correspondence file"));
    }
    Ok(())
}
