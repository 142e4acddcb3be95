use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pnec::simulation::{CameraKind, Estimator};
use pnec_cli::config::{OutputFormat, SEED_ENV};
use pnec_cli::runner::{EXIT_CONFIG, EXIT_OK};
use pnec_cli::{parse_config, run, Command, Overrides, RunError, RunOutcome};

#[derive(Debug, Parser)]
#[command(name = "pnec", version, about = "Relative pose estimation with per-feature uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Option<Sub>,

    /// JSON configuration file or run manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; falls back to the config file, then PNEC_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Alternation rounds before the joint refinement.
    #[arg(long = "solver.S", global = true)]
    outer_iterations: Option<usize>,
    /// Fibonacci lattice size for the translation start point.
    #[arg(long = "solver.K", global = true)]
    lattice_points: Option<usize>,
    #[arg(long = "solver.scf-iters", global = true)]
    scf_iterations: Option<usize>,
    /// Additive residual-variance regularization.
    #[arg(long, global = true)]
    regularization: Option<f64>,
    /// Restrict the grid to one camera model.
    #[arg(long, global = true, value_enum)]
    camera: Option<CameraArg>,
    /// Run only the cells without translation.
    #[arg(long, global = true)]
    no_translation: bool,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// One cell per noise type at the base noise level.
    RunSynthetic,
    /// Noise types by noise level.
    SweepNoise,
    /// Fixed anisotropy ratio per column.
    SweepAnisotropy,
    /// Biased covariances handed to the estimator.
    SweepOffset,
    /// Estimate the pose of a correspondence file and print it as JSON.
    EstimateFile {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "pnec")]
        estimator: EstimatorArg,
    },
    /// Built-in numerical checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CameraArg {
    Omni,
    Pinhole,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Nec,
    Pnec,
}

fn overrides(cli: &Cli) -> Overrides {
    let (command, input) = match &cli.command {
        None => (None, None),
        Some(Sub::RunSynthetic) => (Some(Command::RunSynthetic), None),
        Some(Sub::SweepNoise) => (Some(Command::SweepNoise), None),
        Some(Sub::SweepAnisotropy) => (Some(Command::SweepAnisotropy), None),
        Some(Sub::SweepOffset) => (Some(Command::SweepOffset), None),
        Some(Sub::EstimateFile { path, .. }) => (Some(Command::EstimateFile), Some(path.clone())),
        Some(Sub::Selftest) => (Some(Command::Selftest), None),
    };
    Overrides {
        command,
        seed: cli.seed,
        trials: cli.trials,
        parallelism: cli.parallelism,
        output: cli.output.clone(),
        format: cli.format,
        outer_iterations: cli.outer_iterations,
        lattice_points: cli.lattice_points,
        scf_iterations: cli.scf_iterations,
        regularization: cli.regularization,
        camera: cli.camera.map(|c| match c {
            CameraArg::Omni => CameraKind::Omni,
            CameraArg::Pinhole => CameraKind::Pinhole,
        }),
        no_translation: cli.no_translation,
        input,
    }
}

fn execute(cli: &Cli) -> Result<(), RunError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut config = parse_config(cli.config.as_deref(), &overrides(cli), env_seed.as_deref())?;
    if let Some(Sub::EstimateFile { estimator, .. }) = &cli.command {
        config.estimators = vec![match estimator {
            EstimatorArg::Nec => Estimator::Nec,
            EstimatorArg::Pnec => Estimator::Pnec,
        }];
    }
    match run(&config)? {
        RunOutcome::Estimate(report) => {
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| RunError::Runtime(format!("serializing the estimate: {e}")))?;
            println!("{text}");
        }
        RunOutcome::Experiment { results, manifest, .. } => {
            log::info!("results written to {}, manifest {}", results.display(), manifest.display());
        }
        RunOutcome::Selftest(_) => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
