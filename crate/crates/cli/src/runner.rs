//! Command execution and result files.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use pnec::optimizer::{nec_estimate, pnec_estimate};
use pnec::simulation::{run_cell, summarize_cell, thread_pool, CellSummary, Estimator, ExperimentSetup};
use pnec::{EstimateReport, Rotation3};
use thiserror::Error;

use crate::config::{Command, ConfigError, OutputFormat, RunConfig};
use crate::correspondences::{read_correspondences, CorrespondenceError};
use crate::grid::{build_cells, CellSpec};
use crate::report::{self, Manifest, CSV_HEADER, MANIFEST_TOOL, TRUNCATED_MARKER};
use crate::selftest::{run_selftest, SuiteResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_SELFTEST: i32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Input(#[from] CorrespondenceError),
    #[error(transparent)]
    Estimation(#[from] pnec::Error),
    #[error("{failed} selftest suite(s) failed")]
    Selftest { failed: usize },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Selftest { .. } => EXIT_SELFTEST,
            _ => EXIT_RUNTIME,
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug)]
pub enum RunOutcome {
    Experiment { summaries: Vec<CellSummary>, results: PathBuf, manifest: PathBuf },
    Estimate(Box<EstimateReport>),
    Selftest(Vec<SuiteResult>),
}

pub fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    crate::config::validate(config)?;
    match config.command {
        Command::EstimateFile => estimate_file(config).map(|r| RunOutcome::Estimate(Box::new(r))),
        Command::Selftest => {
            let suites = run_selftest(&config.solver)?;
            for s in &suites {
                println!("{} {}: {}", if s.passed { "PASS" } else { "FAIL" }, s.name, s.detail);
            }
            let failed = suites.iter().filter(|s| !s.passed).count();
            if failed > 0 {
                return Err(RunError::Selftest { failed });
            }
            Ok(RunOutcome::Selftest(suites))
        }
        _ => experiment(config),
    }
}

/// Single estimate from a correspondence file, seeded at `R = I`, `t = (0, 0, 1)`.
/// Uses PNEC unless NEC is the only configured estimator.
pub fn estimate_file(config: &RunConfig) -> Result<EstimateReport, RunError> {
    let path = config.input.as_ref().ok_or_else(|| RunError::Runtime("no input file".into()))?;
    let set = read_correspondences(path)?;
    let r0 = Rotation3::identity();
    let report = if config.estimators == [Estimator::Nec] {
        nec_estimate(&set, &config.solver, &r0)?
    } else {
        pnec_estimate(&set, &config.solver, &r0, &Vector3::z_axis())?
    };
    Ok(report)
}

struct Outputs {
    results: PathBuf,
    timing: PathBuf,
    manifest: PathBuf,
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn experiment(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let cells = build_cells(config);
    let setup = ExperimentSetup {
        scene: config.scene,
        solver: config.solver.clone(),
        init: config.init,
        estimators: config.estimators.clone(),
    };
    let out = Outputs {
        results: config.output_path.clone(),
        timing: report::sidecar(&config.output_path, "timing.csv"),
        manifest: report::sidecar(&config.output_path, "manifest.json"),
    };
    if let Some(dir) = out.results.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let pool = thread_pool(config.parallelism)?;
    let mut csv = match config.output_format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(&out.results).map_err(|e| io_error(&out.results, e))?;
            w.write_record(CSV_HEADER).map_err(|e| io_error(&out.results, e))?;
            w.flush().map_err(|e| io_error(&out.results, e))?;
            Some(w)
        }
        OutputFormat::Markdown => None,
    };

    let mut summaries = Vec::new();
    let mut truncated: Option<String> = None;
    let mut completed = 0;
    for (index, spec) in cells.iter().enumerate() {
        let start = Instant::now();
        let results = match pool.install(|| run_cell(&setup, &spec.cell, index, config.trials, config.master_seed)) {
            Ok(r) => r,
            Err(e) => {
                truncated = Some(format!("cell {index} failed: {e}"));
                break;
            }
        };
        let rows = summarize_cell(index, &results, &config.estimators);
        if let Some(w) = csv.as_mut() {
            if let Err(e) = write_rows(w, spec, &rows) {
                truncated = Some(format!("writing cell {index} failed: {e}"));
                break;
            }
        }
        log::info!(
            "cell {}/{} [{} | {}] {} trials in {:.1} s",
            index + 1,
            cells.len(),
            spec.group,
            spec.column,
            config.trials,
            start.elapsed().as_secs_f64()
        );
        summaries.extend(rows);
        completed += 1;
    }

    match csv {
        Some(w) => {
            let mut file = w.into_inner().map_err(|e| io_error(&out.results, e.error()))?;
            if let Some(reason) = &truncated {
                writeln!(file, "# {TRUNCATED_MARKER}: {reason}").map_err(|e| io_error(&out.results, e))?;
            }
        }
        None => write_file(&out.results, &report::markdown(&cells, &summaries, truncated.as_deref()))?,
    }
    write_file(&out.timing, &report::timing_csv(&cells, &summaries))?;
    let manifest = Manifest {
        tool: MANIFEST_TOOL,
        version: env!("CARGO_PKG_VERSION"),
        command: config.command.name(),
        master_seed: config.master_seed,
        results: &out.results,
        timing: &out.timing,
        cells: cells.len(),
        completed_cells: completed,
        truncated: truncated.as_deref(),
        config,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_error(&out.manifest, e))?;
    write_file(&out.manifest, &(text + "\n"))?;

    if let Some(reason) = truncated {
        return Err(RunError::Runtime(format!("run truncated: {reason}")));
    }
    Ok(RunOutcome::Experiment { summaries, results: out.results, manifest: out.manifest })
}

fn write_rows(
    w: &mut csv::Writer<std::fs::File>,
    spec: &CellSpec,
    rows: &[CellSummary],
) -> Result<(), csv::Error> {
    for s in rows {
        w.write_record(report::csv_record(spec, s))?;
    }
    w.flush()?;
    Ok(())
}
