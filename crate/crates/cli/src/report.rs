//! Result files: CSV rows, markdown tables, the run manifest and the timing sidecar.
//!
//! CSV columns, in order:
//! `camera, translation, noise_type, level_px, beta_min, beta_max, offset_fraction,
//! estimator, trials, failures, mean_e_rot_deg, std_e_rot_deg, mean_e_t_deg,
//! std_e_t_deg, median_energy`. Translation errors are empty for cells without
//! translation. Rows follow the grid order, estimators in configuration order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pnec::simulation::CellSummary;
use serde::Serialize;

use crate::config::RunConfig;
use crate::grid::CellSpec;

pub const CSV_HEADER: [&str; 15] = [
    "camera",
    "translation",
    "noise_type",
    "level_px",
    "beta_min",
    "beta_max",
    "offset_fraction",
    "estimator",
    "trials",
    "failures",
    "mean_e_rot_deg",
    "std_e_rot_deg",
    "mean_e_t_deg",
    "std_e_t_deg",
    "median_energy",
];

/// Marker line appended to a results file when the run stopped early.
pub const TRUNCATED_MARKER: &str = "TRUNCATED";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_record(spec: &CellSpec, s: &CellSummary) -> Vec<String> {
    let c = &spec.cell;
    vec![
        c.camera.name().to_string(),
        c.translation.to_string(),
        c.noise.noise_type.name().to_string(),
        c.noise.level.to_string(),
        c.noise.beta_range[0].to_string(),
        c.noise.beta_range[1].to_string(),
        c.offset_fraction.to_string(),
        s.estimator.name().to_string(),
        s.trials.to_string(),
        s.failures.to_string(),
        s.mean_e_rot.to_string(),
        s.std_e_rot.to_string(),
        opt(s.mean_e_t),
        opt(s.std_e_t),
        s.median_energy.to_string(),
    ]
}

/// Tables with one row per estimator and one column per swept value, as
/// `mean e_rot / mean e_t` in degrees.
pub fn markdown(cells: &[CellSpec], summaries: &[CellSummary], truncated: Option<&str>) -> String {
    let mut groups: Vec<&str> = Vec::new();
    for spec in cells {
        if !groups.contains(&spec.group.as_str()) {
            groups.push(&spec.group);
        }
    }
    let mut out = String::from("Mean rotation error / mean translation error in degrees.\n");
    for group in groups {
        let members: Vec<(usize, &CellSpec)> =
            cells.iter().enumerate().filter(|(_, c)| c.group == group).collect();
        let mut estimators: Vec<_> = Vec::new();
        for s in summaries.iter().filter(|s| members.iter().any(|(i, _)| *i == s.cell)) {
            if !estimators.contains(&s.estimator) {
                estimators.push(s.estimator);
            }
        }
        if estimators.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\n### {group}\n");
        let header: Vec<&str> = members.iter().map(|(_, c)| c.column.as_str()).collect();
        let _ = writeln!(out, "| Method | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(header.len()));
        for est in estimators {
            let row: Vec<String> = members
                .iter()
                .map(|(i, _)| {
                    summaries
                        .iter()
                        .find(|s| s.cell == *i && s.estimator == est)
                        .map(|s| match s.mean_e_t {
                            Some(t) => format!("{:.3} / {:.2}", s.mean_e_rot, t),
                            None => format!("{:.3}", s.mean_e_rot),
                        })
                        .unwrap_or_default()
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", est.name().to_uppercase(), row.join(" | "));
        }
    }
    if let Some(reason) = truncated {
        let _ = writeln!(out, "\n**{TRUNCATED_MARKER}**: {reason}");
    }
    out
}

/// Timing sidecar: mean wall time per cell and estimator. Kept out of the CSV so
/// that the CSV depends only on the configuration and seed.
pub fn timing_csv(cells: &[CellSpec], summaries: &[CellSummary]) -> String {
    let mut out = String::from("cell,camera,translation,column,estimator,mean_wall_time_s\n");
    for s in summaries {
        let spec = &cells[s.cell];
        let _ = writeln!(
            out,
            "{},{},{},\"{}\",{},{}",
            s.cell,
            spec.cell.camera.name(),
            spec.cell.translation,
            spec.column,
            s.estimator.name(),
            s.mean_wall_time
        );
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub master_seed: u64,
    pub results: &'a Path,
    pub timing: &'a Path,
    pub cells: usize,
    pub completed_cells: usize,
    pub truncated: Option<&'a str>,
    /// The resolved configuration; `--config` accepts this manifest to rerun it.
    pub config: &'a RunConfig,
}

pub const MANIFEST_TOOL: &str = "pnec";

pub fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    output.with_extension(suffix)
}
