//! Plain-text correspondence files.
//!
//! One feature per line: three reals for the host bearing, three for the target
//! bearing and nine for the row-major target covariance, separated by whitespace.
//! Text after `#` is ignored.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Unit, Vector3};
use pnec::{BearingPair, CorrespondenceSet};
use thiserror::Error;

/// Norm deviation above which a bearing is reported before normalization.
pub const NORM_WARNING: f64 = 1e-6;
const FIELDS: usize = 15;

#[derive(Debug, Error)]
pub enum CorrespondenceError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Degenerate(#[from] pnec::Error),
}

fn bearing(v: Vector3<f64>, line: usize, what: &str) -> Result<pnec::UnitVector3, CorrespondenceError> {
    let norm = v.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(CorrespondenceError::Line { line, message: format!("{what} has zero or invalid norm") });
    }
    if (norm - 1.0).abs() > NORM_WARNING {
        log::warn!("line {line}: {what} has norm {norm}; normalizing");
    }
    Ok(Unit::new_normalize(v))
}

pub fn parse_correspondences(text: &str) -> Result<CorrespondenceSet, CorrespondenceError> {
    let mut pairs = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let values = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| CorrespondenceError::Line {
                    line,
                    message: format!("`{tok}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != FIELDS {
            return Err(CorrespondenceError::Line {
                line,
                message: format!("expected {FIELDS} values, found {}", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CorrespondenceError::Line { line, message: format!("non-finite value {v}") });
        }
        let host = bearing(Vector3::from_column_slice(&values[0..3]), line, "host bearing")?;
        let target = bearing(Vector3::from_column_slice(&values[3..6]), line, "target bearing")?;
        let cov = Matrix3::from_row_slice(&values[6..15]);
        let pair = BearingPair::new(host, target, cov).map_err(|_| CorrespondenceError::Line {
            line,
            message: "covariance is not symmetric positive semidefinite".into(),
        })?;
        pairs.push(pair);
    }
    Ok(CorrespondenceSet::new(pairs)?)
}

pub fn read_correspondences(path: &Path) -> Result<CorrespondenceSet, CorrespondenceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CorrespondenceError::Io { path: path.display().to_string(), source })?;
    parse_correspondences(&text)
}

/// Text form of `pairs`; reals are written in their shortest round-trip form.
pub fn format_correspondences(pairs: &[BearingPair]) -> String {
    let mut out = String::from("# f_host(3) f_target(3) cov_target(9, row-major)\n");
    for p in pairs {
        let cov = p.cov_target.transpose();
        let values = p.f_host.iter().chain(p.f_target.iter()).chain(cov.iter());
        let fields: Vec<String> = values.map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", fields.join(" "));
    }
    out
}

pub fn write_correspondences(path: &Path, pairs: &[BearingPair]) -> Result<(), CorrespondenceError> {
    std::fs::write(path, format_correspondences(pairs))
        .map_err(|source| CorrespondenceError::Io { path: path.display().to_string(), source })
}
