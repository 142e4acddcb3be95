//! Experiment grids. Cell order is fixed: camera, then translation setting, then the
//! swept value, each in the order given by the configuration.

use pnec::simulation::{Cell, NoiseSpec, NoiseType};

use crate::config::{Command, RunConfig};

/// A grid cell with the labels used by the reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub cell: Cell,
    /// Markdown table the cell belongs to.
    pub group: String,
    /// Column label inside the group.
    pub column: String,
}

fn noise_types(config: &RunConfig) -> Vec<NoiseType> {
    if config.grid.noise_types.is_empty() {
        vec![config.noise.noise_type]
    } else {
        config.grid.noise_types.clone()
    }
}

/// Swept values of one command as `(noise, offset, column label, group suffix)`.
fn variants(config: &RunConfig) -> Vec<(NoiseSpec, f64, String, String)> {
    let base = config.noise;
    let g = &config.grid;
    match config.command {
        Command::SweepNoise => noise_types(config)
            .into_iter()
            .flat_map(|ty| {
                g.levels.iter().map(move |&level| {
                    (NoiseSpec { noise_type: ty, level, ..base }, 0.0, format!("{level} px"), ty.name().to_string())
                })
            })
            .collect(),
        Command::SweepAnisotropy => g
            .betas
            .iter()
            .map(|&b| {
                let noise = NoiseSpec { beta_range: [b, b], ..base };
                (noise, 0.0, format!("β={b}"), format!("{} {} px", base.noise_type.name(), base.level))
            })
            .collect(),
        Command::SweepOffset => g
            .offsets
            .iter()
            .map(|&x| {
                (base, x, format!("offset {x}"), format!("{} {} px", base.noise_type.name(), base.level))
            })
            .collect(),
        _ => noise_types(config)
            .into_iter()
            .map(|ty| {
                let noise = NoiseSpec { noise_type: ty, ..base };
                (noise, 0.0, ty.name().to_string(), format!("{} px", base.level))
            })
            .collect(),
    }
}

pub fn build_cells(config: &RunConfig) -> Vec<CellSpec> {
    let variants = variants(config);
    let mut out = Vec::new();
    for &camera in &config.grid.cameras {
        for &translation in &config.grid.translation {
            let motion = if translation { "with translation" } else { "without translation" };
            for (noise, offset, column, suffix) in &variants {
                out.push(CellSpec {
                    cell: Cell { camera, translation, noise: *noise, offset_fraction: *offset },
                    group: format!("{}, {motion}, {suffix}", camera.name()),
                    column: column.clone(),
                });
            }
        }
    }
    out
}
