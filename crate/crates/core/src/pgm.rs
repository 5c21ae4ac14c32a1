//! 16-bit binary PGM export for previews, with a JSON sidecar recording the scaling.

use crate::error::Result;
use crate::grid::Grid2D;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Linear mapping applied when quantizing a grid: `value = min + level · step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmScaling {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

/// Encodes `grid` as a P5 PGM with maxval 65535, auto-scaled to its range.
pub fn encode_pgm16(grid: &Grid2D) -> (Vec<u8>, PgmScaling) {
    let (min, max) = (grid.min(), grid.max());
    let span = max - min;
    let step = if span > 0.0 { span / 65535.0 } else { 1.0 };
    let mut out = format!("P5\n{} {}\n65535\n", grid.cols(), grid.rows()).into_bytes();
    for &v in grid.values() {
        let level = ((v - min) / step).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&level.to_be_bytes());
    }
    (out, PgmScaling { min, max, step })
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `path` and `path.json` (the scaling record).
pub fn write_pgm16(path: impl AsRef<Path>, grid: &Grid2D) -> Result<PgmScaling> {
    let path = path.as_ref();
    let (bytes, scaling) = encode_pgm16(grid);
    std::fs::write(path, bytes)?;
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&scaling)?)?;
    Ok(scaling)
}

/// Copy of `grid` with small crosses drawn at the given (x = column, y = row)
/// positions using the grid's maximum value, for overlay previews.
pub fn draw_markers(grid: &Grid2D, points: &[(f64, f64)], arm: usize) -> Grid2D {
    let mut out = grid.clone();
    let level = if grid.max() > grid.min() { grid.max() } else { grid.min() + 1.0 };
    for &(x, y) in points {
        let (cx, cy) = (x.round() as isize, y.round() as isize);
        for d in -(arm as isize)..=arm as isize {
            for (r, c) in [(cy + d, cx), (cy, cx + d)] {
                if r >= 0 && c >= 0 && (r as usize) < out.rows() && (c as usize) < out.cols() {
                    out.set(r as usize, c as usize, level);
                }
            }
        }
    }
    out
}
