use crate::grid::Grid2D;
use serde::{Deserialize, Serialize};

/// Radius of the centroid neighbourhood, high-resolution pixels.
pub const CENTROID_RADIUS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterEstimate {
    /// Column, high-resolution pixels.
    pub x: f64,
    /// Row, high-resolution pixels.
    pub y: f64,
    /// Reconstruction mass inside the centroid disc.
    pub mass: f64,
    pub support_radius: f64,
}

/// Plateau-safe local maximum: strictly above neighbours that come earlier in
/// row-major order, at least as high as later ones.
fn is_local_max(g: &Grid2D, r: usize, c: usize) -> bool {
    let v = g.get(r, c);
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= g.rows() as isize || nc >= g.cols() as isize {
                continue;
            }
            let n = g.get(nr as usize, nc as usize);
            let earlier = dr < 0 || (dr == 0 && dc < 0);
            if (earlier && n >= v) || n > v {
                return false;
            }
        }
    }
    true
}

fn centroid(g: &Grid2D, r: usize, c: usize) -> (f64, f64, f64) {
    let rad = CENTROID_RADIUS as isize;
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for dr in -rad..=rad {
        for dc in -rad..=rad {
            if dr * dr + dc * dc > rad * rad {
                continue;
            }
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= g.rows() as isize || nc >= g.cols() as isize {
                continue;
            }
            let v = g.get(nr as usize, nc as usize).max(0.0);
            m += v;
            sx += v * nc as f64;
            sy += v * nr as f64;
        }
    }
    (sx / m, sy / m, m)
}

/// Local maxima whose pixel value exceeds `mass_threshold`, refined by the
/// intensity-weighted centroid over a radius-3 disc, then greedily kept in
/// order of decreasing mass so that no two are closer than `min_separation_px`.
pub fn find_peaks(recon: &Grid2D, mass_threshold: f64, min_separation_px: f64) -> Vec<EmitterEstimate> {
    let mut cands = Vec::new();
    for r in 0..recon.rows() {
        for c in 0..recon.cols() {
            let v = recon.get(r, c);
            if v > mass_threshold && v > 0.0 && is_local_max(recon, r, c) {
                let (x, y, m) = centroid(recon, r, c);
                cands.push(EmitterEstimate { x, y, mass: m.min(1.0), support_radius: CENTROID_RADIUS as f64 });
            }
        }
    }
    cands.sort_by(|a, b| b.mass.total_cmp(&a.mass));
    let min2 = min_separation_px * min_separation_px;
    let mut kept: Vec<EmitterEstimate> = Vec::new();
    for e in cands {
        if kept.iter().all(|k| (k.x - e.x).powi(2) + (k.y - e.y).powi(2) >= min2) {
            kept.push(e);
        }
    }
    kept
}
