use super::peaks::EmitterEstimate;
use crate::error::{Error, Result};
use crate::optics::EmitterSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCalibration {
    pub nm_per_hires_pixel: f64,
}

impl PixelCalibration {
    pub fn new(nm_per_hires_pixel: f64) -> Result<Self> {
        if !(nm_per_hires_pixel > 0.0) || !nm_per_hires_pixel.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pixel calibration must be positive and finite, got {nm_per_hires_pixel}"
            )));
        }
        Ok(Self { nm_per_hires_pixel })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnit {
    Px,
    Nm,
}

impl DistanceUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceUnit::Px => "px",
            DistanceUnit::Nm => "nm",
        }
    }
}

/// Converts high-resolution pixels to the reporting unit.
pub fn scale_for(cal: Option<&PixelCalibration>) -> (f64, DistanceUnit) {
    match cal {
        Some(c) => (c.nm_per_hires_pixel, DistanceUnit::Nm),
        None => (1.0, DistanceUnit::Px),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub mean_distance: Option<f64>,
    pub max_distance: Option<f64>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    pub unit: DistanceUnit,
}

/// Greedy nearest-neighbour matching: repeatedly pairs the closest remaining
/// points (ties by index). Coordinates are high-resolution pixels; distances
/// are reported in nm when a calibration is given.
pub fn match_points(a: &[(f64, f64)], b: &[(f64, f64)], cal: Option<&PixelCalibration>) -> Matching {
    let (scale, unit) = scale_for(cal);
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            all.push((((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt(), i, j));
        }
    }
    all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (d, i, j) in all {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push(MatchedPair { a: i, b: j, distance: d * scale });
        }
    }
    let n = pairs.len();
    let mean_distance = (n > 0).then(|| pairs.iter().map(|p| p.distance).sum::<f64>() / n as f64);
    let max_distance = pairs.iter().map(|p| p.distance).reduce(f64::max);
    Matching {
        pairs,
        mean_distance,
        max_distance,
        unmatched_a: (0..a.len()).filter(|&i| !used_a[i]).collect(),
        unmatched_b: (0..b.len()).filter(|&j| !used_b[j]).collect(),
        unit,
    }
}

/// Matches reconstruction estimates (`a`) against the generating emitters (`b`).
pub fn match_and_distances(est: &[EmitterEstimate], truth: &EmitterSet, cal: Option<&PixelCalibration>) -> Matching {
    let a: Vec<(f64, f64)> = est.iter().map(|e| (e.x, e.y)).collect();
    match_points(&a, &truth.positions(), cal)
}
