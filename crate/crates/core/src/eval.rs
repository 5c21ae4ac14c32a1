//! Reconstruction metrics: peak extraction, matching against ground truth,
//! Rayleigh-relative distances and an optional collinearity fit.

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::localize::{
    find_peaks, line_fit_tls, match_and_distances, rayleigh_from_fwhm, rayleigh_is_conventional, scale_for,
    DistanceUnit, EmitterEstimate, LineFit, MatchedPair, PixelCalibration,
};
use crate::optics::{EmitterSet, PsfSpec};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Minimum pixel value of a reconstruction peak.
    pub mass_threshold: f64,
    pub min_separation_px: f64,
    /// Fit a line through the estimates (needs at least 3).
    pub line_fit: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { mass_threshold: 1e-3, min_separation_px: 3.0, line_fit: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub unit: DistanceUnit,
    pub n_truth: usize,
    pub n_estimates: usize,
    pub matched: usize,
    pub unmatched_estimates: usize,
    pub unmatched_truth: usize,
    pub mean_distance: Option<f64>,
    pub max_distance: Option<f64>,
    pub rayleigh_limit: Option<f64>,
    /// Mean distance divided by the Rayleigh limit.
    pub rayleigh_ratio: Option<f64>,
    /// Set when the Rayleigh limit for this PSF family is a convention.
    pub rayleigh_conventional: bool,
    pub line_fit: Option<LineFit>,
    /// No emitter could be matched.
    pub failure: bool,
    pub estimates: Vec<EmitterEstimate>,
    pub pairs: Vec<MatchedPair>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per matched pair: estimate index, truth index, positions, distance.
    pub fn write_csv(&self, truth: &EmitterSet, mut out: impl Write) -> std::io::Result<()> {
        let u = self.unit.as_str();
        writeln!(out, "estimate,truth,est_x_px,est_y_px,truth_x_px,truth_y_px,mass,distance_{u}")?;
        for p in &self.pairs {
            let e = &self.estimates[p.a];
            let t = &truth.emitters[p.b];
            writeln!(
                out,
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.6},{:.6}",
                p.a, p.b, e.x, e.y, t.x, t.y, e.mass, p.distance
            )?;
        }
        Ok(())
    }
}

/// Evaluates a unit-mass reconstruction against the emitters that generated it.
/// `psf` supplies the FWHM (high-resolution pixels) for the Rayleigh ratio.
pub fn evaluate_reconstruction(
    recon: &Grid2D,
    truth: &EmitterSet,
    psf: Option<&PsfSpec>,
    cal: Option<&PixelCalibration>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let mass = recon.sum();
    if (mass - 1.0).abs() > 1e-6 || recon.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reconstruction must be non-negative with unit mass, sum is {mass}"
        )));
    }
    let estimates = find_peaks(recon, cfg.mass_threshold, cfg.min_separation_px);
    let m = match_and_distances(&estimates, truth, cal);
    let (scale, unit) = scale_for(cal);
    let rayleigh_limit = psf.map(|p| rayleigh_from_fwhm(p.fwhm_px, p.kind)).transpose()?.map(|r| r * scale);
    let rayleigh_ratio = match (m.mean_distance, rayleigh_limit) {
        (Some(d), Some(r)) => Some(d / r),
        _ => None,
    };
    let line_fit = if cfg.line_fit && estimates.len() >= 3 {
        let pts: Vec<(f64, f64)> = estimates.iter().map(|e| (e.x, e.y)).collect();
        Some(line_fit_tls(&pts, cal)?)
    } else {
        None
    };
    Ok(EvalReport {
        unit,
        n_truth: truth.len(),
        n_estimates: estimates.len(),
        matched: m.pairs.len(),
        unmatched_estimates: m.unmatched_a.len(),
        unmatched_truth: m.unmatched_b.len(),
        mean_distance: m.mean_distance,
        max_distance: m.max_distance,
        rayleigh_limit,
        rayleigh_ratio,
        rayleigh_conventional: psf.is_some_and(|p| rayleigh_is_conventional(p.kind)),
        line_fit,
        failure: m.pairs.is_empty(),
        estimates,
        pairs: m.pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{Emitter, PsfKind};

    fn truth(points: &[(f64, f64)]) -> EmitterSet {
        EmitterSet::new(points.iter().map(|&(x, y)| Emitter { x, y, mean_photons: 100.0 }).collect(), 64)
    }

    #[test]
    fn perfect_impulses() {
        let pts = [(10.0, 10.0), (40.0, 12.0), (20.0, 50.0), (50.0, 50.0)];
        let mut g = Grid2D::zeros(64, 64);
        for &(x, y) in &pts {
            g.set(y as usize, x as usize, 0.25);
        }
        let psf = PsfSpec::symmetric(PsfKind::Airy, 8.0);
        let r = evaluate_reconstruction(&g, &truth(&pts), Some(&psf), None, &EvalConfig::default()).unwrap();
        assert_eq!((r.matched, r.n_truth), (4, 4));
        assert_eq!(r.mean_distance, Some(0.0));
        assert_eq!(r.rayleigh_ratio, Some(0.0));
        assert!(!r.failure && !r.rayleigh_conventional);
        assert_eq!(r.unit, DistanceUnit::Px);
        let json = r.to_json().unwrap();
        assert!(json.contains("\"rayleigh_ratio\"") && json.contains("\"unit\": \"px\""));
        let mut csv = Vec::new();
        r.write_csv(&truth(&pts), &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    #[test]
    fn uniform_reconstruction_fails() {
        let g = Grid2D::filled(32, 32, 1.0 / 1024.0);
        let r = evaluate_reconstruction(&g, &truth(&[(5.0, 5.0)]), None, None, &EvalConfig::default()).unwrap();
        assert_eq!(r.matched, 0);
        assert!(r.failure);
        assert!(r.rayleigh_ratio.is_none());
    }

    #[test]
    fn calibrated_rayleigh_in_nm() {
        let mut g = Grid2D::zeros(32, 32);
        g.set(10, 11, 1.0);
        let cal = PixelCalibration::new(20.0).unwrap();
        let psf = PsfSpec::symmetric(PsfKind::Gaussian, 10.0);
        let r = evaluate_reconstruction(&g, &truth(&[(10.0, 10.0)]), Some(&psf), Some(&cal), &EvalConfig::default())
            .unwrap();
        assert_eq!(r.unit, DistanceUnit::Nm);
        assert!((r.mean_distance.unwrap() - 20.0).abs() < 1e-12);
        assert!((r.rayleigh_limit.unwrap() - 20.0 * 10.0 * crate::optics::airy_zero_per_fwhm()).abs() < 1e-9);
        assert!(r.rayleigh_conventional);
    }

    #[test]
    fn rejects_unnormalized() {
        let g = Grid2D::filled(4, 4, 1.0);
        assert!(evaluate_reconstruction(&g, &truth(&[(1.0, 1.0)]), None, None, &EvalConfig::default()).is_err());
    }
}
