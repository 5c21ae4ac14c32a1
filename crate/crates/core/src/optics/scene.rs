//! Random scenes, ground-truth rasters and noisy low-resolution frames.

use super::psf::{render_psf, PsfKind, PsfSpec};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, Kernel};
use crate::numerics::{bin_sum, convolve_fft};
use crate::poisson::poisson_sample;
use crate::rng::RngState;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Ratio between the ground-truth and camera grids.
pub const BIN_FACTOR: usize = 4;

/// Converts a high-resolution pixel coordinate to the low-resolution grid
/// (pixel centers at integers on both grids).
#[inline]
pub fn hi_to_lo(coord: f64) -> f64 {
    (coord - 1.5) / BIN_FACTOR as f64
}

#[inline]
pub fn lo_to_hi(coord: f64) -> f64 {
    coord * BIN_FACTOR as f64 + 1.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    /// Column on the high-resolution grid.
    pub x: f64,
    /// Row on the high-resolution grid.
    pub y: f64,
    pub mean_photons: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterSet {
    pub emitters: Vec<Emitter>,
    pub grid_hi: usize,
    pub grid_lo: usize,
}

impl EmitterSet {
    pub fn new(emitters: Vec<Emitter>, grid_hi: usize) -> Self {
        Self { emitters, grid_hi, grid_lo: grid_hi / BIN_FACTOR }
    }

    pub fn len(&self) -> usize {
        self.emitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emitters.is_empty()
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.emitters.iter().map(|e| (e.x, e.y)).collect()
    }
}

/// Ranges the scene sampler draws from. Sizes and widths are in pixels of the
/// stated grid; intensities and backgrounds in photons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub hi_size: usize,
    pub lo_size: usize,
    pub n_emitters_range: [usize; 2],
    pub fwhm_range: [f64; 2],
    pub intensity_range: [f64; 2],
    pub background_range: [f64; 2],
    pub squeeze_min: f64,
    pub psf_kinds: Vec<PsfKind>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            hi_size: 200,
            lo_size: 50,
            n_emitters_range: [1, 15],
            fwhm_range: [8.0, 40.0],
            intensity_range: [1.0, 1e4],
            background_range: [1.0, 100.0],
            squeeze_min: 0.6,
            psf_kinds: vec![PsfKind::Gaussian, PsfKind::Airy],
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.lo_size == 0 || self.hi_size != BIN_FACTOR * self.lo_size {
            return bad(format!("hi_size {} must be {BIN_FACTOR} x lo_size {}", self.hi_size, self.lo_size));
        }
        let [n0, n1] = self.n_emitters_range;
        if n0 == 0 || n1 < n0 {
            return bad(format!("invalid emitter count range {n0}..={n1}"));
        }
        for (name, [lo, hi]) in [
            ("fwhm_range", self.fwhm_range),
            ("intensity_range", self.intensity_range),
            ("background_range", self.background_range),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return bad(format!("{name} must be positive and ordered, got [{lo}, {hi}]"));
            }
        }
        if !(self.squeeze_min > 0.0 && self.squeeze_min <= 1.0) {
            return bad(format!("squeeze_min must be in (0, 1], got {}", self.squeeze_min));
        }
        if self.psf_kinds.is_empty() {
            return bad("psf_kinds must not be empty".into());
        }
        Ok(())
    }
}

/// One randomly drawn imaging condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub emitters: EmitterSet,
    pub psf: PsfSpec,
    pub background_mean: f64,
}

pub fn sample_scene(rng: &mut RngState, config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let [n0, n1] = config.n_emitters_range;
    let count = rng.int_inclusive(n0, n1);
    let size = config.hi_size as f64;
    let emitters = (0..count)
        .map(|_| Emitter {
            x: rng.uniform(0.0, size),
            y: rng.uniform(0.0, size),
            mean_photons: rng.log_uniform(config.intensity_range[0], config.intensity_range[1]),
        })
        .collect();
    let kind = config.psf_kinds[rng.below(config.psf_kinds.len())];
    let psf = PsfSpec {
        kind,
        fwhm_px: rng.uniform(config.fwhm_range[0], config.fwhm_range[1]),
        squeeze: rng.uniform(config.squeeze_min, 1.0),
        axis_angle: rng.uniform(0.0, PI),
    };
    let background_mean = rng.uniform(config.background_range[0], config.background_range[1]);
    Ok(Scene { emitters: EmitterSet::new(emitters, config.hi_size), psf, background_mean })
}

/// Deposits a Poisson draw of each emitter's mean at its nearest pixel.
pub fn rasterize_ground_truth(rng: &mut RngState, emitters: &EmitterSet) -> Result<Grid2D> {
    let n = emitters.grid_hi;
    let mut truth = Grid2D::zeros(n, n);
    for e in &emitters.emitters {
        if !(e.x >= -0.5 && e.y >= -0.5 && e.x < n as f64 && e.y < n as f64) {
            return Err(Error::InvalidArgument(format!("emitter at ({}, {}) outside {n}x{n} grid", e.x, e.y)));
        }
        let col = (e.x.round() as usize).min(n - 1);
        let row = (e.y.round() as usize).min(n - 1);
        truth[(row, col)] += poisson_sample(rng, e.mean_photons)? as f64;
    }
    Ok(truth)
}

/// Photon statistics applied to the binned image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotNoise {
    Poisson,
    /// Expected counts without sampling; for conservation checks.
    None,
}

/// Blurs, bins and adds background with shot noise.
pub fn synthesize_frame(rng: &mut RngState, truth: &Grid2D, psf: &Kernel, background_mean: f64) -> Result<Grid2D> {
    synthesize_frame_with(rng, truth, psf, background_mean, ShotNoise::Poisson)
}

pub fn synthesize_frame_with(
    rng: &mut RngState,
    truth: &Grid2D,
    psf: &Kernel,
    background_mean: f64,
    noise: ShotNoise,
) -> Result<Grid2D> {
    if !(background_mean >= 0.0) || !background_mean.is_finite() {
        return Err(Error::InvalidArgument(format!("background must be >= 0, got {background_mean}")));
    }
    let blurred = convolve_fft(truth, psf)?;
    // FFT round-off can leave tiny negative values where the image is dark.
    let low = bin_sum(&blurred.map(|v| v.max(0.0)), BIN_FACTOR)?;
    let mut out = low.map(|v| v + background_mean);
    if noise == ShotNoise::Poisson {
        for v in out.values_mut() {
            *v = poisson_sample(rng, *v)? as f64;
        }
    }
    Ok(out)
}

/// Kernel for a scene PSF at its minimum admissible support.
pub fn scene_kernel(psf: &PsfSpec) -> Result<Kernel> {
    render_psf(psf, psf.min_support())
}

/// A scene together with its rasters.
#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub scene: Scene,
    pub truth: Grid2D,
    pub frame: Grid2D,
}

/// Runs the whole simulation chain for one scene. Scene parameters, truth
/// photon draws and frame noise use separate child streams of `rng`.
pub fn simulate(rng: &RngState, config: &SceneConfig) -> Result<SimulatedScene> {
    let scene = sample_scene(&mut rng.child(0), config)?;
    render_scene(rng, scene)
}

/// Rasterizes and images a given scene using child streams 1 and 2 of `rng`.
pub fn render_scene(rng: &RngState, scene: Scene) -> Result<SimulatedScene> {
    let truth = rasterize_ground_truth(&mut rng.child(1), &scene.emitters)?;
    let kernel = scene_kernel(&scene.psf)?;
    let frame = synthesize_frame(&mut rng.child(2), &truth, &kernel, scene.background_mean)?;
    Ok(SimulatedScene { scene, truth, frame })
}
