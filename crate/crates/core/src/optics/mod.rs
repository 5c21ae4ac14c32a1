//! Optical forward model: PSF families and frame synthesis.

mod psf;
mod scene;

pub use psf::{
    airy_intensity, airy_zero_per_fwhm, bessel_j1, measure_first_minimum, measure_fwhm, render_blended_psf, render_psf,
    PsfKind, PsfSpec, AIRY_HALF_MAX_ARG, BESSEL_J1_FIRST_ZERO, GAUSS_FWHM_PER_SIGMA,
};
pub use scene::{
    hi_to_lo, lo_to_hi, rasterize_ground_truth, render_scene, sample_scene, scene_kernel, simulate, synthesize_frame,
    synthesize_frame_with, Emitter, EmitterSet, Scene, SceneConfig, ShotNoise, SimulatedScene, BIN_FACTOR,
};
