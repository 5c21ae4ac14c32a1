//! Calibration-free super-resolution of point emitters.
//!
//! A convolutional network learns to map a diffraction-limited camera frame
//! to a 4× finer map of emitter density, trained only on simulated scenes.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod grid;
pub mod localize;
pub mod net;
pub mod numerics;
pub mod optics;
pub mod pgm;
pub mod poisson;
pub mod qsrt;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use grid::{Grid2D, Kernel};
pub use rng::RngState;
