//! Classical localization baselines and the distance metrics used to judge
//! reconstructions.

mod blink;
mod gauss_fit;
mod line;
mod matching;
mod peaks;

pub use blink::*;
pub use gauss_fit::*;
pub use line::*;
pub use matching::*;
pub use peaks::*;

use crate::error::{Error, Result};
use crate::optics::{airy_zero_per_fwhm, PsfKind};

/// Rayleigh distance for a PSF of the given FWHM, in the same unit.
///
/// Airy PSFs use the first-zero radius, `fwhm · j₁,₁ / (2·v½)`. Gaussian PSFs
/// reuse the same factor by convention; reports label that case.
pub fn rayleigh_from_fwhm(fwhm: f64, kind: PsfKind) -> Result<f64> {
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::InvalidArgument(format!("fwhm must be positive, got {fwhm}")));
    }
    let _ = kind;
    Ok(fwhm * airy_zero_per_fwhm())
}

/// Whether the Rayleigh distance for `kind` is a convention rather than a
/// property of the PSF.
pub fn rayleigh_is_conventional(kind: PsfKind) -> bool {
    kind == PsfKind::Gaussian
}
