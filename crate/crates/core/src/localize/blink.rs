//! Localizing an emitter that switched off between two frames.

use super::gauss_fit::{fit_gaussian_2d_weighted, GaussFitResult, GaussGuess, Roi, MIN_ROI};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::numerics::{gaussian_kernel_1d, separable_filter};

/// Detection threshold in units of the robust noise scale.
pub const DETECTION_SIGMAS: f64 = 5.0;
/// Width of the matched smoothing filter, camera pixels.
pub const SMOOTHING_SIGMA: f64 = 1.0;
/// Consistency constant turning a median absolute deviation into a standard deviation.
pub const MAD_TO_SIGMA: f64 = 1.482_602_218_505_602;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Smoothed difference divided by its shot-noise standard deviation. Under no
/// change every pixel is roughly unit-variance, bright or dark.
pub fn detection_map(frame_a: &Grid2D, frame_b: &Grid2D) -> Result<Grid2D> {
    frame_a.ensure_same_shape(frame_b)?;
    let taps = gaussian_kernel_1d(SMOOTHING_SIGMA)?;
    let sq: Vec<f64> = taps.iter().map(|t| t * t).collect();
    let d = frame_a.zip_map(frame_b, |a, b| a - b)?;
    let var = frame_a.zip_map(frame_b, |a, b| (a + b).max(1.0))?;
    let num = separable_filter(&d, &taps);
    let den = separable_filter(&var, &sq);
    num.zip_map(&den, |n, v| n / v.sqrt())
}

/// Localizes the emitter present in `frame_a` but not in `frame_b`.
///
/// The event must exceed [`DETECTION_SIGMAS`] times the robust (MAD) scale of
/// the detection map. The blob is fitted once in a small window to estimate
/// its FWHM, then refitted in a window of 3×FWHM. Both fits weight pixels by
/// the inverse shot-noise variance of the difference.
pub fn frame_difference_localize(frame_a: &Grid2D, frame_b: &Grid2D) -> Result<GaussFitResult> {
    let z = detection_map(frame_a, frame_b)?;
    let med = median(z.values().to_vec());
    let scale = MAD_TO_SIGMA * median(z.values().iter().map(|v| (v - med).abs()).collect());
    let (pr, pc) = z.argmax();
    let peak = z.get(pr, pc) - med;
    let threshold = DETECTION_SIGMAS * scale;
    if !(peak > threshold) {
        return Err(Error::NoBlinkingEvent { peak, threshold });
    }
    let d = frame_a.zip_map(frame_b, |a, b| a - b)?;
    let w = frame_a.zip_map(frame_b, |a, b| 1.0 / (a + b).max(1.0))?;
    let guess = GaussGuess { x0: Some(pc as f64), y0: Some(pr as f64), sigma: None };
    let first = fit_gaussian_2d_weighted(&d, &w, Roi::around(&d, pc as f64, pr as f64, MIN_ROI), Some(guess))?;
    let inside = |f: &GaussFitResult| f.x0 >= 0.0 && f.y0 >= 0.0 && f.x0 < d.cols() as f64 && f.y0 < d.rows() as f64;
    let (cx, cy, fwhm) = if inside(&first) && first.fwhm().is_finite() {
        (first.x0, first.y0, first.fwhm())
    } else {
        (pc as f64, pr as f64, 2.0)
    };
    let half = ((1.5 * fwhm).ceil() as usize).max(MIN_ROI / 2);
    let refined = fit_gaussian_2d_weighted(
        &d,
        &w,
        Roi::around(&d, cx, cy, half),
        Some(GaussGuess { x0: Some(cx), y0: Some(cy), sigma: Some(fwhm / crate::optics::GAUSS_FWHM_PER_SIGMA) }),
    )?;
    Ok(if inside(&refined) { refined } else { first })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{hi_to_lo, scene_kernel, synthesize_frame, synthesize_frame_with, PsfKind, PsfSpec, ShotNoise};
    use crate::rng::RngState;

    fn truth(emitters: &[(f64, f64, f64)], n: usize) -> Grid2D {
        let mut g = Grid2D::zeros(n, n);
        for &(x, y, m) in emitters {
            let (r, c) = (y.round() as usize, x.round() as usize);
            g.set(r, c, g.get(r, c) + m);
        }
        g
    }

    #[test]
    fn identical_frames_have_no_event() {
        let f = Grid2D::from_fn(20, 20, |r, c| 10.0 + ((r * 7 + c * 3) % 11) as f64);
        assert!(matches!(frame_difference_localize(&f, &f), Err(Error::NoBlinkingEvent { .. })));
    }

    #[test]
    fn removed_emitter_is_found() {
        let psf = scene_kernel(&PsfSpec::symmetric(PsfKind::Gaussian, 10.0)).unwrap();
        let all = [(41.0, 50.0, 4000.0), (57.0, 46.0, 4000.0), (49.0, 62.0, 4000.0)];
        let ta = truth(&all, 100);
        let tb = truth(&all[1..], 100);
        let mut rng = RngState::new(1);
        let a = synthesize_frame(&mut rng, &ta, &psf, 20.0).unwrap();
        let b = synthesize_frame(&mut rng, &tb, &psf, 20.0).unwrap();
        let f = frame_difference_localize(&a, &b).unwrap();
        let (ex, ey) = (hi_to_lo(41.0), hi_to_lo(50.0));
        assert!(((f.x0 - ex).powi(2) + (f.y0 - ey).powi(2)).sqrt() < 0.2, "{f:?} vs {ex},{ey}");
    }

    #[test]
    fn noise_only_pairs_rarely_trigger() {
        let psf = scene_kernel(&PsfSpec::symmetric(PsfKind::Airy, 12.0)).unwrap();
        let set = [(30.0, 30.0, 5000.0), (60.0, 35.0, 3000.0), (45.0, 70.0, 8000.0)];
        let t = truth(&set, 100);
        let clean = synthesize_frame_with(&mut RngState::new(0), &t, &psf, 100.0, ShotNoise::None).unwrap();
        let root = RngState::new(2);
        let mut events = 0;
        for i in 0..200 {
            let mut rng = root.child(i);
            let a = clean.map(|m| crate::poisson::poisson_sample(&mut rng, m).unwrap() as f64);
            let b = clean.map(|m| crate::poisson::poisson_sample(&mut rng, m).unwrap() as f64);
            if frame_difference_localize(&a, &b).is_ok() {
                events += 1;
            }
        }
        assert!(events <= 1, "{events} false events in 200 pairs");
    }
}
