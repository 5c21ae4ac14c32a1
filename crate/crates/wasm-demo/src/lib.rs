//! Browser demo: PSF preview, scene synthesis with Gaussian-fit localization,
//! and blinking frame-difference localization.

use qdsr::localize::{detection_map, fit_gaussian_at, frame_difference_localize};
use qdsr::optics::{
    hi_to_lo, measure_first_minimum, measure_fwhm, render_psf, render_scene, Emitter, EmitterSet, PsfKind, PsfSpec,
    Scene,
};
use qdsr::{Grid2D, RngState};
use wasm_bindgen::prelude::*;

fn kind(name: &str) -> Result<PsfKind, String> {
    name.parse().map_err(|e: qdsr::Error| e.to_string())
}

fn err(e: qdsr::Error) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct PsfPreview {
    size: usize,
    values: Vec<f64>,
    measured_fwhm: f64,
    anisotropy: f64,
    first_zero: f64,
}

#[wasm_bindgen]
impl PsfPreview {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major kernel values.
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn measured_fwhm(&self) -> f64 {
        self.measured_fwhm
    }

    #[wasm_bindgen(getter)]
    pub fn anisotropy(&self) -> f64 {
        self.anisotropy
    }

    /// Radius of the first dark ring, NaN for Gaussian kernels.
    #[wasm_bindgen(getter)]
    pub fn first_zero(&self) -> f64 {
        self.first_zero
    }
}

/// Renders a PSF (FWHM in high-resolution pixels) and measures it.
#[wasm_bindgen]
pub fn psf_preview(kind_name: &str, fwhm: f64, squeeze: f64, angle_deg: f64) -> Result<PsfPreview, String> {
    let spec = PsfSpec { kind: kind(kind_name)?, fwhm_px: fwhm, squeeze, axis_angle: angle_deg.to_radians() };
    spec.validate().map_err(err)?;
    let k = render_psf(&spec, spec.min_support()).map_err(err)?;
    let across = spec.axis_angle + std::f64::consts::FRAC_PI_2;
    let measured_fwhm = measure_fwhm(&k, across);
    Ok(PsfPreview {
        size: k.grid().rows(),
        values: k.grid().values().to_vec(),
        measured_fwhm,
        anisotropy: measure_fwhm(&k, spec.axis_angle) / measured_fwhm,
        first_zero: if spec.kind == PsfKind::Airy { measure_first_minimum(&k, across) } else { f64::NAN },
    })
}

fn cluster(rng: &mut RngState, hi: usize, n: usize, radius: f64, photons: f64) -> Vec<Emitter> {
    let margin = radius + 8.0;
    let (cx, cy) = (rng.uniform(margin, hi as f64 - margin), rng.uniform(margin, hi as f64 - margin));
    (0..n)
        .map(|_| {
            let (r, a) = (radius * rng.uniform01().sqrt(), rng.uniform(0.0, std::f64::consts::TAU));
            Emitter { x: cx + r * a.cos(), y: cy + r * a.sin(), mean_photons: photons * rng.uniform(0.7, 1.3) }
        })
        .collect()
}

/// Local maxima of the 3×3 box-smoothed frame that rise `min_rise` above the median.
fn candidates(frame: &Grid2D, min_rise: f64) -> Vec<(usize, usize)> {
    let (rows, cols) = frame.shape();
    let smooth = Grid2D::from_fn(rows, cols, |r, c| {
        let mut s = 0.0;
        let mut n = 0.0;
        for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                s += frame.get(rr, cc);
                n += 1.0;
            }
        }
        s / n
    });
    let mut sorted = smooth.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let base = sorted[sorted.len() / 2];
    let mut out = Vec::new();
    for r in 1..rows.saturating_sub(1) {
        for c in 1..cols.saturating_sub(1) {
            let v = smooth.get(r, c);
            let is_max = (r - 1..=r + 1).all(|rr| (c - 1..=c + 1).all(|cc| smooth.get(rr, cc) <= v));
            if is_max && v - base > min_rise {
                out.push((r, c));
            }
        }
    }
    out
}

#[wasm_bindgen]
pub struct SimulatedFrame {
    lo_size: usize,
    frame: Vec<f64>,
    truth_x: Vec<f64>,
    truth_y: Vec<f64>,
    fit_x: Vec<f64>,
    fit_y: Vec<f64>,
}

#[wasm_bindgen]
impl SimulatedFrame {
    #[wasm_bindgen(getter)]
    pub fn lo_size(&self) -> usize {
        self.lo_size
    }

    /// Row-major photon counts.
    #[wasm_bindgen(getter)]
    pub fn frame(&self) -> Vec<f64> {
        self.frame.clone()
    }

    /// Emitter positions on the camera grid.
    #[wasm_bindgen(getter)]
    pub fn truth_x(&self) -> Vec<f64> {
        self.truth_x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth_y(&self) -> Vec<f64> {
        self.truth_y.clone()
    }

    /// Gaussian-fit centers on the camera grid.
    #[wasm_bindgen(getter)]
    pub fn fit_x(&self) -> Vec<f64> {
        self.fit_x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn fit_y(&self) -> Vec<f64> {
        self.fit_y.clone()
    }
}

fn check_scene_args(lo_size: usize, n: usize, fwhm: f64, photons: f64, background: f64) -> Result<(), String> {
    if !(8..=128).contains(&lo_size) {
        return Err(format!("frame size must be in 8..=128, got {lo_size}"));
    }
    if !(1..=50).contains(&n) {
        return Err(format!("emitter count must be in 1..=50, got {n}"));
    }
    if !(fwhm > 0.0 && photons > 0.0 && background >= 0.0) {
        return Err("fwhm and photons must be positive, background non-negative".into());
    }
    Ok(())
}

/// Simulates a camera frame of `n` emitters scattered over the field and
/// localizes them with Gaussian fits around local maxima.
#[wasm_bindgen]
pub fn simulate_frame(
    seed: u32,
    lo_size: usize,
    n: usize,
    kind_name: &str,
    fwhm: f64,
    photons: f64,
    background: f64,
) -> Result<SimulatedFrame, String> {
    check_scene_args(lo_size, n, fwhm, photons, background)?;
    let hi = 4 * lo_size;
    let root = RngState::new(seed as u64);
    let mut rng = root.child(0);
    let emitters: Vec<Emitter> = (0..n)
        .map(|_| Emitter {
            x: rng.uniform(fwhm, hi as f64 - fwhm),
            y: rng.uniform(fwhm, hi as f64 - fwhm),
            mean_photons: photons * rng.uniform(0.7, 1.3),
        })
        .collect();
    let scene = Scene {
        emitters: EmitterSet::new(emitters, hi),
        psf: PsfSpec::symmetric(kind(kind_name)?, fwhm),
        background_mean: background,
    };
    let sim = render_scene(&root, scene).map_err(err)?;
    let half = ((1.5 * fwhm / 4.0).ceil() as usize).max(3);
    let noise = (background.max(1.0)).sqrt();
    let fits: Vec<(f64, f64)> = candidates(&sim.frame, 5.0 * noise)
        .into_iter()
        .filter_map(|(r, c)| fit_gaussian_at(&sim.frame, c as f64, r as f64, half).ok())
        .filter(|f| f.converged && f.amplitude > 0.0)
        .map(|f| (f.x0, f.y0))
        .collect();
    let em = &sim.scene.emitters.emitters;
    Ok(SimulatedFrame {
        lo_size,
        frame: sim.frame.values().to_vec(),
        truth_x: em.iter().map(|e| hi_to_lo(e.x.round())).collect(),
        truth_y: em.iter().map(|e| hi_to_lo(e.y.round())).collect(),
        fit_x: fits.iter().map(|f| f.0).collect(),
        fit_y: fits.iter().map(|f| f.1).collect(),
    })
}

#[wasm_bindgen]
pub struct BlinkResult {
    lo_size: usize,
    before: Vec<f64>,
    after: Vec<f64>,
    detection: Vec<f64>,
    removed_x: f64,
    removed_y: f64,
    found_x: f64,
    found_y: f64,
    message: String,
}

#[wasm_bindgen]
impl BlinkResult {
    #[wasm_bindgen(getter)]
    pub fn lo_size(&self) -> usize {
        self.lo_size
    }

    #[wasm_bindgen(getter)]
    pub fn before(&self) -> Vec<f64> {
        self.before.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn after(&self) -> Vec<f64> {
        self.after.clone()
    }

    /// Standardized difference map used for detection.
    #[wasm_bindgen(getter)]
    pub fn detection(&self) -> Vec<f64> {
        self.detection.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn removed_x(&self) -> f64 {
        self.removed_x
    }

    #[wasm_bindgen(getter)]
    pub fn removed_y(&self) -> f64 {
        self.removed_y
    }

    /// NaN when no event was detected.
    #[wasm_bindgen(getter)]
    pub fn found_x(&self) -> f64 {
        self.found_x
    }

    #[wasm_bindgen(getter)]
    pub fn found_y(&self) -> f64 {
        self.found_y
    }

    #[wasm_bindgen(getter)]
    pub fn message(&self) -> String {
        self.message.clone()
    }
}

/// Two exposures of a tight cluster of `n` emitters, one of which switches off
/// in the second; the switched-off emitter is localized from the difference.
#[wasm_bindgen]
pub fn blink_localize(
    seed: u32,
    lo_size: usize,
    n: usize,
    kind_name: &str,
    fwhm: f64,
    photons: f64,
    background: f64,
) -> Result<BlinkResult, String> {
    check_scene_args(lo_size, n, fwhm, photons, background)?;
    if 4.0 * lo_size as f64 <= 2.0 * (fwhm + 8.0) {
        return Err("the cluster does not fit in the frame; enlarge it or reduce the FWHM".into());
    }
    let hi = 4 * lo_size;
    let root = RngState::new(seed as u64);
    let mut rng = root.child(0);
    let before = cluster(&mut rng, hi, n, fwhm, photons);
    let removed = rng.below(n);
    let mut after = before.clone();
    let gone = after.remove(removed);
    let psf = PsfSpec::symmetric(kind(kind_name)?, fwhm);
    let scene = |e: Vec<Emitter>| Scene { emitters: EmitterSet::new(e, hi), psf, background_mean: background };
    let a = render_scene(&root.child(1), scene(before)).map_err(err)?;
    let b = render_scene(&root.child(2), scene(after)).map_err(err)?;
    let z = detection_map(&a.frame, &b.frame).map_err(err)?;
    let (rx, ry) = (hi_to_lo(gone.x.round()), hi_to_lo(gone.y.round()));
    let (found_x, found_y, message) = match frame_difference_localize(&a.frame, &b.frame) {
        Ok(f) => (f.x0, f.y0, format!("localized within {:.3} camera pixels", (f.x0 - rx).hypot(f.y0 - ry))),
        Err(e) => (f64::NAN, f64::NAN, e.to_string()),
    };
    Ok(BlinkResult {
        lo_size,
        before: a.frame.values().to_vec(),
        after: b.frame.values().to_vec(),
        detection: z.values().to_vec(),
        removed_x: rx,
        removed_y: ry,
        found_x,
        found_y,
        message,
    })
}
