//! Synthetic evaluation scenes with known geometry.

use crate::error::{Error, Result};
use crate::localize::rayleigh_from_fwhm;
use crate::optics::{render_scene, Emitter, EmitterSet, PsfSpec, Scene, SceneConfig, SimulatedScene};
use crate::rng::RngState;
use std::f64::consts::PI;

const MAX_TRIES: usize = 10_000;

fn draw_psf(rng: &mut RngState, cfg: &SceneConfig) -> PsfSpec {
    let kind = cfg.psf_kinds[rng.below(cfg.psf_kinds.len())];
    PsfSpec::symmetric(kind, rng.uniform(cfg.fwhm_range[0], cfg.fwhm_range[1]))
}

fn draw_photons(rng: &mut RngState, cfg: &SceneConfig) -> f64 {
    rng.log_uniform(cfg.intensity_range[0], cfg.intensity_range[1])
}

fn finish(
    rng: &RngState,
    cfg: &SceneConfig,
    psf: PsfSpec,
    emitters: Vec<Emitter>,
    stream: &mut RngState,
) -> Result<SimulatedScene> {
    let background_mean = stream.uniform(cfg.background_range[0], cfg.background_range[1]);
    render_scene(rng, Scene { emitters: EmitterSet::new(emitters, cfg.hi_size), psf, background_mean })
}

/// Rayleigh distance of a scene's PSF, high-resolution pixels.
pub fn scene_rayleigh(scene: &Scene) -> f64 {
    rayleigh_from_fwhm(scene.psf.fwhm_px, scene.psf.kind).expect("scene fwhm is positive")
}

/// Two emitters `ratio × Rayleigh` apart at a random orientation, with a
/// symmetric PSF drawn from `cfg`.
pub fn pair_scene(rng: &RngState, cfg: &SceneConfig, ratio: f64) -> Result<SimulatedScene> {
    cfg.validate()?;
    let mut s = rng.child(0);
    let psf = draw_psf(&mut s, cfg);
    let sep = ratio * rayleigh_from_fwhm(psf.fwhm_px, psf.kind)?;
    let margin = 0.5 * sep + psf.fwhm_px;
    let size = cfg.hi_size as f64;
    if 2.0 * margin >= size {
        return Err(Error::InvalidArgument(format!("separation {sep:.1} px does not fit a {size} px field")));
    }
    let (cx, cy) = (s.uniform(margin, size - margin), s.uniform(margin, size - margin));
    let a = s.uniform(0.0, PI);
    let (dx, dy) = (0.5 * sep * a.cos(), 0.5 * sep * a.sin());
    let emitters = vec![
        Emitter { x: cx - dx, y: cy - dy, mean_photons: draw_photons(&mut s, cfg) },
        Emitter { x: cx + dx, y: cy + dy, mean_photons: draw_photons(&mut s, cfg) },
    ];
    finish(rng, cfg, psf, emitters, &mut s)
}

/// `n` emitters at least `min_sep_fwhm × FWHM` apart and one FWHM from the border.
pub fn sparse_scene(rng: &RngState, cfg: &SceneConfig, n: usize, min_sep_fwhm: f64) -> Result<SimulatedScene> {
    cfg.validate()?;
    let mut s = rng.child(0);
    let psf = draw_psf(&mut s, cfg);
    let size = cfg.hi_size as f64;
    let (margin, min_sep) = (psf.fwhm_px, min_sep_fwhm * psf.fwhm_px);
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n);
    for _ in 0..MAX_TRIES {
        if pts.len() == n {
            break;
        }
        let p = (s.uniform(margin, size - margin), s.uniform(margin, size - margin));
        if pts.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= min_sep) {
            pts.push(p);
        }
    }
    if pts.len() < n {
        return Err(Error::Generation(format!("could not place {n} emitters {min_sep:.1} px apart")));
    }
    let emitters = pts.into_iter().map(|(x, y)| Emitter { x, y, mean_photons: draw_photons(&mut s, cfg) }).collect();
    finish(rng, cfg, psf, emitters, &mut s)
}

/// `n` emitters on a straight line, `spacing_rayleigh × Rayleigh` apart.
pub fn collinear_scene(rng: &RngState, cfg: &SceneConfig, n: usize, spacing_rayleigh: f64) -> Result<SimulatedScene> {
    cfg.validate()?;
    let mut s = rng.child(0);
    let psf = draw_psf(&mut s, cfg);
    let step = spacing_rayleigh * rayleigh_from_fwhm(psf.fwhm_px, psf.kind)?;
    let half = 0.5 * step * (n as f64 - 1.0);
    let size = cfg.hi_size as f64;
    let margin = half + psf.fwhm_px;
    if 2.0 * margin >= size {
        return Err(Error::InvalidArgument(format!("line of {n} emitters does not fit a {size} px field")));
    }
    let (cx, cy) = (s.uniform(margin, size - margin), s.uniform(margin, size - margin));
    let a = s.uniform(0.0, PI);
    let emitters = (0..n)
        .map(|i| {
            let t = i as f64 * step - half;
            Emitter { x: cx + t * a.cos(), y: cy + t * a.sin(), mean_photons: draw_photons(&mut s, cfg) }
        })
        .collect();
    finish(rng, cfg, psf, emitters, &mut s)
}

/// Two exposures of a cluster of `n` emitters within one FWHM of each other.
#[derive(Debug, Clone)]
pub struct BlinkPair {
    pub before: SimulatedScene,
    pub after: SimulatedScene,
    /// Index into `before.scene.emitters` of the emitter missing from `after`,
    /// or `None` when both exposures show the same emitters.
    pub removed: Option<usize>,
}

pub fn blink_pair(rng: &RngState, cfg: &SceneConfig, n: usize, remove_one: bool) -> Result<BlinkPair> {
    cfg.validate()?;
    let mut s = rng.child(0);
    let psf = draw_psf(&mut s, cfg);
    let size = cfg.hi_size as f64;
    let radius = psf.fwhm_px;
    let margin = radius + 2.0 * psf.fwhm_px;
    let (cx, cy) = (s.uniform(margin, size - margin), s.uniform(margin, size - margin));
    let emitters: Vec<Emitter> = (0..n)
        .map(|_| {
            let (r, a) = (radius * s.uniform01().sqrt(), s.uniform(0.0, 2.0 * PI));
            Emitter { x: cx + r * a.cos(), y: cy + r * a.sin(), mean_photons: draw_photons(&mut s, cfg) }
        })
        .collect();
    let background_mean = s.uniform(cfg.background_range[0], cfg.background_range[1]);
    let removed = remove_one.then(|| s.below(n));
    let mut after = emitters.clone();
    if let Some(i) = removed {
        after.remove(i);
    }
    let scene = |e: Vec<Emitter>| Scene { emitters: EmitterSet::new(e, cfg.hi_size), psf, background_mean };
    Ok(BlinkPair {
        before: render_scene(&rng.child(1), scene(emitters))?,
        after: render_scene(&rng.child(2), scene(after))?,
        removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SceneConfig {
        SceneConfig { hi_size: 128, lo_size: 32, fwhm_range: [8.0, 16.0], ..Default::default() }
    }

    #[test]
    fn pair_geometry() {
        for i in 0..20 {
            let sim = pair_scene(&RngState::new(i), &cfg(), 0.7).unwrap();
            let e = &sim.scene.emitters.emitters;
            let d = (e[0].x - e[1].x).hypot(e[0].y - e[1].y);
            assert!((d - 0.7 * scene_rayleigh(&sim.scene)).abs() < 1e-9);
            assert_eq!(sim.frame.shape(), (32, 32));
        }
    }

    #[test]
    fn sparse_separation() {
        let sim = sparse_scene(&RngState::new(3), &cfg(), 4, 3.0).unwrap();
        let e = &sim.scene.emitters.emitters;
        assert_eq!(e.len(), 4);
        for i in 0..4 {
            for j in i + 1..4 {
                assert!((e[i].x - e[j].x).hypot(e[i].y - e[j].y) >= 3.0 * sim.scene.psf.fwhm_px);
            }
        }
    }

    #[test]
    fn collinear_points() {
        let sim = collinear_scene(&RngState::new(5), &cfg(), 3, 1.5).unwrap();
        let p = sim.scene.emitters.positions();
        let cross = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
        assert!(cross.abs() < 1e-9);
    }

    #[test]
    fn blink_removes_one() {
        let b = blink_pair(&RngState::new(2), &cfg(), 6, true).unwrap();
        assert_eq!(b.before.scene.emitters.len(), 6);
        assert_eq!(b.after.scene.emitters.len(), 5);
        let same = blink_pair(&RngState::new(2), &cfg(), 6, false).unwrap();
        assert!(same.removed.is_none());
        assert_eq!(same.before.scene.emitters, same.after.scene.emitters);
        assert_ne!(same.before.frame, same.after.frame);
    }
}
