//! Levenberg–Marquardt fit of a rotated, asymmetric 2D Gaussian plus offset.

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type Vec7 = SVector<f64, 7>;
type Mat7 = SMatrix<f64, 7, 7>;

pub const MIN_ROI: usize = 7;
pub const MAX_ITERATIONS: usize = 200;
pub const REL_COST_TOL: f64 = 1e-10;

/// Rectangle of pixels, `rows × cols` starting at `(row0, col0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Roi {
    pub fn full(image: &Grid2D) -> Self {
        Self { row0: 0, col0: 0, rows: image.rows(), cols: image.cols() }
    }

    /// Square window of side `2·half + 1` around `(x, y)`, shifted to stay
    /// inside the image and shrunk only if the image is smaller.
    pub fn around(image: &Grid2D, x: f64, y: f64, half: usize) -> Self {
        let side_r = (2 * half + 1).min(image.rows());
        let side_c = (2 * half + 1).min(image.cols());
        let place = |center: f64, side: usize, n: usize| -> usize {
            let start = center.round() as isize - (side / 2) as isize;
            start.clamp(0, (n - side) as isize) as usize
        };
        Self { row0: place(y, side_r, image.rows()), col0: place(x, side_c, image.cols()), rows: side_r, cols: side_c }
    }
}

/// Starting point for the fit. Missing fields are estimated from moments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussGuess {
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussFitResult {
    /// Column of the center, image pixels.
    pub x0: f64,
    /// Row of the center, image pixels.
    pub y0: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub theta: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `sqrt(var(x0) + var(y0))` from the scaled inverse normal matrix.
    pub position_uncertainty: f64,
}

impl GaussFitResult {
    pub fn fwhm(&self) -> f64 {
        crate::optics::GAUSS_FWHM_PER_SIGMA * (self.sigma_x * self.sigma_y).sqrt()
    }
}

// parameter order: A, x0, y0, sx, sy, theta, B
fn model_and_jacobian(p: &Vec7, x: f64, y: f64) -> (f64, Vec7) {
    let (a, x0, y0, sx, sy, th, b) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
    let (s, c) = th.sin_cos();
    let (dx, dy) = (x - x0, y - y0);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    let (sx2, sy2) = (sx * sx, sy * sy);
    let e = (-(u * u / (2.0 * sx2) + v * v / (2.0 * sy2))).exp();
    let g = a * e;
    let j = Vec7::from([
        e,
        g * (u * c / sx2 - v * s / sy2),
        g * (u * s / sx2 + v * c / sy2),
        g * u * u / (sx2 * sx),
        g * v * v / (sy2 * sy),
        g * u * v * (1.0 / sy2 - 1.0 / sx2),
        1.0,
    ]);
    (g + b, j)
}

struct Samples {
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    ws: Vec<f64>,
}

fn cost(p: &Vec7, d: &Samples) -> f64 {
    d.xs.iter()
        .zip(&d.ys)
        .zip(&d.zs)
        .zip(&d.ws)
        .map(|(((&x, &y), &z), &w)| {
            let r = model_and_jacobian(p, x, y).0 - z;
            w * r * r
        })
        .sum()
}

fn normal_equations(p: &Vec7, d: &Samples) -> (Mat7, Vec7) {
    let mut jtj = Mat7::zeros();
    let mut jtr = Vec7::zeros();
    for (((&x, &y), &z), &w) in d.xs.iter().zip(&d.ys).zip(&d.zs).zip(&d.ws) {
        let (m, j) = model_and_jacobian(p, x, y);
        jtj += j * j.transpose() * w;
        jtr += j * (w * (z - m));
    }
    (jtj, jtr)
}

fn initial_guess(d: &Samples, guess: &GaussGuess) -> Vec7 {
    let lo = d.zs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = d.zs.iter().map(|z| z - lo).collect();
    let total: f64 = w.iter().sum();
    let mx = d.xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / total;
    let my = d.ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / total;
    let x0 = guess.x0.unwrap_or(mx);
    let y0 = guess.y0.unwrap_or(my);
    let sigma = guess.sigma.unwrap_or_else(|| {
        // area above half maximum ≈ 2π·σ²·ln 2
        let above = d.zs.iter().filter(|&&z| z - lo > 0.5 * (hi - lo)).count() as f64;
        (above / (2.0 * PI * std::f64::consts::LN_2)).sqrt().max(0.5)
    });
    Vec7::from([hi - lo, x0, y0, sigma * 1.05, sigma / 1.05, 0.0, lo])
}

/// Fits `A·exp(−(u²/2σx² + v²/2σy²)) + B`, with `(u, v)` the offsets from
/// `(x0, y0)` rotated by `θ`, to the pixels of `roi`.
///
/// Reports `σx ≥ σy` and `θ ∈ [0, π)`. A fit that exhausts the iteration
/// budget returns its best parameters with `converged = false`.
pub fn fit_gaussian_2d(image: &Grid2D, roi: Roi, init: Option<GaussGuess>) -> Result<GaussFitResult> {
    fit(image, None, roi, init)
}

/// Weighted variant of [`fit_gaussian_2d`]; `weights` are per-pixel inverse
/// variances with the shape of `image`.
pub fn fit_gaussian_2d_weighted(
    image: &Grid2D,
    weights: &Grid2D,
    roi: Roi,
    init: Option<GaussGuess>,
) -> Result<GaussFitResult> {
    image.ensure_same_shape(weights)?;
    if weights.values().iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    fit(image, Some(weights), roi, init)
}

fn fit(image: &Grid2D, weights: Option<&Grid2D>, roi: Roi, init: Option<GaussGuess>) -> Result<GaussFitResult> {
    if roi.rows < MIN_ROI || roi.cols < MIN_ROI {
        return Err(Error::InvalidArgument(format!(
            "ROI {}x{} is smaller than {MIN_ROI}x{MIN_ROI}",
            roi.rows, roi.cols
        )));
    }
    if roi.row0 + roi.rows > image.rows() || roi.col0 + roi.cols > image.cols() {
        return Err(Error::Shape(format!("ROI {roi:?} exceeds image {:?}", image.shape())));
    }
    let mut d = Samples { xs: Vec::new(), ys: Vec::new(), zs: Vec::new(), ws: Vec::new() };
    for r in roi.row0..roi.row0 + roi.rows {
        for c in roi.col0..roi.col0 + roi.cols {
            d.xs.push(c as f64);
            d.ys.push(r as f64);
            d.zs.push(image.get(r, c));
            d.ws.push(weights.map_or(1.0, |w| w.get(r, c)));
        }
    }
    if d.zs.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("fit input".into()));
    }
    let (lo, hi) = d.zs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &z| (l.min(z), h.max(z)));
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Err(Error::Degenerate("constant ROI, nothing to fit".into()));
    }

    let mut p = initial_guess(&d, &init.unwrap_or_default());
    let initial_cost = cost(&p, &d);
    let mut current = initial_cost;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&p, &d);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for i in 0..7 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_cost = if trial[3] > 0.0 && trial[4] > 0.0 { cost(&trial, &d) } else { f64::INFINITY };
            if trial_cost <= current {
                let rel = (current - trial_cost) / current.max(f64::MIN_POSITIVE);
                p = trial;
                current = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < REL_COST_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        // no step reduces the cost: at a minimum to working precision
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
    }

    let (jtj, _) = normal_equations(&p, &d);
    let dof = (d.zs.len() as f64 - 7.0).max(1.0);
    let s2 = current / dof;
    let cov = jtj.pseudo_inverse(1e-12 * jtj.norm()).unwrap_or_else(|_| Mat7::zeros()) * s2;
    let position_uncertainty = (cov[(1, 1)].max(0.0) + cov[(2, 2)].max(0.0)).sqrt();

    let (mut sx, mut sy, mut th) = (p[3].abs(), p[4].abs(), p[5]);
    if sx < sy {
        std::mem::swap(&mut sx, &mut sy);
        th += PI / 2.0;
    }
    th = th.rem_euclid(PI);
    if th >= PI {
        th = 0.0;
    }
    Ok(GaussFitResult {
        x0: p[1],
        y0: p[2],
        sigma_x: sx,
        sigma_y: sy,
        theta: th,
        amplitude: p[0],
        offset: p[6],
        residual_norm: current.sqrt(),
        converged: converged && current <= initial_cost,
        iterations,
        position_uncertainty,
    })
}

/// Fits inside a square window of half-width `half` around `(x, y)`.
pub fn fit_gaussian_at(image: &Grid2D, x: f64, y: f64, half: usize) -> Result<GaussFitResult> {
    let roi = Roi::around(image, x, y, half.max(MIN_ROI / 2));
    fit_gaussian_2d(image, roi, Some(GaussGuess { x0: Some(x), y0: Some(y), sigma: None }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::poisson_sample;
    use crate::rng::RngState;

    #[allow(clippy::too_many_arguments)]
    fn render(n: usize, x0: f64, y0: f64, sx: f64, sy: f64, th: f64, a: f64, b: f64) -> Grid2D {
        let p = Vec7::from([a, x0, y0, sx, sy, th, b]);
        Grid2D::from_fn(n, n, |r, c| model_and_jacobian(&p, c as f64, r as f64).0)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = Vec7::from([3.0, 4.2, 5.1, 2.2, 1.4, 0.7, 0.3]);
        for &(x, y) in &[(3.0, 4.0), (6.0, 2.0), (4.5, 5.5)] {
            let (_, j) = model_and_jacobian(&p, x, y);
            for k in 0..7 {
                let mut up = p;
                let mut dn = p;
                up[k] += 1e-6;
                dn[k] -= 1e-6;
                let fd = (model_and_jacobian(&up, x, y).0 - model_and_jacobian(&dn, x, y).0) / 2e-6;
                assert!((fd - j[k]).abs() < 1e-7, "param {k}: {fd} vs {}", j[k]);
            }
        }
    }

    #[test]
    fn noiseless_recovery() {
        let img = render(50, 25.4, 24.7, 3.0, 2.0, 0.3, 100.0, 5.0);
        let f = fit_gaussian_2d(&img, Roi::full(&img), None).unwrap();
        assert!(f.converged);
        assert!((f.x0 - 25.4).abs() < 0.01 && (f.y0 - 24.7).abs() < 0.01, "{f:?}");
        assert!((f.sigma_x - 3.0).abs() / 3.0 < 0.01);
        assert!((f.sigma_y - 2.0).abs() / 2.0 < 0.01);
        assert!((f.theta - 0.3).abs() < 1e-3);
        assert!((f.amplitude - 100.0).abs() / 100.0 < 0.01);
        assert!(f.residual_norm < 1e-6);
    }

    #[test]
    fn weighted_fit_ignores_zero_weight_pixels() {
        let mut img = render(25, 12.3, 11.8, 2.0, 2.0, 0.0, 50.0, 2.0);
        let mut w = Grid2D::filled(25, 25, 1.0);
        let uniform = fit_gaussian_2d_weighted(&img, &w, Roi::full(&img), None).unwrap();
        let plain = fit_gaussian_2d(&img, Roi::full(&img), None).unwrap();
        assert!((uniform.x0 - plain.x0).abs() < 1e-9 && (uniform.y0 - plain.y0).abs() < 1e-9);
        // a hot pixel next to the peak drags the unweighted fit
        img.set(11, 14, 400.0);
        w.set(11, 14, 0.0);
        let skewed = fit_gaussian_2d(&img, Roi::full(&img), None).unwrap();
        let masked = fit_gaussian_2d_weighted(&img, &w, Roi::full(&img), None).unwrap();
        assert!((skewed.x0 - 12.3).abs() > 0.05);
        assert!((masked.x0 - 12.3).abs() < 1e-6 && (masked.y0 - 11.8).abs() < 1e-6, "{masked:?}");
        w.set(0, 0, -1.0);
        assert!(fit_gaussian_2d_weighted(&img, &w, Roi::full(&img), None).is_err());
    }

    #[test]
    fn canonical_orientation() {
        // σx < σy at θ = 0 is the same shape as σx > σy at θ = π/2
        let img = render(31, 15.0, 15.0, 1.5, 3.0, 0.0, 10.0, 0.0);
        let f = fit_gaussian_2d(&img, Roi::full(&img), None).unwrap();
        assert!(f.sigma_x >= f.sigma_y);
        assert!((f.sigma_x - 3.0).abs() < 0.01 && (f.sigma_y - 1.5).abs() < 0.01);
        assert!((f.theta - PI / 2.0).abs() < 1e-3, "{}", f.theta);
        let sym = render(21, 10.3, 9.6, 2.0, 2.0, 0.0, 10.0, 1.0);
        let f = fit_gaussian_2d(&sym, Roi::full(&sym), None).unwrap();
        assert!(f.sigma_x >= f.sigma_y && (0.0..PI).contains(&f.theta));
        assert!((f.x0 - 10.3).abs() < 1e-6);
    }

    #[test]
    fn noisy_center_precision() {
        let mut errs = Vec::new();
        let root = RngState::new(3);
        for t in 0..100u64 {
            let mut rng = root.child(t);
            let (x0, y0) = (10.0 + rng.uniform(-0.5, 0.5), 10.0 + rng.uniform(-0.5, 0.5));
            // peak 1000 over background 10: SNR ≈ 1000/√1010 ≈ 31 per pixel, ≈ 100 integrated
            let clean = render(21, x0, y0, 1.6, 1.6, 0.0, 1000.0, 10.0);
            let noisy = clean.map(|m| poisson_sample(&mut rng, m).unwrap() as f64);
            let f = fit_gaussian_2d(&noisy, Roi::full(&noisy), None).unwrap();
            errs.push(((f.x0 - x0).powi(2) + (f.y0 - y0).powi(2)).sqrt());
        }
        errs.sort_by(f64::total_cmp);
        assert!(errs[50] < 0.05, "median {}", errs[50]);
    }

    #[test]
    fn uncertainty_tracks_noise() {
        let mut rng = RngState::new(9);
        let clean = render(21, 10.0, 10.0, 1.6, 1.6, 0.0, 400.0, 10.0);
        let noisy = clean.map(|m| poisson_sample(&mut rng, m).unwrap() as f64);
        let f = fit_gaussian_2d(&noisy, Roi::full(&noisy), None).unwrap();
        assert!(f.position_uncertainty > 0.005 && f.position_uncertainty < 0.2, "{}", f.position_uncertainty);
    }

    #[test]
    fn input_validation() {
        let img = render(20, 10.0, 10.0, 2.0, 2.0, 0.0, 1.0, 0.0);
        let small = Roi { row0: 0, col0: 0, rows: 6, cols: 10 };
        assert!(matches!(fit_gaussian_2d(&img, small, None), Err(Error::InvalidArgument(_))));
        let outside = Roi { row0: 15, col0: 0, rows: 7, cols: 7 };
        assert!(matches!(fit_gaussian_2d(&img, outside, None), Err(Error::Shape(_))));
        let flat = Grid2D::filled(10, 10, 3.0);
        assert!(matches!(fit_gaussian_2d(&flat, Roi::full(&flat), None), Err(Error::Degenerate(_))));
    }

    #[test]
    fn roi_around_edges() {
        let img = Grid2D::zeros(20, 30);
        assert_eq!(Roi::around(&img, 1.0, 1.0, 4), Roi { row0: 0, col0: 0, rows: 9, cols: 9 });
        assert_eq!(Roi::around(&img, 29.0, 10.2, 4), Roi { row0: 6, col0: 21, rows: 9, cols: 9 });
        assert_eq!(Roi::around(&img, 10.0, 10.0, 15).rows, 20);
    }
}
