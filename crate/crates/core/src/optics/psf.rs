//! Parametric point-spread functions rendered onto odd-sized kernels.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Kernel};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Argument `v` at which the Airy intensity `[2·J₁(v)/v]²` falls to one half.
pub const AIRY_HALF_MAX_ARG: f64 = 1.616_339_948_310_703;
/// First positive zero of J₁.
pub const BESSEL_J1_FIRST_ZERO: f64 = 3.831_705_970_207_512;
/// FWHM = 2·√(2 ln 2)·σ for a Gaussian.
pub const GAUSS_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Ratio of the Airy first-zero radius to its FWHM (≈ 1.18530).
pub fn airy_zero_per_fwhm() -> f64 {
    BESSEL_J1_FIRST_ZERO / (2.0 * AIRY_HALF_MAX_ARG)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsfKind {
    Gaussian,
    Airy,
}

impl std::str::FromStr for PsfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(PsfKind::Gaussian),
            "airy" => Ok(PsfKind::Airy),
            other => Err(Error::InvalidArgument(format!("unknown PSF kind {other:?}"))),
        }
    }
}

/// PSF shape in high-resolution pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsfSpec {
    pub kind: PsfKind,
    pub fwhm_px: f64,
    /// Width scale along `axis_angle`, in (0, 1].
    pub squeeze: f64,
    /// Squeeze axis, radians from the +column direction towards +row.
    pub axis_angle: f64,
}

impl PsfSpec {
    pub fn symmetric(kind: PsfKind, fwhm_px: f64) -> Self {
        Self { kind, fwhm_px, squeeze: 1.0, axis_angle: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_px > 0.0) || !self.fwhm_px.is_finite() {
            return Err(Error::InvalidArgument(format!("fwhm must be positive, got {}", self.fwhm_px)));
        }
        if !(self.squeeze > 0.0 && self.squeeze <= 1.0) {
            return Err(Error::InvalidArgument(format!("squeeze must be in (0, 1], got {}", self.squeeze)));
        }
        if !self.axis_angle.is_finite() {
            return Err(Error::InvalidArgument("axis angle must be finite".into()));
        }
        Ok(())
    }

    /// Smallest admissible support: `ceil(3·fwhm)` rounded up to odd.
    pub fn min_support(&self) -> usize {
        let n = (3.0 * self.fwhm_px).ceil() as usize;
        n | 1
    }

    /// Unnormalized radial profile value at radius `r` (peak 1 at r = 0).
    pub fn profile(&self, r: f64) -> f64 {
        match self.kind {
            PsfKind::Gaussian => {
                let sigma = self.fwhm_px / GAUSS_FWHM_PER_SIGMA;
                (-r * r / (2.0 * sigma * sigma)).exp()
            }
            PsfKind::Airy => {
                let c = 2.0 * AIRY_HALF_MAX_ARG / self.fwhm_px;
                airy_intensity(c * r)
            }
        }
    }

    /// Profile at offset (dx = columns, dy = rows) from the center, with the squeeze applied.
    pub fn value_at(&self, dx: f64, dy: f64) -> f64 {
        let (s, c) = self.axis_angle.sin_cos();
        let u = (dx * c + dy * s) / self.squeeze;
        let v = -dx * s + dy * c;
        self.profile((u * u + v * v).sqrt())
    }
}

/// `[2·J₁(v)/v]²`, equal to 1 at v = 0.
pub fn airy_intensity(v: f64) -> f64 {
    if v.abs() < 1e-8 {
        return 1.0;
    }
    let a = 2.0 * bessel_j1(v) / v;
    a * a
}

/// Bessel function of the first kind, order one.
///
/// Evaluates `J₁(x) = (1/π)∫₀^π cos(τ − x·sin τ) dτ` with the trapezoidal rule;
/// the integrand is smooth and periodic, so the rule converges geometrically.
pub fn bessel_j1(x: f64) -> f64 {
    let n = 32 + (x.abs().ceil() as usize) * 2;
    let h = PI / n as f64;
    let f = |t: f64| (t - x * t.sin()).cos();
    let mut acc = 0.5 * (f(0.0) + f(PI));
    for i in 1..n {
        acc += f(i as f64 * h);
    }
    acc * h / PI
}

/// Renders `spec` on a `support`×`support` kernel sampled at pixel centers and
/// normalized to unit sum.
pub fn render_psf(spec: &PsfSpec, support: usize) -> Result<Kernel> {
    spec.validate()?;
    if support.is_multiple_of(2) {
        return Err(Error::Shape(format!("PSF support must be odd, got {support}")));
    }
    let half = (support - 1) / 2;
    if spec.kind == PsfKind::Airy && (half as f64) < airy_zero_per_fwhm() * spec.fwhm_px {
        return Err(Error::InvalidArgument(format!(
            "support {support} does not contain the first Airy zero at radius {:.2}",
            airy_zero_per_fwhm() * spec.fwhm_px
        )));
    }
    if support < spec.min_support() {
        return Err(Error::InvalidArgument(format!(
            "support {support} below minimum {} for fwhm {}",
            spec.min_support(),
            spec.fwhm_px
        )));
    }
    let c = half as f64;
    Kernel::normalize(Grid2D::from_fn(support, support, |i, j| spec.value_at(j as f64 - c, i as f64 - c)))
}

/// Normalized mixture `(1 − w)·Gaussian + w·Airy` with shared width and squeeze.
/// Only used to build held-out test PSFs between the two training families.
pub fn render_blended_psf(
    fwhm_px: f64,
    squeeze: f64,
    axis_angle: f64,
    airy_weight: f64,
    support: usize,
) -> Result<Kernel> {
    if !(0.0..=1.0).contains(&airy_weight) {
        return Err(Error::InvalidArgument(format!("blend weight must be in [0, 1], got {airy_weight}")));
    }
    let g = render_psf(&PsfSpec { kind: PsfKind::Gaussian, fwhm_px, squeeze, axis_angle }, support)?;
    let a = render_psf(&PsfSpec { kind: PsfKind::Airy, fwhm_px, squeeze, axis_angle }, support)?;
    let mixed = g.grid().zip_map(a.grid(), |x, y| (1.0 - airy_weight) * x + airy_weight * y)?;
    Kernel::normalize(mixed)
}

/// Bilinear sample of `grid` at fractional (x = column, y = row); zero outside.
fn sample_bilinear(grid: &Grid2D, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |r: f64, c: f64| {
        if r < 0.0 || c < 0.0 || r as usize >= grid.rows() || c as usize >= grid.cols() {
            0.0
        } else {
            grid.get(r as usize, c as usize)
        }
    };
    at(y0, x0) * (1.0 - fx) * (1.0 - fy)
        + at(y0, x0 + 1.0) * fx * (1.0 - fy)
        + at(y0 + 1.0, x0) * (1.0 - fx) * fy
        + at(y0 + 1.0, x0 + 1.0) * fx * fy
}

/// Full width at half maximum of a centered kernel along direction `angle`,
/// measured by marching outwards from the center on both sides and linearly
/// interpolating the half-maximum crossings.
pub fn measure_fwhm(kernel: &Kernel, angle: f64) -> f64 {
    let g = kernel.grid();
    let (cr, cc) = kernel.center();
    let peak = g.get(cr, cc);
    let half = 0.5 * peak;
    let (s, c) = angle.sin_cos();
    let step = 0.01;
    let max_r = (g.rows().min(g.cols()) as f64 - 1.0) / 2.0;
    let crossing = |sign: f64| -> f64 {
        let mut prev = peak;
        let mut r = 0.0;
        while r < max_r {
            let next_r = r + step;
            let v = sample_bilinear(g, cc as f64 + sign * next_r * c, cr as f64 + sign * next_r * s);
            if v <= half {
                return r + step * (prev - half) / (prev - v);
            }
            prev = v;
            r = next_r;
        }
        max_r
    };
    crossing(1.0) + crossing(-1.0)
}

/// Radius of the first dark ring of the kernel along `angle`.
///
/// Uses the pixels within 0.75 px of the ray, which are exact samples of the
/// profile since kernels are point-sampled. The first sample that is lowest
/// within ±1 px and its lower neighbour bracket the ring; the amplitude `√I`
/// changes sign there, so the root of the signed amplitude is interpolated
/// linearly between them.
pub fn measure_first_minimum(kernel: &Kernel, angle: f64) -> f64 {
    let g = kernel.grid();
    let (cr, cc) = kernel.center();
    let (s, c) = angle.sin_cos();
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let (dx, dy) = (j as f64 - cc as f64, i as f64 - cr as f64);
            let t = dx * c + dy * s;
            if t > 0.0 && (-dx * s + dy * c).abs() <= 0.75 {
                samples.push((t, g.get(i, j).max(0.0).sqrt()));
            }
        }
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_r = ((g.rows().min(g.cols()) - 1) / 2) as f64;
    for (k, &(t, a)) in samples.iter().enumerate() {
        if t < 1.0 || t > max_r - 1.0 || samples.iter().any(|p| (p.0 - t).abs() <= 1.0 && p.1 < a) {
            continue;
        }
        let left = samples[..k].iter().rev().find(|p| p.0 < t - 1e-9);
        let right = samples[k + 1..].iter().find(|p| p.0 > t + 1e-9);
        let root = match (left, right) {
            (Some(l), Some(r)) if l.1 <= r.1 => t - (t - l.0) * a / (a + l.1),
            (_, Some(r)) => t + (r.0 - t) * a / (a + r.1),
            (Some(l), None) => t - (t - l.0) * a / (a + l.1),
            (None, None) => t,
        };
        return root;
    }
    max_r
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Power series of J₁, independent of the quadrature route.
    fn j1_series(x: f64) -> f64 {
        let mut term = x / 2.0;
        let mut sum = term;
        for m in 1..60 {
            term *= -(x * x / 4.0) / (m as f64 * (m as f64 + 1.0));
            sum += term;
        }
        sum
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn j1_matches_series() {
        for i in 0..100 {
            let x = i as f64 * 0.1;
            assert!((bessel_j1(x) - j1_series(x)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn airy_constants_from_root_finding() {
        let zero = bisect(j1_series, 3.0, 4.5);
        assert!((zero - BESSEL_J1_FIRST_ZERO).abs() < 1e-12);
        let half = bisect(
            |v| {
                let a = 2.0 * j1_series(v) / v;
                a * a - 0.5
            },
            1.0,
            2.5,
        );
        assert!((half - AIRY_HALF_MAX_ARG).abs() < 1e-12);
        assert!((airy_zero_per_fwhm() - zero / (2.0 * half)).abs() < 1e-12);
        assert!((airy_zero_per_fwhm() - 1.18530).abs() < 1e-5);
    }

    #[test]
    fn gaussian_fwhm_8() {
        let spec = PsfSpec::symmetric(PsfKind::Gaussian, 8.0);
        assert!((8.0 / GAUSS_FWHM_PER_SIGMA - 3.39728).abs() < 1e-5);
        let k = render_psf(&spec, spec.min_support()).unwrap();
        let m = measure_fwhm(&k, 0.0);
        assert!((m - 8.0).abs() < 0.1, "{m}");
    }

    #[test]
    fn airy_first_zero_radius() {
        for fwhm in [8.0, 17.0, 40.0] {
            let spec = PsfSpec::symmetric(PsfKind::Airy, fwhm);
            let k = render_psf(&spec, spec.min_support()).unwrap();
            let r0 = measure_first_minimum(&k, 0.0);
            let expected = 1.18533 * fwhm;
            assert!((r0 - expected).abs() / expected < 0.02, "fwhm {fwhm}: {r0}");
            let m = measure_fwhm(&k, 0.0);
            assert!((m - fwhm).abs() / fwhm < 0.02, "fwhm {fwhm}: {m}");
        }
    }

    #[test]
    fn unsqueezed_kernel_is_isotropic() {
        for kind in [PsfKind::Gaussian, PsfKind::Airy] {
            let a = render_psf(&PsfSpec { kind, fwhm_px: 11.0, squeeze: 1.0, axis_angle: 0.0 }, 35).unwrap();
            let b = render_psf(&PsfSpec { kind, fwhm_px: 11.0, squeeze: 1.0, axis_angle: 1.1 }, 35).unwrap();
            let diff = a.grid().values().iter().zip(b.grid().values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(diff < 1e-9);
        }
    }

    #[test]
    fn squeeze_scales_width_along_axis() {
        for kind in [PsfKind::Gaussian, PsfKind::Airy] {
            let spec = PsfSpec { kind, fwhm_px: 20.0, squeeze: 0.7, axis_angle: 0.4 };
            let k = render_psf(&spec, spec.min_support()).unwrap();
            let along = measure_fwhm(&k, 0.4);
            let across = measure_fwhm(&k, 0.4 + PI / 2.0);
            assert!((along - 14.0).abs() / 14.0 < 0.03, "{kind:?} {along}");
            assert!((across - 20.0).abs() / 20.0 < 0.03, "{kind:?} {across}");
        }
    }

    #[test]
    fn support_validation() {
        let spec = PsfSpec::symmetric(PsfKind::Airy, 10.0);
        assert!(render_psf(&spec, 30).is_err());
        assert!(render_psf(&spec, 21).is_err());
        assert!(render_psf(&spec, 31).is_ok());
        let bad = PsfSpec { squeeze: 0.0, ..spec };
        assert!(render_psf(&bad, 31).is_err());
    }

    #[test]
    fn kernels_sum_to_one() {
        for kind in [PsfKind::Gaussian, PsfKind::Airy] {
            for fwhm in [8.0, 23.5, 40.0] {
                let spec = PsfSpec { kind, fwhm_px: fwhm, squeeze: 0.65, axis_angle: 2.0 };
                let k = render_psf(&spec, spec.min_support()).unwrap();
                assert!((k.grid().sum() - 1.0).abs() < 1e-9);
            }
        }
        let b = render_blended_psf(12.0, 0.8, 0.3, 0.5, 37).unwrap();
        assert!((b.grid().sum() - 1.0).abs() < 1e-9);
    }
}
