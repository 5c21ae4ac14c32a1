use crate::error::{Error, Result};
use crate::grid::Grid2D;
use num_traits::Float;

/// Sums non-overlapping `factor`×`factor` blocks.
///
/// Each block is accumulated row by row, left to right, so the result is
/// bitwise reproducible. Integer-valued inputs (photon counts) conserve the
/// total exactly.
pub fn bin_sum(image: &Grid2D, factor: usize) -> Result<Grid2D> {
    let (rows, cols) = image.shape();
    if factor == 0 || rows % factor != 0 || cols % factor != 0 {
        return Err(Error::Shape(format!("{rows}x{cols} grid is not divisible by binning factor {factor}")));
    }
    let (or, oc) = (rows / factor, cols / factor);
    Ok(Grid2D::from_fn(or, oc, |bi, bj| {
        let mut acc = 0.0;
        for i in bi * factor..(bi + 1) * factor {
            for j in bj * factor..(bj + 1) * factor {
                acc += image.get(i, j);
            }
        }
        acc
    }))
}

/// Doubles both dimensions with bilinear interpolation.
///
/// Sampling uses half-pixel centers: output pixel `o` reads source coordinate
/// `(o + 0.5) / 2 − 0.5`, clamped to the edge pixels. Away from the border
/// this gives the stencil `out[2j] = ¼·in[j−1] + ¾·in[j]`,
/// `out[2j+1] = ¾·in[j] + ¼·in[j+1]`, which commutes with integer shifts.
pub fn resize_bilinear(image: &Grid2D, factor: usize) -> Result<Grid2D> {
    if factor != 2 {
        return Err(Error::InvalidArgument(format!("only factor 2 is supported, got {factor}")));
    }
    let (rows, cols) = image.shape();
    let out = upsample2x(image.values(), 1, rows, cols);
    Grid2D::from_vec(2 * rows, 2 * cols, out)
}

#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    w_hi: f64,
}

fn taps(n: usize) -> Vec<Tap> {
    (0..2 * n)
        .map(|o| {
            let src = (o as f64 + 0.5) / 2.0 - 0.5;
            let floor = src.floor();
            let w_hi = src - floor;
            let lo = floor.max(0.0) as usize;
            let hi = (src.ceil() as usize).min(n - 1);
            Tap { lo: lo.min(n - 1), hi, w_hi }
        })
        .collect()
}

/// Bilinear ×2 upsampling of a `channels × h × w` buffer.
pub fn upsample2x<T: Float>(src: &[T], channels: usize, h: usize, w: usize) -> Vec<T> {
    debug_assert_eq!(src.len(), channels * h * w);
    let (tx, ty) = (taps(w), taps(h));
    let (h2, w2) = (2 * h, 2 * w);
    let mut wide = vec![T::zero(); channels * h * w2];
    for (line, out) in src.chunks_exact(w).zip(wide.chunks_exact_mut(w2)) {
        for (o, t) in out.iter_mut().zip(&tx) {
            let a = T::from(t.w_hi).unwrap();
            *o = line[t.lo] * (T::one() - a) + line[t.hi] * a;
        }
    }
    let mut out = vec![T::zero(); channels * h2 * w2];
    for c in 0..channels {
        let plane = &wide[c * h * w2..(c + 1) * h * w2];
        let dst = &mut out[c * h2 * w2..(c + 1) * h2 * w2];
        for (o, t) in ty.iter().enumerate() {
            let a = T::from(t.w_hi).unwrap();
            let b = T::one() - a;
            let (lo, hi) = (&plane[t.lo * w2..(t.lo + 1) * w2], &plane[t.hi * w2..(t.hi + 1) * w2]);
            for ((d, &l), &u) in dst[o * w2..(o + 1) * w2].iter_mut().zip(lo).zip(hi) {
                *d = l * b + u * a;
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x`]: maps a `channels × 2h × 2w` gradient back to `channels × h × w`.
pub fn upsample2x_adjoint<T: Float>(grad: &[T], channels: usize, h: usize, w: usize) -> Vec<T> {
    let (tx, ty) = (taps(w), taps(h));
    let (h2, w2) = (2 * h, 2 * w);
    debug_assert_eq!(grad.len(), channels * h2 * w2);
    let mut tall = vec![T::zero(); channels * h * w2];
    for c in 0..channels {
        let src = &grad[c * h2 * w2..(c + 1) * h2 * w2];
        let dst = &mut tall[c * h * w2..(c + 1) * h * w2];
        for (o, t) in ty.iter().enumerate() {
            let a = T::from(t.w_hi).unwrap();
            let b = T::one() - a;
            let row = &src[o * w2..(o + 1) * w2];
            for (k, &g) in row.iter().enumerate() {
                dst[t.lo * w2 + k] = dst[t.lo * w2 + k] + g * b;
                dst[t.hi * w2 + k] = dst[t.hi * w2 + k] + g * a;
            }
        }
    }
    let mut out = vec![T::zero(); channels * h * w];
    for (line, dst) in tall.chunks_exact(w2).zip(out.chunks_exact_mut(w)) {
        for (&g, t) in line.iter().zip(&tx) {
            let a = T::from(t.w_hi).unwrap();
            dst[t.lo] = dst[t.lo] + g * (T::one() - a);
            dst[t.hi] = dst[t.hi] + g * a;
        }
    }
    out
}
