//! "Same" zero-padded multi-channel convolution via im2col + GEMM.
//!
//! Like most deep-learning frameworks the layer computes a cross-correlation:
//! `out[o, y, x] = b[o] + Σ_{c,u,v} W[o, c, u, v] · in[c, y + u − r, x + v − r]`.

use super::real::{gemm, MatRef, Real};

/// Unfolds `input` (`c × h × w`) into a `(c·k·k) × (h·w)` matrix.
pub(crate) fn im2col<T: Real>(input: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut Vec<T>) {
    let r = (k / 2) as isize;
    let hw = h * w;
    col.clear();
    col.resize(c * k * k * hw, T::zero());
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for u in 0..k {
            for v in 0..k {
                let row = (ch * k + u) * k + v;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let dy = u as isize - r;
                let dx = v as isize - r;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let sx0 = (x0 as isize + dx) as usize;
                    dst[y * w + x0..y * w + x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into a `c × h × w` buffer.
pub(crate) fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let r = (k / 2) as isize;
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for u in 0..k {
            for v in 0..k {
                let row = (ch * k + u) * k + v;
                let src = &col[row * hw..(row + 1) * hw];
                let dy = u as isize - r;
                let dx = v as isize - r;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let sx0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + sx0..sy as usize * w + sx0 + (x1 - x0)];
                    for (d, &s) in dst.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
    out
}

/// Forward convolution. Returns `out_ch × h × w`; `col` is scratch space.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward<T: Real>(
    input: &[T],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[T],
    bias: &[T],
    k: usize,
    col: &mut Vec<T>,
) -> Vec<T> {
    let out_ch = bias.len();
    let hw = h * w;
    im2col(input, in_ch, h, w, k, col);
    let mut out = Vec::with_capacity(out_ch * hw);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, hw));
    }
    gemm(
        T::one(),
        MatRef::new(weights, out_ch, in_ch * k * k),
        MatRef::new(col, in_ch * k * k, hw),
        T::one(),
        &mut out,
    );
    out
}

/// Backward convolution. Accumulates into `grad_w`/`grad_b` and returns the
/// gradient with respect to the input when `need_input_grad` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    input: &[T],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[T],
    k: usize,
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    need_input_grad: bool,
    col: &mut Vec<T>,
) -> Option<Vec<T>> {
    let out_ch = grad_b.len();
    let hw = h * w;
    let kk = in_ch * k * k;
    for (gb, plane) in grad_b.iter_mut().zip(grad_out.chunks_exact(hw)) {
        *gb = *gb + plane.iter().copied().sum::<T>();
    }
    im2col(input, in_ch, h, w, k, col);
    gemm(T::one(), MatRef::new(grad_out, out_ch, hw), MatRef::new(col, kk, hw).t(), T::one(), grad_w);
    if !need_input_grad {
        return None;
    }
    // reuse the scratch buffer for the column gradient
    gemm(T::one(), MatRef::new(weights, out_ch, kk).t(), MatRef::new(grad_out, out_ch, hw), T::zero(), col);
    Some(col2im(col, in_ch, h, w, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn naive(input: &[f64], c: usize, h: usize, w: usize, wts: &[f64], b: &[f64], k: usize) -> Vec<f64> {
        let r = (k / 2) as isize;
        let o = b.len();
        let mut out = vec![0.0; o * h * w];
        for oc in 0..o {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for u in 0..k {
                            for v in 0..k {
                                let sy = y as isize + u as isize - r;
                                let sx = x as isize + v as isize - r;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    acc += wts[((oc * c + ic) * k + u) * k + v]
                                        * input[(ic * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    out[(oc * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive() {
        let mut rng = RngState::new(1);
        let (c, o, h, w, k) = (3, 4, 6, 7, 5);
        let input: Vec<f64> = (0..c * h * w).map(|_| rng.normal()).collect();
        let wts: Vec<f64> = (0..o * c * k * k).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..o).map(|_| rng.normal()).collect();
        let mut col = Vec::new();
        let fast = conv_forward(&input, c, h, w, &wts, &b, k, &mut col);
        let slow = naive(&input, c, h, w, &wts, &b, k);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint() {
        let mut rng = RngState::new(2);
        let (c, h, w, k) = (2, 5, 4, 3);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..c * k * k * h * w).map(|_| rng.normal()).collect();
        let mut col = Vec::new();
        im2col(&x, c, h, w, k, &mut col);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let back = col2im(&y, c, h, w, k);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn kernel_wider_than_image() {
        let mut rng = RngState::new(3);
        let (c, o, h, w, k) = (1, 2, 2, 3, 5);
        let input: Vec<f64> = (0..c * h * w).map(|_| rng.normal()).collect();
        let wts: Vec<f64> = (0..o * c * k * k).map(|_| rng.normal()).collect();
        let b = vec![0.5, -0.5];
        let mut col = Vec::new();
        let fast = conv_forward(&input, c, h, w, &wts, &b, k, &mut col);
        let slow = naive(&input, c, h, w, &wts, &b, k);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
