use crate::error::Result;
use crate::grid::{Grid2D, Kernel};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// "Same" 2D convolution with zero padding outside the image.
///
/// `out[i][j] = Σ_{u,v} K[u][v] · img[i + cr − u][j + cc − v]` where
/// `(cr, cc)` is the kernel center, so a delta at `p` reproduces `K` centered at `p`.
pub fn convolve_direct(image: &Grid2D, kernel: &Kernel) -> Result<Grid2D> {
    let k = kernel.grid();
    let (kr, kc) = k.shape();
    let (cr, cc) = kernel.center();
    let (rows, cols) = image.shape();
    let mut out = Grid2D::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for u in 0..kr {
                let si = i as isize + cr as isize - u as isize;
                if si < 0 || si >= rows as isize {
                    continue;
                }
                let img_row = &image.values()[si as usize * cols..(si as usize + 1) * cols];
                let k_row = &k.values()[u * kc..(u + 1) * kc];
                for (v, &kv) in k_row.iter().enumerate() {
                    let sj = j as isize + cc as isize - v as isize;
                    if sj >= 0 && sj < cols as isize {
                        acc += kv * img_row[sj as usize];
                    }
                }
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Same result as [`convolve_direct`], computed through zero-padded FFTs.
pub fn convolve_fft(image: &Grid2D, kernel: &Kernel) -> Result<Grid2D> {
    let k = kernel.grid();
    let (kr, kc) = k.shape();
    let (cr, cc) = kernel.center();
    let (rows, cols) = image.shape();
    let pr = smooth_size(rows + kr - 1);
    let pc = smooth_size(cols + kc - 1);

    let mut planner = FftPlanner::<f64>::new();
    let row_fwd = planner.plan_fft_forward(pc);
    let col_fwd = planner.plan_fft_forward(pr);
    let row_inv = planner.plan_fft_inverse(pc);
    let col_inv = planner.plan_fft_inverse(pr);

    let mut a = embed(image, pr, pc);
    let mut b = embed(k, pr, pc);
    fft2(&mut a, pr, pc, &row_fwd, &col_fwd);
    fft2(&mut b, pr, pc, &row_fwd, &col_fwd);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    fft2(&mut a, pr, pc, &row_inv, &col_inv);

    let scale = 1.0 / (pr * pc) as f64;
    Ok(Grid2D::from_fn(rows, cols, |i, j| a[(i + cr) * pc + (j + cc)].re * scale))
}

fn embed(g: &Grid2D, pr: usize, pc: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); pr * pc];
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            buf[i * pc + j].re = g.get(i, j);
        }
    }
    buf
}

fn fft2(
    buf: &mut [Complex<f64>],
    rows: usize,
    cols: usize,
    row_plan: &Arc<dyn Fft<f64>>,
    col_plan: &Arc<dyn Fft<f64>>,
) {
    row_plan.process(buf);
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for j in 0..cols {
        for i in 0..rows {
            column[i] = buf[i * cols + j];
        }
        col_plan.process(&mut column);
        for i in 0..rows {
            buf[i * cols + j] = column[i];
        }
    }
}

/// Smallest 2^a·3^b·5^c that is ≥ n.
fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
