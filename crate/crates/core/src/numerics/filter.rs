use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// Normalized 1D Gaussian taps on `[-R, R]` with `R = ceil(4σ)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("gaussian sigma must be > 0, got {sigma}")));
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / total).collect())
}

/// Applies the same odd-length symmetric 1D kernel along rows and then columns,
/// with zero padding.
pub fn separable_filter(image: &Grid2D, taps: &[f64]) -> Grid2D {
    let (rows, cols) = image.shape();
    let r = (taps.len() / 2) as isize;
    let src = image.values();
    let mut tmp = vec![0.0; rows * cols];
    for i in 0..rows {
        let line = &src[i * cols..(i + 1) * cols];
        for j in 0..cols {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let s = j as isize + t as isize - r;
                if s >= 0 && (s as usize) < cols {
                    acc += w * line[s as usize];
                }
            }
            tmp[i * cols + j] = acc;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for (t, &w) in taps.iter().enumerate() {
            let s = i as isize + t as isize - r;
            if s < 0 || s as usize >= rows {
                continue;
            }
            let src_row = &tmp[s as usize * cols..(s as usize + 1) * cols];
            let dst_row = &mut out[i * cols..(i + 1) * cols];
            for (d, &v) in dst_row.iter_mut().zip(src_row) {
                *d += w * v;
            }
        }
    }
    Grid2D::from_vec(rows, cols, out).expect("filter preserves shape")
}

/// Separable Gaussian blur, truncated at `ceil(4σ)` and renormalized.
pub fn gaussian_filter(image: &Grid2D, sigma: f64) -> Result<Grid2D> {
    let taps = gaussian_kernel_1d(sigma)?;
    Ok(separable_filter(image, &taps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Kernel;
    use crate::numerics::convolve_direct;
    use crate::rng::RngState;

    /// Non-separable oracle: full 2D Gaussian on the same square support.
    fn kernel_2d(sigma: f64) -> Kernel {
        let r = (4.0 * sigma).ceil() as usize;
        let n = 2 * r + 1;
        Kernel::normalize(Grid2D::from_fn(n, n, |i, j| {
            let y = i as f64 - r as f64;
            let x = j as f64 - r as f64;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        }))
        .unwrap()
    }

    #[test]
    fn rejects_non_positive_sigma() {
        let g = Grid2D::zeros(3, 3);
        assert!(gaussian_filter(&g, 0.0).is_err());
        assert!(gaussian_filter(&g, -1.0).is_err());
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let mut rng = RngState::new(9);
        let g = Grid2D::from_fn(10, 7, |_, _| rng.uniform01());
        let f = gaussian_filter(&g, 1e-3).unwrap();
        for (a, b) in g.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn delta_center_matches_2d_kernel() {
        let sigma = 1.5;
        let mut g = Grid2D::zeros(21, 21);
        g.set(10, 10, 1.0);
        let f = gaussian_filter(&g, sigma).unwrap();
        let k = kernel_2d(sigma);
        let (c, _) = k.center();
        assert!((f.get(10, 10) - k.grid().get(c, c)).abs() < 1e-12);
        // close to the continuous peak height 1/(2πσ²)
        let continuous = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
        assert!((f.get(10, 10) - continuous).abs() / continuous < 1e-3);
    }

    #[test]
    fn separable_equals_full_2d() {
        let mut rng = RngState::new(10);
        let g = Grid2D::from_fn(24, 19, |_, _| rng.uniform(-1.0, 1.0));
        for sigma in [0.7, 1.5, 2.3] {
            let a = gaussian_filter(&g, sigma).unwrap();
            let b = convolve_direct(&g, &kernel_2d(sigma)).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interior_flux_conserved() {
        let mut rng = RngState::new(11);
        let mut g = Grid2D::zeros(40, 40);
        for i in 12..28 {
            for j in 12..28 {
                g.set(i, j, rng.uniform01());
            }
        }
        let f = gaussian_filter(&g, 1.5).unwrap();
        assert!((f.sum() - g.sum()).abs() < 1e-9);
    }
}
