//! Deterministic raster kernels shared by the simulator, the network and the loss.

mod conv;
mod filter;
mod resample;

pub use conv::{convolve_direct, convolve_fft};
pub use filter::{gaussian_filter, gaussian_kernel_1d, separable_filter};
pub use resample::{bin_sum, resize_bilinear, upsample2x, upsample2x_adjoint};
