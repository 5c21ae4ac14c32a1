use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::numerics::{gaussian_kernel_1d, separable_filter};
use serde::{Deserialize, Serialize};

/// Pixels below this mass use `ln(1e-30)` in the entropic gradient.
pub const ENTROPY_CLAMP: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight of the `Σ p·ln p` term.
    pub epsilon: f64,
    /// Width of the Gaussian applied to prediction and target, high-res pixels.
    pub filter_sigma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { epsilon: 1e-5, filter_sigma: 1.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.filter_sigma > 0.0) || !self.filter_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("filter sigma must be > 0, got {}", self.filter_sigma)));
        }
        Ok(())
    }
}

/// Loss split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// `Σ (G∗(I − Î))²`
    pub filtered_mse: f64,
    /// `Σ Î ln Î` (unweighted)
    pub entropy: f64,
}

impl LossParts {
    pub fn total(&self, epsilon: f64) -> f64 {
        self.filtered_mse + epsilon * self.entropy
    }
}

/// Per-sample loss `Σ_px (G∗(I − Î))² + ε·Σ_px Î ln Î` and its gradient with
/// respect to the prediction `Î`, `2·G∗(G∗(Î − I)) + ε·(ln Î + 1)`.
pub fn loss_and_grad(pred: &Grid2D, target: &Grid2D, cfg: &LossConfig) -> Result<(f64, Grid2D)> {
    let (parts, grad) = loss_parts_and_grad(pred, target, cfg)?;
    Ok((parts.total(cfg.epsilon), grad))
}

pub fn loss_parts_and_grad(pred: &Grid2D, target: &Grid2D, cfg: &LossConfig) -> Result<(LossParts, Grid2D)> {
    pred.ensure_same_shape(target)?;
    if let Some(v) = pred.values().iter().find(|&&v| v < -1e-12) {
        return Err(Error::InvalidArgument(format!("prediction has negative mass {v}")));
    }
    let taps = gaussian_kernel_1d(cfg.filter_sigma)?;
    let diff = pred.zip_map(target, |p, t| p - t)?;
    let filtered = separable_filter(&diff, &taps);
    let filtered_mse: f64 = filtered.values().iter().map(|d| d * d).sum();
    let back = separable_filter(&filtered, &taps);
    let entropy: f64 = pred.values().iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).sum();
    let eps = cfg.epsilon;
    let grad = back.zip_map(pred, |b, p| 2.0 * b + eps * (p.max(ENTROPY_CLAMP).ln() + 1.0))?;
    Ok((LossParts { filtered_mse, entropy }, grad))
}
