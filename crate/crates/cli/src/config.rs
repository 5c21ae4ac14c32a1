use anyhow::{bail, Context, Result};
use qdsr::eval::EvalConfig;
use qdsr::net::NetConfig;
use qdsr::optics::{PsfKind, SceneConfig};
use qdsr::train::{LossConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Element type used for training and inference.
    pub precision: Precision,
    /// Write a PGM preview next to every raster output.
    pub pgm_preview: bool,
    /// nm per high-resolution pixel; distances are in pixels when absent.
    pub nm_per_hires_pixel: Option<f64>,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self { precision: Precision::F32, pgm_preview: true, nm_per_hires_pixel: None }
    }
}

/// Everything a run needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scene: SceneConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        preset("paper").expect("paper preset exists")
    }
}

pub const PRESETS: &[&str] = &["paper", "toy"];

/// Named configurations. `paper` is the full-size configuration;
/// `toy` is a desk-scale network trained on small frames.
pub fn preset(name: &str) -> Result<RunConfig> {
    match name {
        "paper" => Ok(RunConfig {
            seed: None,
            scene: SceneConfig::default(),
            net: NetConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            eval: EvalConfig::default(),
            io: IoConfig::default(),
        }),
        "toy" => Ok(RunConfig {
            seed: None,
            scene: toy_scene(16),
            net: NetConfig { depth: 8, filters: 12, upsample_after: vec![6, 7], ..NetConfig::default() },
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 4,
                epochs_per_iteration: 5,
                iterations: 4,
                samples_per_iteration: 1024,
                ..TrainConfig::default()
            },
            loss: LossConfig::default(),
            eval: EvalConfig { mass_threshold: 1e-3, min_separation_px: 2.0, line_fit: false },
            io: IoConfig::default(),
        }),
        other => bail!("unknown preset {other:?}; choose one of {PRESETS:?}"),
    }
}

/// Scene distribution of the toy preset on a `lo_size`² camera frame.
pub fn toy_scene(lo_size: usize) -> SceneConfig {
    SceneConfig {
        hi_size: 4 * lo_size,
        lo_size,
        n_emitters_range: [2, 10],
        fwhm_range: [8.0, 16.0],
        intensity_range: [3000.0, 10000.0],
        background_range: [1.0, 20.0],
        squeeze_min: 0.8,
        psf_kinds: vec![PsfKind::Gaussian, PsfKind::Airy],
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl RunConfig {
    /// Starts from `preset` and overlays the JSON document at `path`.
    pub fn load(preset_name: &str, path: Option<&Path>) -> Result<Self> {
        let base = preset(preset_name)?;
        let Some(path) = path else {
            return Ok(base);
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let over: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Self::overlay(base, over).with_context(|| format!("in config {}", path.display()))
    }

    pub fn overlay(base: Self, over: Value) -> Result<Self> {
        let mut v = serde_json::to_value(base)?;
        merge(&mut v, over);
        Ok(serde_json::from_value(v)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        if let Some(c) = self.io.nm_per_hires_pixel {
            qdsr::localize::PixelCalibration::new(c)?;
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.context("a seed is required: pass --seed or set \"seed\" in the config")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            preset(p).unwrap().validate().unwrap();
        }
        assert!(preset("huge").is_err());
    }

    #[test]
    fn overlay_and_unknown_keys() {
        let c = RunConfig::overlay(preset("toy").unwrap(), json!({"seed": 5, "train": {"iterations": 2}})).unwrap();
        assert_eq!(c.seed, Some(5));
        assert_eq!(c.train.iterations, 2);
        assert_eq!(c.train.batch_size, 4);
        assert!(RunConfig::overlay(preset("toy").unwrap(), json!({"trian": {}})).is_err());
        assert!(RunConfig::overlay(preset("toy").unwrap(), json!({"train": {"iters": 1}})).is_err());
    }
}
