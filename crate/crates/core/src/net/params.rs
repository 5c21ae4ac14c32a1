use super::real::Real;
use crate::error::{Error, Result};
use crate::rng::RngState;
use serde::{Deserialize, Serialize};

/// Architecture of the fully-convolutional reconstruction network.
///
/// `depth` hidden layers of `filters` channels, each a "same" `kernel`×`kernel`
/// convolution followed by leaky ReLU and dropout, with ×2 bilinear upsampling
/// after every (1-based) layer listed in `upsample_after`, then a single-channel
/// output convolution and a softmax over the whole raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub depth: usize,
    pub filters: usize,
    pub kernel: usize,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
    pub upsample_after: Vec<usize>,
    pub input_channels: usize,
    pub output_channels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            depth: 25,
            filters: 50,
            kernel: 5,
            leaky_slope: 0.05,
            dropout_rate: 0.01,
            upsample_after: vec![5, 10],
            input_channels: 1,
            output_channels: 1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.depth == 0 || self.filters == 0 {
            return bad("depth and filters must be positive".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel size must be odd, got {}", self.kernel));
        }
        if self.input_channels != 1 || self.output_channels != 1 {
            return bad("only single-channel input and output are supported".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky slope must be finite".into());
        }
        let mut prev = 0;
        for &u in &self.upsample_after {
            if u <= prev || u >= self.depth {
                return bad(format!(
                    "upsample_after must be strictly increasing layer numbers in 1..{}, got {:?}",
                    self.depth, self.upsample_after
                ));
            }
            prev = u;
        }
        Ok(())
    }

    /// Output size multiplier, 2^(number of upsampling stages).
    pub fn scale(&self) -> usize {
        1 << self.upsample_after.len()
    }

    /// (in_channels, out_channels) of every convolution, output layer last.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.depth + 1);
        v.push((self.input_channels, self.filters));
        for _ in 1..self.depth {
            v.push((self.filters, self.filters));
        }
        v.push((self.filters, self.output_channels));
        v
    }

    pub fn upsamples_after(&self, layer_index: usize) -> bool {
        self.upsample_after.contains(&(layer_index + 1))
    }
}

/// Trainable parameter count: `Σ (k²·in·out + out)` over all convolutions.
pub fn count_params(config: &NetConfig) -> usize {
    let k2 = config.kernel * config.kernel;
    config.layer_channels().iter().map(|&(i, o)| k2 * i * o + o).sum()
}

/// Offsets of one convolution's tensors inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub in_ch: usize,
    pub out_ch: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    pub fn weight_len(&self, k: usize) -> usize {
        self.out_ch * self.in_ch * k * k
    }
}

fn layouts(config: &NetConfig) -> Vec<LayerLayout> {
    let k2 = config.kernel * config.kernel;
    let mut off = 0;
    config
        .layer_channels()
        .into_iter()
        .map(|(in_ch, out_ch)| {
            let l = LayerLayout { in_ch, out_ch, weight_offset: off, bias_offset: off + k2 * in_ch * out_ch };
            off = l.bias_offset + out_ch;
            l
        })
        .collect()
}

/// All weights and biases in one flat vector; weights are laid out
/// `out × in × k × k` per layer followed by that layer's biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    config: NetConfig,
    layout: Vec<LayerLayout>,
    data: Vec<T>,
}

impl<T: Real> Params<T> {
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config: config.clone(), layout: layouts(config), data: vec![T::zero(); count_params(config)] })
    }

    pub fn from_flat(config: &NetConfig, data: Vec<T>) -> Result<Self> {
        config.validate()?;
        let n = count_params(config);
        if data.len() != n {
            return Err(Error::Shape(format!("{} parameters given, config needs {n}", data.len())));
        }
        Ok(Self { config: config.clone(), layout: layouts(config), data })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        let l = self.layout[layer];
        &self.data[l.weight_offset..l.bias_offset]
    }

    pub fn bias(&self, layer: usize) -> &[T] {
        let l = self.layout[layer];
        &self.data[l.bias_offset..l.bias_offset + l.out_ch]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [T] {
        let l = self.layout[layer];
        &mut self.data[l.weight_offset..l.bias_offset]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [T] {
        let l = self.layout[layer];
        &mut self.data[l.bias_offset..l.bias_offset + l.out_ch]
    }

    /// Converts to another element type.
    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}

/// He-style init for leaky ReLU: zero-mean normal weights with variance
/// `2 / ((1 + slope²)·fan_in)`, zero biases. Layer `l` draws from child stream `l`.
pub fn init_params<T: Real>(rng: &RngState, config: &NetConfig) -> Result<Params<T>> {
    let mut p = Params::zeros(config)?;
    let k2 = config.kernel * config.kernel;
    let slope = config.leaky_slope;
    for layer in 0..p.layout.len() {
        let fan_in = (p.layout[layer].in_ch * k2) as f64;
        let std = (2.0 / ((1.0 + slope * slope) * fan_in)).sqrt();
        let mut stream = rng.child(layer as u64);
        for w in p.weights_mut(layer) {
            *w = T::lit(std * stream.normal());
        }
    }
    Ok(p)
}
