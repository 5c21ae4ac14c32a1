use super::conv::{conv_backward, conv_forward};
use super::params::Params;
use super::real::Real;
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::numerics::{upsample2x, upsample2x_adjoint};
use crate::rng::RngState;

/// Forward-pass mode. Training mode samples dropout masks from the given stream.
pub enum Mode<'a> {
    Train(&'a mut RngState),
    Eval,
}

/// Saved activations of one hidden layer.
#[derive(Debug, Clone)]
struct HiddenCache<T> {
    input: Vec<T>,
    pre_activation: Vec<T>,
    mask: Option<Vec<T>>,
    h: usize,
    w: usize,
}

/// Everything the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    hidden: Vec<HiddenCache<T>>,
    final_input: Vec<T>,
    final_h: usize,
    final_w: usize,
    input_shape: (usize, usize),
    probs: Grid2D,
}

impl<T: Real> ForwardCache<T> {
    pub fn output(&self) -> &Grid2D {
        &self.probs
    }

    /// Which hidden pre-activations were positive. Two passes with the same
    /// pattern lie on the same linear piece of every leaky ReLU.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.hidden.iter().flat_map(|l| l.pre_activation.iter().map(|&z| z > T::zero())).collect()
    }
}

/// Gradients from [`backward`]: flat parameter gradient (same layout as
/// [`Params`]) and the gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub input: Grid2D,
}

/// `exp(l − max l) / Σ exp(l − max l)` over the whole raster.
pub fn softmax_global(logits: &Grid2D) -> Result<Grid2D> {
    if !logits.all_finite() {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    Ok(softmax_values(logits.rows(), logits.cols(), logits.values().iter().copied()))
}

fn softmax_values(rows: usize, cols: usize, logits: impl Iterator<Item = f64> + Clone) -> Grid2D {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Grid2D::from_vec(rows, cols, exps.into_iter().map(|e| e / total).collect()).expect("softmax shape")
}

/// Min-max scaling of a camera frame to [0, 1]; constant frames map to zeros.
/// Applied to every frame before it enters the network.
pub fn normalize_frame(frame: &Grid2D) -> Grid2D {
    let (lo, hi) = (frame.min(), frame.max());
    if hi > lo {
        frame.map(|v| (v - lo) / (hi - lo))
    } else {
        Grid2D::zeros(frame.rows(), frame.cols())
    }
}

#[inline]
fn leaky<T: Real>(z: T, slope: T) -> T {
    if z > T::zero() {
        z
    } else {
        z * slope
    }
}

/// Runs the network on `input`. The cache is returned in training mode only.
pub fn forward<T: Real>(
    params: &Params<T>,
    input: &Grid2D,
    mode: Mode<'_>,
) -> Result<(Grid2D, Option<ForwardCache<T>>)> {
    let cfg = params.config();
    let k = cfg.kernel;
    let (h0, w0) = input.shape();
    if h0 < k || w0 < k {
        return Err(Error::Shape(format!("input {h0}x{w0} smaller than the {k}x{k} kernel")));
    }
    if !input.all_finite() {
        return Err(Error::NonFinite("network input".into()));
    }
    let slope = T::lit(cfg.leaky_slope);
    let rate = cfg.dropout_rate;
    let keep_scale = T::lit(1.0 / (1.0 - rate));
    let (mut rng, training) = match mode {
        Mode::Train(r) => (Some(r), true),
        Mode::Eval => (None, false),
    };

    let mut x: Vec<T> = input.values().iter().map(|&v| T::lit(v)).collect();
    let (mut h, mut w) = (h0, w0);
    let mut col = Vec::new();
    let mut hidden = Vec::with_capacity(if training { cfg.depth } else { 0 });

    for layer in 0..cfg.depth {
        let in_ch = params.layout()[layer].in_ch;
        let z = conv_forward(&x, in_ch, h, w, params.weights(layer), params.bias(layer), k, &mut col);
        let mut a: Vec<T> = z.iter().map(|&v| leaky(v, slope)).collect();
        let mask = match rng.as_deref_mut() {
            Some(r) if rate > 0.0 => {
                let m: Vec<T> =
                    (0..a.len()).map(|_| if r.uniform01() < rate { T::zero() } else { keep_scale }).collect();
                a.iter_mut().zip(&m).for_each(|(v, &s)| *v = *v * s);
                Some(m)
            }
            _ => None,
        };
        let layer_input = std::mem::take(&mut x);
        if training {
            hidden.push(HiddenCache { input: layer_input, pre_activation: z, mask, h, w });
        }
        x = a;
        if cfg.upsamples_after(layer) {
            x = upsample2x(&x, cfg.filters, h, w);
            h *= 2;
            w *= 2;
        }
    }

    let out_layer = cfg.depth;
    let logits = conv_forward(&x, cfg.filters, h, w, params.weights(out_layer), params.bias(out_layer), k, &mut col);
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("network logit at index {i}")));
    }
    let probs = softmax_values(h, w, logits.iter().map(|v| v.as_f64()));
    let cache = training.then(|| ForwardCache {
        hidden,
        final_input: x,
        final_h: h,
        final_w: w,
        input_shape: (h0, w0),
        probs: probs.clone(),
    });
    Ok((probs, cache))
}

/// Reverse-mode gradients of `Σ output_grad · output` through the softmax and
/// every layer, reusing the dropout masks stored in `cache`. The leaky-ReLU
/// derivative at exactly zero is the leaky slope.
pub fn backward<T: Real>(params: &Params<T>, cache: &ForwardCache<T>, output_grad: &Grid2D) -> Result<Gradients<T>> {
    let cfg = params.config();
    let k = cfg.kernel;
    if cache.hidden.len() != cfg.depth {
        return Err(Error::Shape(format!("cache holds {} layers, network has {}", cache.hidden.len(), cfg.depth)));
    }
    cache.probs.ensure_same_shape(output_grad)?;
    let slope = T::lit(cfg.leaky_slope);

    // softmax: dl = p ⊙ (g − Σ p g)
    let p = cache.probs.values();
    let g = output_grad.values();
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    let d_logits: Vec<T> = p.iter().zip(g).map(|(&pi, &gi)| T::lit(pi * (gi - dot))).collect();

    let mut grads = vec![T::zero(); params.len()];
    let mut col = Vec::new();
    let out_layer = cfg.depth;
    let lay = params.layout()[out_layer];
    let (gw, gb) =
        grads[lay.weight_offset..lay.bias_offset + lay.out_ch].split_at_mut(lay.bias_offset - lay.weight_offset);
    let mut dx = conv_backward(
        &cache.final_input,
        cfg.filters,
        cache.final_h,
        cache.final_w,
        params.weights(out_layer),
        k,
        &d_logits,
        gw,
        gb,
        true,
        &mut col,
    )
    .expect("input gradient requested");

    for layer in (0..cfg.depth).rev() {
        let hc = &cache.hidden[layer];
        if cfg.upsamples_after(layer) {
            dx = upsample2x_adjoint(&dx, cfg.filters, hc.h, hc.w);
        }
        if let Some(mask) = &hc.mask {
            dx.iter_mut().zip(mask).for_each(|(d, &m)| *d = *d * m);
        }
        dx.iter_mut().zip(&hc.pre_activation).for_each(|(d, &z)| {
            if z <= T::zero() {
                *d = *d * slope
            }
        });
        let lay = params.layout()[layer];
        let (gw, gb) =
            grads[lay.weight_offset..lay.bias_offset + lay.out_ch].split_at_mut(lay.bias_offset - lay.weight_offset);
        dx = conv_backward(&hc.input, lay.in_ch, hc.h, hc.w, params.weights(layer), k, &dx, gw, gb, true, &mut col)
            .expect("input gradient requested");
    }
    let (h0, w0) = cache.input_shape;
    let input = Grid2D::from_vec(h0, w0, dx.iter().map(|v| v.as_f64()).collect())?;
    Ok(Gradients { params: grads, input })
}

/// Eval-mode reconstruction of a raw camera frame (normalized first).
pub fn reconstruct<T: Real>(params: &Params<T>, frame: &Grid2D) -> Result<Grid2D> {
    Ok(forward(params, &normalize_frame(frame), Mode::Eval)?.0)
}
