use super::loss::{loss_and_grad, LossConfig};
use crate::error::Result;
use crate::grid::Grid2D;
use crate::net::{backward, forward, init_params, Mode, NetConfig, Params};
use crate::rng::RngState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub input_size: usize,
    pub step: f64,
    /// Largest relative error that still passes.
    pub tolerance: f64,
    /// Flip the sign of every analytic gradient, for testing the checker.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { input_size: 8, step: 1e-5, tolerance: 1e-4, corrupt: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: usize,
    pub params: usize,
    /// Parameters whose difference stencil crossed a leaky-ReLU kink.
    pub skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub layers: Vec<LayerCheck>,
    pub input_max_rel_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Small architecture used when none is given: 3 layers of 2 filters, ×2 after
/// layers 1 and 2.
pub fn gradcheck_net() -> NetConfig {
    NetConfig { depth: 3, filters: 2, upsample_after: vec![1, 2], ..Default::default() }
}

/// Compares backpropagated gradients of the full training loss (network,
/// softmax, filtered MSE and entropic term) against central differences for
/// every parameter and every input pixel, in f64. Dropout uses a fixed mask.
/// Stencils that change the sign of any hidden pre-activation are skipped.
pub fn gradcheck(net: &NetConfig, loss: &LossConfig, seed: u64, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let root = RngState::new(seed);
    let mut params: Params<f64> = init_params(&root.child(0), net)?;
    // non-zero biases so their gradients are exercised away from the origin
    let mut brng = root.child(1);
    for layer in 0..params.layout().len() {
        for b in params.bias_mut(layer) {
            *b = 0.1 * brng.normal();
        }
    }
    let n = opts.input_size;
    let mut irng = root.child(2);
    let mut input = Grid2D::from_fn(n, n, |_, _| irng.uniform01());
    let s = n * net.scale();
    let mut trng = root.child(3);
    let target = Grid2D::from_fn(s, s, |_, _| trng.uniform(0.01, 1.0)).normalized()?;
    let dropout_seed = root.child_seed(4);

    let eval = |p: &Params<f64>, x: &Grid2D| -> Result<(f64, Vec<bool>)> {
        let mut d = RngState::new(dropout_seed);
        let (pred, cache) = forward(p, x, Mode::Train(&mut d))?;
        Ok((loss_and_grad(&pred, &target, loss)?.0, cache.expect("training cache").activation_pattern()))
    };

    let mut d = RngState::new(dropout_seed);
    let (pred, cache) = forward(&params, &input, Mode::Train(&mut d))?;
    let (_, g) = loss_and_grad(&pred, &target, loss)?;
    let mut grads = backward(&params, &cache.expect("training cache"), &g)?;
    if opts.corrupt {
        grads.params.iter_mut().for_each(|v| *v = -*v);
        grads.input.values_mut().iter_mut().for_each(|v| *v = -*v);
    }
    let scale = grads.params.iter().chain(grads.input.values()).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-6 * scale.max(f64::MIN_POSITIVE);
    let h = opts.step;

    let mut layers = Vec::new();
    for (li, lay) in params.layout().to_vec().into_iter().enumerate() {
        let len = lay.weight_len(net.kernel) + lay.out_ch;
        let mut worst = 0.0f64;
        let mut skipped = 0;
        for i in lay.weight_offset..lay.weight_offset + len {
            let orig = params.as_slice()[i];
            params.as_mut_slice()[i] = orig + h;
            let (up, pu) = eval(&params, &input)?;
            params.as_mut_slice()[i] = orig - h;
            let (down, pd) = eval(&params, &input)?;
            params.as_mut_slice()[i] = orig;
            if pu != pd {
                skipped += 1;
                continue;
            }
            worst = worst.max(relative_error(grads.params[i], (up - down) / (2.0 * h), floor));
        }
        layers.push(LayerCheck { layer: li, params: len, skipped, max_rel_error: worst });
    }

    let mut input_worst = 0.0f64;
    for i in 0..input.len() {
        let orig = input.values()[i];
        input.values_mut()[i] = orig + h;
        let (up, pu) = eval(&params, &input)?;
        input.values_mut()[i] = orig - h;
        let (down, pd) = eval(&params, &input)?;
        input.values_mut()[i] = orig;
        if pu != pd {
            continue;
        }
        input_worst = input_worst.max(relative_error(grads.input.values()[i], (up - down) / (2.0 * h), floor));
    }

    let max_rel_error = layers.iter().map(|l| l.max_rel_error).fold(input_worst, f64::max);
    Ok(GradcheckReport {
        layers,
        input_max_rel_error: input_worst,
        max_rel_error,
        tolerance: opts.tolerance,
        passed: max_rel_error <= opts.tolerance,
    })
}
