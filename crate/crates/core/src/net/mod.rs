//! The fully-convolutional super-resolution network.

mod conv;
mod io;
mod model;
mod params;
mod real;

pub use io::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use model::{backward, forward, normalize_frame, reconstruct, softmax_global, ForwardCache, Gradients, Mode};
pub use params::{count_params, init_params, LayerLayout, NetConfig, Params};
pub use real::Real;
