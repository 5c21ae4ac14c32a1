//! `.qsrw` weight files.
//!
//! ```text
//! 0      4   magic "QSRW"
//! 4      1   version 0x01
//! 5      8   u64 LE length L of the JSON NetConfig
//! 13     L   JSON NetConfig
//! 13+L   ... per convolution, in layer order: weight tensor (.qsrt, rank 4:
//!            out × in × k × k) then bias tensor (.qsrt, rank 1)
//! ```

use super::params::{NetConfig, Params};
use super::real::Real;
use crate::error::{Error, Result};
use crate::qsrt::Tensor;
use std::path::Path;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"QSRW";
pub const WEIGHTS_VERSION: u8 = 0x01;

pub fn encode_weights<T: Real>(params: &Params<T>) -> Result<Vec<u8>> {
    let cfg = params.config();
    let json = serde_json::to_vec(cfg)?;
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(WEIGHTS_VERSION);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let k = cfg.kernel as u64;
    for (layer, lay) in params.layout().iter().enumerate() {
        T::tensor(vec![lay.out_ch as u64, lay.in_ch as u64, k, k], params.weights(layer).to_vec())
            .encode_into(&mut out);
        T::tensor(vec![lay.out_ch as u64], params.bias(layer).to_vec()).encode_into(&mut out);
    }
    Ok(out)
}

/// Decodes a weight file. When `expected` is given, the embedded configuration
/// must match it.
pub fn decode_weights<T: Real>(bytes: &[u8], expected: Option<&NetConfig>) -> Result<Params<T>> {
    if bytes.len() < 13 {
        return Err(Error::Truncated { expected: 13, actual: bytes.len() as u64 });
    }
    if &bytes[0..4] != WEIGHTS_MAGIC {
        return Err(Error::Format { offset: 0, message: "bad weights magic, expected \"QSRW\"".into() });
    }
    if bytes[4] != WEIGHTS_VERSION {
        return Err(Error::UnsupportedVersion { found: bytes[4], expected: WEIGHTS_VERSION });
    }
    let len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    if bytes.len() - 13 < len {
        return Err(Error::Truncated { expected: (13 + len) as u64, actual: bytes.len() as u64 });
    }
    let config: NetConfig = serde_json::from_slice(&bytes[13..13 + len])
        .map_err(|e| Error::Format { offset: 13, message: format!("network config: {e}") })?;
    if let Some(exp) = expected {
        if exp != &config {
            return Err(Error::Shape(format!(
                "weights were saved for {} filters × {} layers (k={}), expected {} filters × {} layers (k={})",
                config.filters, config.depth, config.kernel, exp.filters, exp.depth, exp.kernel
            )));
        }
    }
    let mut params = Params::<T>::zeros(&config)?;
    let mut pos = 13 + len;
    let k = config.kernel as u64;
    for layer in 0..params.layout().len() {
        let lay = params.layout()[layer];
        let (w, used) = Tensor::decode(&bytes[pos..], pos as u64)?;
        let want_w = vec![lay.out_ch as u64, lay.in_ch as u64, k, k];
        if w.dims != want_w {
            return Err(Error::Shape(format!("layer {layer} weights have shape {:?}, expected {want_w:?}", w.dims)));
        }
        pos += used;
        let (b, used) = Tensor::decode(&bytes[pos..], pos as u64)?;
        if b.dims != [lay.out_ch as u64] {
            return Err(Error::Shape(format!("layer {layer} bias has shape {:?}, expected [{}]", b.dims, lay.out_ch)));
        }
        pos += used;
        params.weights_mut(layer).copy_from_slice(&T::from_tensor(&w));
        params.bias_mut(layer).copy_from_slice(&T::from_tensor(&b));
    }
    if pos != bytes.len() {
        return Err(Error::Format { offset: pos as u64, message: format!("{} trailing bytes", bytes.len() - pos) });
    }
    Ok(params)
}

pub fn save_weights<T: Real>(path: impl AsRef<Path>, params: &Params<T>) -> Result<()> {
    std::fs::write(path, encode_weights(params)?)?;
    Ok(())
}

pub fn load_weights<T: Real>(path: impl AsRef<Path>, expected: Option<&NetConfig>) -> Result<Params<T>> {
    decode_weights(&std::fs::read(path)?, expected)
}
