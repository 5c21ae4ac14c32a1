//! Training pairs: generation, validation split and the `.qsra` archive format.
//!
//! # Archive layout
//!
//! All integers are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "QSRA"
//! 4       1     version 0x01
//! 5       8     pair count N (u64)
//! 13      ...   N records, each:
//!                 input  .qsrt blob (rank 2, f64, lo×lo photons)
//!                 target .qsrt blob (rank 2, f64, hi×hi unit mass)
//!                 u64 length L, then L bytes of JSON `PairMeta`
//! ...     M     JSON `DatasetManifest`
//! end-12  8     manifest length M (u64)
//! end-4   4     magic "QSRM"
//! ```

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::optics::{simulate, EmitterSet, PsfSpec, SceneConfig};
use crate::qsrt::Tensor;
use crate::rng::RngState;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"QSRA";
pub const FOOTER_MAGIC: &[u8; 4] = b"QSRM";
pub const ARCHIVE_VERSION: u8 = 0x01;
/// Attempts per pair before giving up on scenes whose truth has no photons.
pub const MAX_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub psf: PsfSpec,
    pub background_mean: f64,
    /// Seed of the stream that produced this pair.
    pub seed: u64,
    pub emitters: EmitterSet,
}

/// Low-resolution photon frame with its unit-mass high-resolution target.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub input: Grid2D,
    pub target: Grid2D,
    pub meta: PairMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub archives: Vec<String>,
    pub count: u64,
    pub global_seed: u64,
    pub scene: SceneConfig,
    /// Seconds since the Unix epoch; left empty inside archives so they stay reproducible.
    pub created_unix: Option<u64>,
}

/// Simulates one pair from its own stream.
pub fn generate_pair(rng: &RngState, config: &SceneConfig) -> Result<SamplePair> {
    for attempt in 0..MAX_ATTEMPTS {
        let stream = rng.child(attempt);
        let sim = simulate(&stream, config)?;
        let total = sim.truth.sum();
        if total > 0.0 {
            return Ok(SamplePair {
                input: sim.frame,
                target: sim.truth.scale(1.0 / total),
                meta: PairMeta {
                    psf: sim.scene.psf,
                    background_mean: sim.scene.background_mean,
                    seed: stream.seed(),
                    emitters: sim.scene.emitters,
                },
            });
        }
    }
    Err(Error::Generation(format!("scene from seed {} had zero truth flux in {MAX_ATTEMPTS} attempts", rng.seed())))
}

/// Generates `n` pairs; pair `i` depends only on `(rng.seed(), i)`.
pub fn generate_pairs(rng: &RngState, config: &SceneConfig, n: usize) -> Result<Vec<SamplePair>> {
    config.validate()?;
    (0..n).into_par_iter().map(|i| generate_pair(&rng.child(i as u64), config)).collect()
}

/// Deterministic split of `0..n` into (train, validation) index lists.
///
/// Indices are ranked by a seeded hash and the lowest `round(fraction·n)` go to
/// validation; both lists keep ascending order.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("validation fraction must be in (0, 1), got {fraction}")));
    }
    let n_val = (fraction * n as f64).round() as usize;
    let root = RngState::new(seed);
    let mut ranked: Vec<(u64, usize)> = (0..n).map(|i| (root.child_seed(i as u64), i)).collect();
    ranked.sort_unstable();
    let mut is_val = vec![false; n];
    for &(_, i) in &ranked[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_val[i]);
    Ok((train, val))
}

pub fn split_validation<T>(items: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (_, val_idx) = split_indices(items.len(), fraction, seed)?;
    let mut is_val = vec![false; items.len()];
    for i in val_idx {
        is_val[i] = true;
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (item, v) in items.into_iter().zip(is_val) {
        if v {
            val.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, val))
}

pub fn encode_archive(pairs: &[SamplePair], manifest: &DatasetManifest) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.push(ARCHIVE_VERSION);
    out.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
    for p in pairs {
        Tensor::from_grid(&p.input).encode_into(&mut out);
        Tensor::from_grid(&p.target).encode_into(&mut out);
        let meta = serde_json::to_vec(&p.meta)?;
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
    }
    let m = serde_json::to_vec(manifest)?;
    out.extend_from_slice(&m);
    out.extend_from_slice(&(m.len() as u64).to_le_bytes());
    out.extend_from_slice(FOOTER_MAGIC);
    Ok(out)
}

pub fn save_archive(path: impl AsRef<Path>, pairs: &[SamplePair], manifest: &DatasetManifest) -> Result<()> {
    if manifest.count != pairs.len() as u64 {
        return Err(Error::InvalidArgument(format!(
            "manifest count {} does not match {} pairs",
            manifest.count,
            pairs.len()
        )));
    }
    std::fs::write(path, encode_archive(pairs, manifest)?)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated { expected: (self.pos + n) as u64, actual: self.bytes.len() as u64 });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn grid(&mut self) -> Result<Grid2D> {
        let (t, used) = Tensor::decode(&self.bytes[self.pos..], self.pos as u64)?;
        self.pos += used;
        t.to_grid()
    }
}

pub fn decode_archive(bytes: &[u8]) -> Result<(DatasetManifest, Vec<SamplePair>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != ARCHIVE_MAGIC {
        return Err(Error::Format { offset: 0, message: "bad archive magic, expected \"QSRA\"".into() });
    }
    let version = cur.take(1)?[0];
    if version != ARCHIVE_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: ARCHIVE_VERSION });
    }
    let count = cur.u64()?;
    let mut pairs = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let input = cur.grid()?;
        let target = cur.grid()?;
        let len = cur.u64()? as usize;
        let at = cur.pos as u64;
        let meta: PairMeta = serde_json::from_slice(cur.take(len)?)
            .map_err(|e| Error::Format { offset: at, message: format!("pair metadata: {e}") })?;
        pairs.push(SamplePair { input, target, meta });
    }
    let rest = bytes.len() - cur.pos;
    if rest < 12 {
        return Err(Error::Truncated { expected: (cur.pos + 12) as u64, actual: bytes.len() as u64 });
    }
    let footer_at = bytes.len() - 4;
    if &bytes[footer_at..] != FOOTER_MAGIC {
        return Err(Error::Format { offset: footer_at as u64, message: "bad footer magic, expected \"QSRM\"".into() });
    }
    let m_len = u64::from_le_bytes(bytes[bytes.len() - 12..footer_at].try_into().unwrap()) as usize;
    if m_len != rest - 12 {
        return Err(Error::Format {
            offset: cur.pos as u64,
            message: format!("manifest length {m_len} does not match {} remaining bytes", rest - 12),
        });
    }
    let manifest: DatasetManifest = serde_json::from_slice(cur.take(m_len)?)
        .map_err(|e| Error::Format { offset: cur.pos as u64, message: format!("manifest: {e}") })?;
    if manifest.count != count {
        return Err(Error::Format {
            offset: 5,
            message: format!("manifest count {} but header count {count}", manifest.count),
        });
    }
    Ok((manifest, pairs))
}

pub fn load_archive(path: impl AsRef<Path>) -> Result<(DatasetManifest, Vec<SamplePair>)> {
    decode_archive(&std::fs::read(path)?)
}
