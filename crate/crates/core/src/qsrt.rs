//! `.qsrt` binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size        | field                                   |
//! |--------|-------------|-----------------------------------------|
//! | 0      | 4           | magic `QSRT`                            |
//! | 4      | 1           | version `0x01`                          |
//! | 5      | 1           | dtype: `0x00` = f32, `0x01` = f64       |
//! | 6      | 1           | rank `r`                                |
//! | 7      | 8·r         | dimensions, u64 each                    |
//! | 7+8r   | Π dims · sz | row-major payload                       |

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"QSRT";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0x00,
    F64 = 0x01,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f64(dims: Vec<u64>, values: Vec<f64>) -> Self {
        Self { dims, data: TensorData::F64(values) }
    }

    pub fn f32(dims: Vec<u64>, values: Vec<f32>) -> Self {
        Self { dims, data: TensorData::F32(values) }
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        7 + 8 * self.dims.len() + self.len() * self.dtype().size()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        assert!(self.dims.len() <= u8::MAX as usize);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dtype() as u8);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    /// Decodes one tensor from the start of `bytes`. `base` is the absolute
    /// offset of `bytes[0]` in the enclosing file and is only used for error
    /// messages. Returns the tensor and the number of bytes consumed.
    pub fn decode(bytes: &[u8], base: u64) -> Result<(Self, usize)> {
        let need = |n: usize| -> Result<()> {
            if bytes.len() < n {
                Err(Error::Truncated { expected: base + n as u64, actual: base + bytes.len() as u64 })
            } else {
                Ok(())
            }
        };
        need(7)?;
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format {
                offset: base,
                message: format!("bad magic {:?}, expected \"QSRT\"", String::from_utf8_lossy(&bytes[0..4])),
            });
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion { found: bytes[4], expected: VERSION });
        }
        let dtype = match bytes[5] {
            0x00 => Dtype::F32,
            0x01 => Dtype::F64,
            other => {
                return Err(Error::Format { offset: base + 5, message: format!("unknown dtype byte {other:#04x}") })
            }
        };
        let rank = bytes[6] as usize;
        need(7 + 8 * rank)?;
        let mut dims = Vec::with_capacity(rank);
        let mut count: u64 = 1;
        for r in 0..rank {
            let at = 7 + 8 * r;
            let d = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            count = count.checked_mul(d).ok_or_else(|| Error::Format {
                offset: base + at as u64,
                message: "dimension product overflows".into(),
            })?;
            dims.push(d);
        }
        let header = 7 + 8 * rank;
        let payload = count
            .checked_mul(dtype.size() as u64)
            .filter(|p| *p <= usize::MAX as u64 - header as u64)
            .ok_or_else(|| Error::Format { offset: base + 7, message: "payload size overflows".into() })?
            as usize;
        need(header + payload)?;
        let body = &bytes[header..header + payload];
        let data = match dtype {
            Dtype::F32 => {
                TensorData::F32(body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            Dtype::F64 => {
                TensorData::F64(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
        };
        Ok((Self { dims, data }, header + payload))
    }

    pub fn from_grid(grid: &Grid2D) -> Self {
        Self::f64(vec![grid.rows() as u64, grid.cols() as u64], grid.values().to_vec())
    }

    pub fn to_grid(&self) -> Result<Grid2D> {
        if self.dims.len() != 2 {
            return Err(Error::Shape(format!("expected a rank-2 tensor, got rank {}", self.dims.len())));
        }
        Grid2D::from_vec(self.dims[0] as usize, self.dims[1] as usize, self.to_f64())
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    std::fs::write(path, tensor.encode())?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let (t, used) = Tensor::decode(&bytes, 0)?;
    if used != bytes.len() {
        return Err(Error::Format {
            offset: used as u64,
            message: format!("{} trailing bytes after tensor", bytes.len() - used),
        });
    }
    Ok(t)
}

pub fn write_grid(path: impl AsRef<Path>, grid: &Grid2D) -> Result<()> {
    write_tensor(path, &Tensor::from_grid(grid))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid2D> {
    read_tensor(path)?.to_grid()
}
