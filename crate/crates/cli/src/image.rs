//! Single-frame import: `.qsrt` rank-2 tensors and binary PGM (P5).

use anyhow::{bail, ensure, Context, Result};
use qdsr::qsrt::read_grid;
use qdsr::Grid2D;
use std::path::Path;

/// Reads a camera frame; the format is chosen by extension.
pub fn read_frame(path: &Path) -> Result<Grid2D> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "qsrt" => read_grid(path).with_context(|| format!("reading {}", path.display())),
        "pgm" => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            decode_pgm(&bytes).with_context(|| format!("decoding {}", path.display()))
        }
        _ => bail!("unsupported frame format {:?}; expected .qsrt or .pgm", path.display()),
    }
}

/// Decodes an 8- or 16-bit binary PGM into raw gray levels.
pub fn decode_pgm(bytes: &[u8]) -> Result<Grid2D> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        ensure!(pos > start, "truncated PGM header");
        fields.push(std::str::from_utf8(&bytes[start..pos])?.to_string());
    }
    ensure!(fields[0] == "P5", "only binary PGM (P5) is supported, found {:?}", fields[0]);
    let cols: usize = fields[1].parse().context("PGM width")?;
    let rows: usize = fields[2].parse().context("PGM height")?;
    let maxval: u32 = fields[3].parse().context("PGM maxval")?;
    ensure!((1..=65535).contains(&maxval), "PGM maxval {maxval} out of range");
    pos += 1;
    let bpp = if maxval > 255 { 2 } else { 1 };
    let need = rows * cols * bpp;
    ensure!(bytes.len() >= pos + need, "PGM pixel data truncated: need {need} bytes");
    let data = &bytes[pos..pos + need];
    let values = if bpp == 2 {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    } else {
        data.iter().map(|&b| b as f64).collect()
    };
    Ok(Grid2D::from_vec(rows, cols, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qdsr::pgm::encode_pgm16;

    #[test]
    fn pgm16_round_trip_levels() {
        let g = Grid2D::from_fn(3, 5, |r, c| (r * 5 + c) as f64);
        let (bytes, s) = encode_pgm16(&g);
        let back = decode_pgm(&bytes).unwrap();
        for (a, b) in g.values().iter().zip(back.values()) {
            assert!((a - (s.min + b * s.step)).abs() <= 0.5 * s.step);
        }
    }

    #[test]
    fn pgm8_with_comment() {
        let mut bytes = b"P5\n# hi\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 200]);
        assert_eq!(decode_pgm(&bytes).unwrap().values(), &[7.0, 200.0]);
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00").is_err());
    }
}
