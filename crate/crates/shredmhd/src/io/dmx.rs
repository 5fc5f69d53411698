//! Matrix binary format: a 16-byte magic/version header, `u64` row and
//! column counts, then the row-major little-endian `f64` payload.
//! Extension: `.dmx`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use shredmhd_core::linalg::DenseMatrix;

use crate::error::{io_err, AppError, Result};

/// 15 identifying bytes plus a trailing version byte.
const MAGIC: &[u8; 15] = b"SHREDMHD.DMX\x00\x00\x00";
const VERSION: u8 = 1;

pub fn encode(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 16 + 8 * m.data().len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    let format = |detail: String| AppError::Format {
        what: "dmx matrix",
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 32 {
        return Err(format(format!("file is {} bytes, header needs 32", bytes.len())));
    }
    if &bytes[..15] != MAGIC {
        return Err(format("bad magic".into()));
    }
    if bytes[15] != VERSION {
        return Err(AppError::Version {
            found: bytes[15] as u32,
            expected: VERSION as u32,
            path: path.to_path_buf(),
        });
    }
    let rows = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    let expected = 32 + 8 * rows * cols;
    if bytes.len() != expected {
        return Err(format(format!(
            "{}x{} matrix needs {expected} bytes, found {}",
            rows,
            cols,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
        .map_err(|e| format(format!("invalid payload: {e}")))
}

pub fn write_dmx(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode(m)).map_err(io_err(path))?;
    Ok(())
}

pub fn read_dmx(path: &Path) -> Result<DenseMatrix> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let m = DenseMatrix::from_fn(7, 5, |i, j| (i as f64 - 2.5) * 0.1 + j as f64 * 1e-17);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dmx");
        write_dmx(&path, &m).unwrap();
        let back = read_dmx(&path).unwrap();
        assert_eq!(m, back);
        // Re-encoding produces identical bytes.
        assert_eq!(encode(&m), encode(&back));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let m = DenseMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let bytes = encode(&m);
        let path = Path::new("t.dmx");
        assert!(decode(&bytes[..bytes.len() - 1], path).is_err());
        assert!(decode(&bytes[..10], path).is_err());
    }

    #[test]
    fn wrong_version_is_reported() {
        let m = DenseMatrix::zeros(1, 1);
        let mut bytes = encode(&m);
        bytes[15] = 9;
        match decode(&bytes, Path::new("v.dmx")) {
            Err(AppError::Version { found: 9, .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
