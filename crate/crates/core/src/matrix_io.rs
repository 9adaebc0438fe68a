//! Binary matrix files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"D3GF" | rows: u32 | cols: u32 | rows * cols f32 values, row-major
//! ```

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"D3GF";
const HEADER_LEN: usize = 12;

pub fn encode_matrix(m: &DenseMatrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows())
        .map_err(|_| Error::InvalidConfig(format!("{} rows exceed u32", m.rows())))?;
    let cols = u32::try_from(m.cols())
        .map_err(|_| Error::InvalidConfig(format!("{} cols exceed u32", m.cols())))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    for &v in m.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

/// Decodes a matrix; `path` only labels errors.
pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4])),
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("header shape {rows}x{cols} overflows"),
        })?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "{} trailing bytes after {rows}x{cols} payload",
                bytes.len() - expected
            ),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DenseMatrix::from_vec(rows, cols, data).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    fs::write(path, encode_matrix(m)?)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == ErrorKind::NotFound => {
            return Err(Error::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    decode_matrix(&bytes, path)
}
