//! Raw float grid files.
//!
//! Layout (all integers little-endian):
//!
//! | offset        | size      | content                                  |
//! |---------------|-----------|------------------------------------------|
//! | 0             | 4         | magic `EGRD`                             |
//! | 4             | 4         | format version (u32, currently 1)        |
//! | 8             | 4         | height (u32)                             |
//! | 12            | 4         | width (u32)                              |
//! | 16            | 4·h·w     | f32 values, row-major                    |
//! | 16 + 4·h·w    | 4         | CRC-32 (IEEE) of every preceding byte    |

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"EGRD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
pub const TRAILER_LEN: usize = 4;

pub fn encode(grid: &Array2<f32>) -> Vec<u8> {
    let (h, w) = grid.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * h * w + TRAILER_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for v in grid.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Decodes a grid; the checksum is verified before the header is trusted,
/// so truncation surfaces as a checksum failure.
pub fn decode(bytes: &[u8]) -> Result<Array2<f32>, FormatError> {
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(FormatError::MalformedHeader(format!(
            "file is {} bytes, shorter than header and checksum",
            bytes.len()
        )));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed });
    }
    if body[..4] != MAGIC {
        return Err(FormatError::MalformedHeader(format!("bad magic {:?}", &body[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(FormatError::MalformedHeader(format!("unsupported version {version}")));
    }
    let (h, w) = (word(8) as usize, word(12) as usize);
    let payload = &body[HEADER_LEN..];
    let declared = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::MalformedHeader(format!("dimensions {h}x{w} overflow")))?;
    if payload.len() != declared {
        return Err(FormatError::DimensionMismatch {
            declared,
            actual: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((h, w), values).expect("length checked"))
}

pub fn write_grid(path: &Path, grid: &Array2<f32>) -> Result<()> {
    std::fs::write(path, encode(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<Array2<f32>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            })
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    decode(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}
