//! Binary displacement fields: `MMDF`, version byte 1, width and height as
//! little-endian u32, then `(dx, dy)` little-endian f32 pairs, row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::DisplacementField;

const MAGIC: &[u8; 4] = b"MMDF";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

pub fn encode_field(u: &DisplacementField) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * u.vectors().len());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(u.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(u.height() as u32).to_le_bytes());
    for [dx, dy] in u.vectors() {
        buf.extend_from_slice(&(*dx as f32).to_le_bytes());
        buf.extend_from_slice(&(*dy as f32).to_le_bytes());
    }
    buf
}

pub fn decode_field(bytes: &[u8]) -> Result<DisplacementField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "field header needs {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, not an MMDF field".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported field version {}", bytes[4])));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (w, h) = (word(5), word(9));
    if w == 0 || h == 0 {
        return Err(Error::EmptyField);
    }
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "field payload truncated: expected {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let float = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as f64;
    let vectors = (0..w * h)
        .map(|i| {
            let at = HEADER_LEN + 8 * i;
            [float(at), float(at + 4)]
        })
        .collect();
    DisplacementField::new(w, h, vectors)
}

pub fn save_displacement_field(u: &DisplacementField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_field(u)).map_err(|e| Error::file(path, e))
}

pub fn load_displacement_field(path: impl AsRef<Path>) -> Result<DisplacementField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_field(&bytes).map_err(|e| match e {
        Error::EmptyField => Error::EmptyField,
        other => Error::file(path, other),
    })
}
