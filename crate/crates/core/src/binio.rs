//! Shared container for model and feature files.
//!
//! Layout: 4-byte magic, u32 little-endian length of a UTF-8 JSON header,
//! the header itself, then the payload as little-endian `f64` values.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn encode<H: Serialize>(magic: &[u8; 4], header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| Error::ModelFormat("header too large".into()))?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode<H: DeserializeOwned>(magic: &[u8; 4], bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 8 {
        return Err(Error::ModelFormat("truncated file".into()));
    }
    if &bytes[..4] != magic {
        return Err(Error::ModelFormat(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(Error::ModelFormat("truncated header".into()));
    }
    let header: H = serde_json::from_slice(&body[..len]).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let payload = &body[len..];
    if payload.len() % 8 != 0 {
        return Err(Error::ModelFormat("payload is not a whole number of f64".into()));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

pub fn write_file<H: Serialize>(path: &Path, magic: &[u8; 4], header: &H, payload: &[f64]) -> Result<()> {
    let bytes = encode(magic, header, payload)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file<H: DeserializeOwned>(path: &Path, magic: &[u8; 4]) -> Result<(H, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(magic, &bytes)
}

/// Pops `n` values off the front of a payload cursor.
pub(crate) fn take<'a>(cursor: &mut &'a [f64], n: usize) -> Result<&'a [f64]> {
    if cursor.len() < n {
        return Err(Error::ModelFormat(format!(
            "payload too short: need {n} more values, have {}",
            cursor.len()
        )));
    }
    let (head, tail) = cursor.split_at(n);
    *cursor = tail;
    Ok(head)
}
