//! Text and binary file helpers shared by the bundle and checkpoint code.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Magic prefix of a binary tensor file.
pub const TENSOR_MAGIC: &[u8; 4] = b"GPTN";

/// Non-empty, trimmed lines. Lines starting with `#` are skipped.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

/// Tab-separated rows with their 1-based line numbers.
pub fn read_tsv_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            (
                i + 1,
                l.trim_end_matches('\r')
                    .split('\t')
                    .map(|f| f.trim().to_owned())
                    .collect(),
            )
        })
        .collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Encodes `data` as a tensor file: magic, `u32` rank, `u64` dims, then
/// little-endian `f32` values in row-major order.
pub fn encode_f32_tensor(shape: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(Error::dims("tensor file", expected, data.len()));
    }
    let mut out = Vec::with_capacity(8 + shape.len() * 8 + data.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_f32_tensor(bytes: &[u8], what: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let corrupt = |msg: &str| Error::CorruptManifest(format!("{what}: {msg}"));
    if bytes.len() < 8 || &bytes[..4] != TENSOR_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header = 8 + rank * 8;
    if bytes.len() < header {
        return Err(corrupt("truncated header"));
    }
    let shape: Vec<usize> = (0..rank)
        .map(|i| u64::from_le_bytes(bytes[8 + i * 8..16 + i * 8].try_into().unwrap()) as usize)
        .collect();
    let count: usize = shape.iter().product();
    if bytes.len() != header + count * 4 {
        return Err(corrupt(&format!(
            "expected {} data bytes, found {}",
            count * 4,
            bytes.len() - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((shape, data))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidValue(format!("serialising {}: {e}", path.display())))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_bytes_roundtrip() {
        let data = vec![1.5, -2.25, 0.0, 3.0e-3, 7.0, 8.0];
        let bytes = encode_f32_tensor(&[2, 3], &data).unwrap();
        let (shape, back) = decode_f32_tensor(&bytes, "t").unwrap();
        assert_eq!(shape, vec![2, 3]);
        let expect: Vec<f64> = data.iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(back, expect);
        assert!(decode_f32_tensor(&bytes[..bytes.len() - 1], "t").is_err());
    }
}
