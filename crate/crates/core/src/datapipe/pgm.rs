//! Binary portable graymap (P5) export.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PgmDepth {
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

/// Encodes `[0, 1]` values row-major as P5; 16-bit samples are big-endian.
pub fn encode_pgm(width: usize, height: usize, values: &[f32], depth: PgmDepth) -> Result<Vec<u8>> {
    if values.len() != width * height || values.is_empty() {
        return Err(Error::Shape(format!(
            "pgm: {width}x{height} image needs {} values, got {}",
            width * height,
            values.len()
        )));
    }
    let max: u32 = match depth {
        PgmDepth::Eight => 255,
        PgmDepth::Sixteen => 65535,
    };
    let mut out = format!("P5\n{width} {height}\n{max}\n").into_bytes();
    for &v in values {
        let q = (v.clamp(0.0, 1.0) as f64 * max as f64).round() as u32;
        match depth {
            PgmDepth::Eight => out.push(q as u8),
            PgmDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f32], depth: PgmDepth) -> Result<()> {
    let bytes = encode_pgm(width, height, values, depth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_samples() {
        let b = encode_pgm(2, 1, &[0.0, 1.0], PgmDepth::Eight).unwrap();
        assert_eq!(b, b"P5\n2 1\n255\n\x00\xff");
        let b = encode_pgm(1, 1, &[0.5], PgmDepth::Sixteen).unwrap();
        assert!(b.ends_with(&32768u16.to_be_bytes()));
        assert!(encode_pgm(2, 2, &[0.0], PgmDepth::Eight).is_err());
    }
}
