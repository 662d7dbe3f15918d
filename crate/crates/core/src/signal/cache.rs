//! Feature cache file:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "AVFC"
//! 4       4     version (u32 LE) = 1
//! 8       4     frame count L (u32 LE)
//! 12      4     feature dim (u32 LE) = 39
//! 16      4     hop in seconds (f32 LE)
//! 20      4     window in seconds (f32 LE)
//! 24      4·L·dim   row-major f32 LE
//! ```

use std::path::Path;

use super::{FeatureSequence, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const FEATURE_CACHE_MAGIC: &[u8; 4] = b"AVFC";
pub const FEATURE_CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * seq.frames.len());
    out.extend_from_slice(FEATURE_CACHE_MAGIC);
    out.extend_from_slice(&FEATURE_CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.hop as f32).to_le_bytes());
    out.extend_from_slice(&(seq.window as f32).to_le_bytes());
    for &v in seq.frames.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let bad = |m: &str| Error::Format(format!("feature cache: {m}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != FEATURE_CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = le_u32(bytes, 4);
    if version != FEATURE_CACHE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let frames = le_u32(bytes, 8) as usize;
    let dim = le_u32(bytes, 12) as usize;
    if dim != FEATURE_DIM {
        return Err(bad(&format!("feature dim {dim}, expected {FEATURE_DIM}")));
    }
    let hop = le_f32(bytes, 16) as f64;
    let window = le_f32(bytes, 20) as f64;
    if !(hop > 0.0 && hop.is_finite() && window > 0.0 && window.is_finite()) {
        return Err(bad("hop and window must be positive"));
    }
    let expected = frames.checked_mul(dim).and_then(|n| n.checked_mul(4)).ok_or_else(|| bad("size overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(bad(&format!("body is {} bytes, expected {expected}", body.len())));
    }
    let data: Vec<f64> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    let frames = Tensor::new(vec![frames, dim], data)?;
    frames.check_finite("feature cache")?;
    Ok(FeatureSequence { frames, hop, window })
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    std::fs::write(path, encode_features(seq)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureSequence {
        let data = (0..3 * 39).map(|i| i as f64 * 0.25 - 7.0).collect();
        FeatureSequence { frames: Tensor::new(vec![3, 39], data).unwrap(), hop: 0.01, window: 0.025 }
    }

    #[test]
    fn header_layout() {
        let b = encode_features(&sample());
        assert_eq!(&b[..4], b"AVFC");
        assert_eq!(le_u32(&b, 4), 1);
        assert_eq!(le_u32(&b, 8), 3);
        assert_eq!(le_u32(&b, 12), 39);
        assert_eq!(b.len(), 24 + 3 * 39 * 4);
    }

    #[test]
    fn round_trip_exact_for_f32_values() {
        let s = sample();
        let back = decode_features(&encode_features(&s)).unwrap();
        assert_eq!(back.frames, s.frames);
        assert!((back.hop - 0.01).abs() < 1e-9);
    }

    #[test]
    fn truncation_and_bad_magic() {
        let b = encode_features(&sample());
        assert!(decode_features(&b[..b.len() - 1]).is_err());
        assert!(decode_features(&b[..10]).is_err());
        let mut m = b.clone();
        m[0] = b'X';
        assert!(decode_features(&m).is_err());
    }
}
