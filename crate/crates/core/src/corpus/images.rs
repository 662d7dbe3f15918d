//! Image-sequence container:
//!
//! ```text
//! offset  size   field
//! 0       4      magic "AVIM"
//! 4       4      version (u32 LE) = 1
//! 8       4      frame count N (u32 LE)
//! 12      4      height H (u32 LE)
//! 16      4      width W (u32 LE)
//! 20      4      frames per second (f32 LE)
//! 24      N·H·W  8-bit greyscale pixels, frame-major then row-major
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGE_MAGIC: &[u8; 4] = b"AVIM";
pub const IMAGE_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;
pub const VIDEO_FPS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSequence {
    pub height: usize,
    pub width: usize,
    pub fps: f64,
    pixels: Vec<u8>,
}

impl ImageSequence {
    pub fn new(height: usize, width: usize, fps: f64, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Format("image sequence: empty frame size".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Format(format!("image sequence: bad frame rate {fps}")));
        }
        if pixels.len() % (height * width) != 0 {
            return Err(Error::Format("image sequence: pixel count is not a whole number of frames".into()));
        }
        Ok(ImageSequence { height, width, fps, pixels })
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / (self.height * self.width)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Frame showing time `t`: `floor(t·fps)`, clamped to the sequence.
    pub fn index_at(&self, t: f64) -> usize {
        ((t * self.fps).floor().max(0.0) as usize).min(self.len().saturating_sub(1))
    }

    /// `[1×H×W]` tensor with pixels scaled to `[-0.5, 0.5]`.
    pub fn tensor(&self, i: usize) -> Tensor {
        let data = self.frame(i).iter().map(|&p| p as f64 / 255.0 - 0.5).collect();
        Tensor::new(vec![1, self.height, self.width], data).unwrap()
    }
}

pub fn encode_images(seq: &ImageSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + seq.pixels.len());
    out.extend_from_slice(IMAGE_MAGIC);
    for v in [IMAGE_VERSION, seq.len() as u32, seq.height as u32, seq.width as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(seq.fps as f32).to_le_bytes());
    out.extend_from_slice(&seq.pixels);
    out
}

pub fn decode_images(bytes: &[u8]) -> Result<ImageSequence> {
    let bad = |m: String| Error::Format(format!("image sequence: {m}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header".into()));
    }
    if &bytes[..4] != IMAGE_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    if u(4) != IMAGE_VERSION as usize {
        return Err(bad(format!("unsupported version {}", u(4))));
    }
    let (n, h, w) = (u(8), u(12), u(16));
    let fps = f32::from_le_bytes(bytes[20..24].try_into().unwrap()) as f64;
    let size = n.checked_mul(h).and_then(|v| v.checked_mul(w)).ok_or_else(|| bad("size overflow".into()))?;
    if bytes.len() - HEADER_LEN != size {
        return Err(bad(format!("{} pixel bytes, header promises {size}", bytes.len() - HEADER_LEN)));
    }
    ImageSequence::new(h, w, fps, bytes[HEADER_LEN..].to_vec())
}

pub fn write_images(path: &Path, seq: &ImageSequence) -> Result<()> {
    std::fs::write(path, encode_images(seq)).map_err(|e| Error::io(path, e))
}

pub fn read_images(path: &Path) -> Result<ImageSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_images(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let seq = ImageSequence::new(2, 3, 30.0, (0..12).collect()).unwrap();
        let bytes = encode_images(&seq);
        assert_eq!(&bytes[..4], b"AVIM");
        assert_eq!(bytes.len(), 24 + 12);
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(decode_images(&bytes).unwrap(), seq);
        assert_eq!(seq.frame(1), &[6, 7, 8, 9, 10, 11]);
        assert_eq!(seq.tensor(0).shape(), &[1, 2, 3]);
    }

    #[test]
    fn frame_lookup_clamps() {
        let seq = ImageSequence::new(1, 1, 30.0, vec![0; 3]).unwrap();
        assert_eq!(seq.index_at(0.0), 0);
        assert_eq!(seq.index_at(0.05), 1);
        assert_eq!(seq.index_at(5.0), 2);
    }

    #[test]
    fn rejects_damage() {
        let seq = ImageSequence::new(2, 2, 30.0, vec![1; 8]).unwrap();
        let bytes = encode_images(&seq);
        assert!(decode_images(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_images(&bytes[..10]).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(decode_images(&b).is_err());
        let mut b = bytes;
        b[20..24].copy_from_slice(&0f32.to_le_bytes());
        assert!(decode_images(&b).is_err());
    }
}
