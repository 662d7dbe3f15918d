use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

fn format_err(e: hound::Error) -> Error {
    Error::Format(format!("wav: {e}"))
}

/// Decodes single-channel 16-bit PCM WAV bytes.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    let mut reader = WavReader::new(Cursor::new(bytes)).map_err(format_err)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != SampleFormat::Int {
        return Err(Error::Format(format!(
            "wav: expected mono 16-bit PCM, got {} channel(s) at {} bits",
            spec.channels, spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(format_err)?;
    AudioClip::new(samples, spec.sample_rate).map_err(|e| Error::Format(format!("wav: {e}")))
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes mono 16-bit PCM, clipping to the representable range.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(e) => Error::io(path, e),
        other => format_err(other),
    };
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for &s in clip.samples() {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        w.write_sample(v).map_err(io)?;
    }
    w.finalize().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, 0.999, -1.0, 1.5], 16_000).unwrap();
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        assert_eq!(back.samples()[..5], [0.0, 0.5, -0.5, (0.999f64 * 32768.0).round() / 32768.0, -1.0]);
        assert_eq!(back.samples()[5], 32767.0 / 32768.0);
    }

    #[test]
    fn garbage_is_a_format_error() {
        assert!(matches!(decode_wav(b"RIFF\x00\x00"), Err(Error::Format(_))));
        assert!(matches!(decode_wav(&[]), Err(Error::Format(_))));
    }
}
