//! Audio front-end: MFCC features with deltas, training-set normalization,
//! SNR-calibrated white noise, and the on-disk audio/feature formats.

mod cache;
mod mfcc;
mod noise;
mod norm;
mod wav;

pub use cache::{decode_features, encode_features, read_features, write_features, FEATURE_CACHE_MAGIC, FEATURE_CACHE_VERSION};
pub use mfcc::{hz_to_mel, mel_to_hz, mfcc_extract, Mfcc, MfccConfig, FEATURE_DIM};
pub use noise::{add_noise_snr, add_noise_snr_with_noise, measured_snr_db, signal_power, Snr};
pub use norm::{denormalize, fit_norm_stats, normalize, NormStats, STD_FLOOR};
pub use wav::{decode_wav, read_wav, write_wav};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio with nominal amplitude in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Parameter("audio clip has no samples".into()));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Per-frame feature vectors at a fixed hop.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Tensor,
    /// Seconds between frame starts.
    pub hop: f64,
    /// Analysis window length in seconds.
    pub window: f64,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.shape()[1]
    }

    /// Center time of every frame.
    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| i as f64 * self.hop + self.window / 2.0).collect()
    }
}
