use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, FeatureSequence};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// 12 cepstra + log energy, with first and second deltas.
pub const FEATURE_DIM: usize = 39;
const STATIC_DIM: usize = 13;

/// Front-end parameters. The defaults are HTK-style: 25 ms Hamming window,
/// 10 ms hop, 26 mel filters over 0 Hz to Nyquist, cepstra 1..=12 of a DCT-II,
/// log energy of the raw (unwindowed) frame, ±2 frame delta regression.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub window_secs: f64,
    pub hop_secs: f64,
    pub mel_filters: usize,
    pub cepstra: usize,
    pub low_hz: f64,
    /// Upper filterbank edge; `None` means the Nyquist frequency.
    pub high_hz: Option<f64>,
    pub delta_window: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            window_secs: 0.025,
            hop_secs: 0.010,
            mel_filters: 26,
            cepstra: 12,
            low_hz: 0.0,
            high_hz: None,
            delta_window: 2,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    /// Stable text form; part of the feature-cache key.
    pub fn fingerprint(&self) -> String {
        format!(
            "mfcc:v1:win={}:hop={}:mel={}:cep={}:lo={}:hi={:?}:delta={}:floor={}",
            self.window_secs,
            self.hop_secs,
            self.mel_filters,
            self.cepstra,
            self.low_hz,
            self.high_hz,
            self.delta_window,
            self.log_floor
        )
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed MFCC pipeline for one sample rate.
pub struct Mfcc {
    config: MfccConfig,
    sample_rate: u32,
    window_len: usize,
    hop_len: usize,
    fft_len: usize,
    hamming: Vec<f64>,
    /// `mel_filters × (fft_len/2 + 1)` triangle weights.
    filters: Vec<Vec<f64>>,
    /// (left, center, right) edge of each triangle in Hz.
    edges: Vec<(f64, f64, f64)>,
    fft: Arc<dyn Fft<f64>>,
}

impl Mfcc {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample rate must be positive".into()));
        }
        if config.cepstra + 1 != STATIC_DIM {
            return Err(Error::Parameter(format!(
                "feature layout is fixed at 12 cepstra + energy, got {} cepstra",
                config.cepstra
            )));
        }
        if config.mel_filters <= config.cepstra {
            return Err(Error::Parameter("need more mel filters than cepstra".into()));
        }
        let sr = sample_rate as f64;
        let window_len = (config.window_secs * sr).round() as usize;
        let hop_len = (config.hop_secs * sr).round() as usize;
        if window_len < 2 || hop_len == 0 {
            return Err(Error::Parameter("window and hop must span at least one sample".into()));
        }
        let fft_len = window_len.next_power_of_two();
        let high = config.high_hz.unwrap_or(sr / 2.0).min(sr / 2.0);
        if !(config.low_hz >= 0.0 && config.low_hz < high) {
            return Err(Error::Parameter(format!("bad filterbank range {}..{high} Hz", config.low_hz)));
        }

        let hamming = (0..window_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (window_len - 1) as f64).cos())
            .collect();

        let (lo_mel, hi_mel) = (hz_to_mel(config.low_hz), hz_to_mel(high));
        let points: Vec<f64> = (0..config.mel_filters + 2)
            .map(|i| mel_to_hz(lo_mel + (hi_mel - lo_mel) * i as f64 / (config.mel_filters + 1) as f64))
            .collect();
        let bins = fft_len / 2 + 1;
        let mut filters = Vec::with_capacity(config.mel_filters);
        let mut edges = Vec::with_capacity(config.mel_filters);
        for m in 0..config.mel_filters {
            let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
            edges.push((l, c, r));
            let weights = (0..bins)
                .map(|k| {
                    let f = k as f64 * sr / fft_len as f64;
                    if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect();
            filters.push(weights);
        }

        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Ok(Mfcc { config, sample_rate, window_len, hop_len, fft_len, hamming, filters, edges, fft })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop_len(&self) -> usize {
        self.hop_len
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn filter_edges_hz(&self) -> &[(f64, f64, f64)] {
        &self.edges
    }

    /// Number of frames for `n` samples: `floor((n - window) / hop) + 1`.
    pub fn frame_count(&self, n: usize) -> Result<usize> {
        if n < self.window_len {
            return Err(Error::InputTooShort { needed: self.window_len, got: n });
        }
        Ok((n - self.window_len) / self.hop_len + 1)
    }

    /// `|X_k|^2` of the Hamming-windowed, zero-padded frame for `k = 0..=fft/2`.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.hamming)) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        buf[..self.fft_len / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn filterbank_energies(&self, frame: &[f64]) -> Vec<f64> {
        let power = self.power_spectrum(frame);
        self.filters.iter().map(|w| w.iter().zip(&power).map(|(a, b)| a * b).sum()).collect()
    }

    fn static_features(&self, frame: &[f64], out: &mut [f64]) {
        let floor = self.config.log_floor;
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        out[0] = energy.max(floor).ln();
        let log_mel: Vec<f64> = self.filterbank_energies(frame).iter().map(|e| e.max(floor).ln()).collect();
        let m = log_mel.len() as f64;
        let norm = (2.0 / m).sqrt();
        for n in 1..=self.config.cepstra {
            out[n] = norm
                * log_mel
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| v * (PI * n as f64 * (j as f64 + 0.5) / m).cos())
                    .sum::<f64>();
        }
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureSequence> {
        if clip.sample_rate() != self.sample_rate {
            return Err(Error::Parameter(format!(
                "extractor built for {} Hz, clip is {} Hz",
                self.sample_rate,
                clip.sample_rate()
            )));
        }
        let samples = clip.samples();
        let frames = self.frame_count(samples.len())?;
        let mut statics = vec![0.0; frames * STATIC_DIM];
        for (i, row) in statics.chunks_mut(STATIC_DIM).enumerate() {
            let start = i * self.hop_len;
            self.static_features(&samples[start..start + self.window_len], row);
        }
        let deltas = delta(&statics, frames, STATIC_DIM, self.config.delta_window);
        let accel = delta(&deltas, frames, STATIC_DIM, self.config.delta_window);

        let mut data = Vec::with_capacity(frames * FEATURE_DIM);
        for t in 0..frames {
            let span = t * STATIC_DIM..(t + 1) * STATIC_DIM;
            data.extend_from_slice(&statics[span.clone()]);
            data.extend_from_slice(&deltas[span.clone()]);
            data.extend_from_slice(&accel[span]);
        }
        let frames = Tensor::new(vec![frames, FEATURE_DIM], data)?;
        frames.check_finite("mfcc")?;
        let sr = self.sample_rate as f64;
        Ok(FeatureSequence { frames, hop: self.hop_len as f64 / sr, window: self.window_len as f64 / sr })
    }
}

/// Regression deltas over ±`window` frames, replicating edge frames.
fn delta(x: &[f64], frames: usize, dim: usize, window: usize) -> Vec<f64> {
    let denom: f64 = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize, d: usize| x[t.clamp(0, frames as isize - 1) as usize * dim + d];
    let mut out = vec![0.0; frames * dim];
    for t in 0..frames as isize {
        for d in 0..dim {
            let num: f64 = (1..=window as isize).map(|n| n as f64 * (at(t + n, d) - at(t - n, d))).sum();
            out[t as usize * dim + d] = num / denom;
        }
    }
    out
}

/// MFCC features with the default configuration.
pub fn mfcc_extract(clip: &AudioClip) -> Result<FeatureSequence> {
    Mfcc::new(MfccConfig::default(), clip.sample_rate())?.extract(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, sr: u32) -> AudioClip {
        let n = (secs * sr as f64) as usize;
        let s = (0..n).map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect();
        AudioClip::new(s, sr).unwrap()
    }

    #[test]
    fn one_second_gives_98_frames() {
        let f = mfcc_extract(&sine(440.0, 1.0, 16_000)).unwrap();
        assert_eq!(f.frames.shape(), &[98, 39]);
        assert!((f.hop - 0.01).abs() < 1e-12);
    }

    #[test]
    fn too_short_clip() {
        let clip = AudioClip::new(vec![0.1; 399], 16_000).unwrap();
        assert!(matches!(mfcc_extract(&clip), Err(Error::InputTooShort { needed: 400, got: 399 })));
    }

    #[test]
    fn silence_gives_identical_frames() {
        let clip = AudioClip::new(vec![0.0; 8000], 16_000).unwrap();
        let f = mfcc_extract(&clip).unwrap();
        let first = f.frames.row(0).to_vec();
        assert!((first[0] - 1e-10f64.ln()).abs() < 1e-12);
        for t in 1..f.len() {
            assert_eq!(f.frames.row(t), &first[..]);
        }
        // deltas of a constant are zero
        assert!(first[13..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deltas_of_a_ramp() {
        let x: Vec<f64> = (0..10).map(|t| t as f64).collect();
        let d = delta(&x, 10, 1, 2);
        for t in 2..8 {
            assert!((d[t] - 1.0).abs() < 1e-12);
        }
        // edge replication flattens the ends
        assert!(d[0] < 1.0 && d[9] < 1.0);
    }

    #[test]
    fn filter_edges_span_band() {
        let m = Mfcc::new(MfccConfig::default(), 16_000).unwrap();
        let e = m.filter_edges_hz();
        assert_eq!(e.len(), 26);
        assert!(e[0].0.abs() < 1e-9);
        assert!((e[25].2 - 8000.0).abs() < 1e-6);
    }

    #[test]
    fn mel_round_trip() {
        for hz in [0.0, 100.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }
}
