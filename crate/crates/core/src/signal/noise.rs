use std::fmt;
use std::str::FromStr;

use super::AudioClip;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Requested signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Clean,
    Db(f64),
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Clean => f.write_str("clean"),
            Snr::Db(db) => write!(f, "{db}"),
        }
    }
}

impl FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("clean") {
            return Ok(Snr::Clean);
        }
        let db: f64 = s
            .trim_end_matches("dB")
            .trim_end_matches("db")
            .trim()
            .parse()
            .map_err(|_| Error::Parameter(format!("SNR must be `clean` or a number of dB, got `{s}`")))?;
        if !db.is_finite() {
            return Err(Error::Parameter(format!("SNR must be finite, got `{s}`")));
        }
        Ok(Snr::Db(db))
    }
}

/// Mean squared sample value.
pub fn signal_power(samples: &[f64]) -> f64 {
    samples.iter().map(|x| x * x).sum::<f64>() / samples.len().max(1) as f64
}

/// `10 log10(P_signal / P_noise)` over whole clips.
pub fn measured_snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (signal_power(signal) / signal_power(noise)).log10()
}

/// Adds white Gaussian noise with power `P_s / 10^(snr/10)`, where `P_s` is
/// the whole-clip power. Returns the noisy clip and the noise that was added.
pub fn add_noise_snr_with_noise(clip: &AudioClip, snr: Snr, rng: &mut Rng) -> Result<(AudioClip, Vec<f64>)> {
    let db = match snr {
        Snr::Clean => return Ok((clip.clone(), vec![0.0; clip.samples().len()])),
        Snr::Db(db) => db,
    };
    let ps = signal_power(clip.samples());
    if !(ps > 0.0) {
        return Err(Error::DegenerateInput(format!("cannot add noise at {db} dB to a silent clip")));
    }
    let std = (ps / 10f64.powf(db / 10.0)).sqrt();
    let noise: Vec<f64> = (0..clip.samples().len()).map(|_| std * rng.normal()).collect();
    let noisy = clip.samples().iter().zip(&noise).map(|(x, n)| x + n).collect();
    Ok((AudioClip::new(noisy, clip.sample_rate())?, noise))
}

pub fn add_noise_snr(clip: &AudioClip, snr: Snr, rng: &mut Rng) -> Result<AudioClip> {
    add_noise_snr_with_noise(clip, snr, rng).map(|(c, _)| c)
}
