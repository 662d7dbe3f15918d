//! Seeded synthetic audio-visual corpus.
//!
//! Each class owns a spectral envelope (a few mel-scale bumps over a flat
//! floor). A segment of class `c` is white noise filtered by that envelope
//! after per-segment jitter, so its MFCCs carry the class while additive
//! white noise at low SNR flattens the envelope away. Classes are grouped
//! into mouth-shape patterns; every class in a group draws the same
//! ellipse, which limits what the images alone can tell apart.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{scan_corpus, write_images, CorpusManifest, ImageSequence, Split};
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::labels::{serialize_alignment, AlignedLabels, Interval, PhonemeSet, PHONEME_COUNT};
use crate::numerics::Rng;
use crate::signal::{hz_to_mel, write_wav, AudioClip};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Number of classes K; class `k` is written as the `k`-th phoneme symbol.
    pub classes: usize,
    /// Classes sharing one mouth pattern.
    pub classes_per_pattern: usize,
    /// Scales down every source of within-class variation.
    pub separability: f64,
    /// Largest height of a class envelope bump above the floor, in dB.
    pub contrast_db: f64,
    /// Downward slope shared by every class, in dB per 1000 mel. Concentrates
    /// energy at low frequencies so white noise masks the upper bumps first.
    pub spectral_tilt: f64,
    pub train_utterances: usize,
    pub val_utterances: usize,
    pub test_utterances: usize,
    pub segments_min: usize,
    pub segments_max: usize,
    pub segment_min_ms: f64,
    pub segment_max_ms: f64,
    pub sample_rate: u32,
    pub image_size: usize,
    /// Standard deviation of pixel noise, in 8-bit levels.
    pub image_noise: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 10,
            classes_per_pattern: 2,
            separability: 1.0,
            contrast_db: 7.0,
            spectral_tilt: 0.0,
            train_utterances: 120,
            val_utterances: 30,
            test_utterances: 30,
            segments_min: 6,
            segments_max: 12,
            segment_min_ms: 80.0,
            segment_max_ms: 200.0,
            sample_rate: 16_000,
            image_size: 120,
            image_noise: 20.0,
            fps: 30.0,
            seed: 1,
        }
    }
}

const KEYS: &[&str] = &[
    "classes",
    "classes_per_pattern",
    "separability",
    "contrast_db",
    "spectral_tilt",
    "train_utterances",
    "val_utterances",
    "test_utterances",
    "segments_min",
    "segments_max",
    "segment_min_ms",
    "segment_max_ms",
    "sample_rate",
    "image_size",
    "image_noise",
    "fps",
    "seed",
];

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.classes < 2 || self.classes > PHONEME_COUNT {
            return fail(format!("classes must lie in 2..={PHONEME_COUNT}, got {}", self.classes));
        }
        if self.classes_per_pattern == 0 {
            return fail("classes_per_pattern must be at least 1".into());
        }
        if !(self.separability > 0.0 && self.separability.is_finite()) {
            return fail(format!("separability must be positive, got {}", self.separability));
        }
        if !(self.contrast_db > 0.0 && self.contrast_db <= 60.0) {
            return fail(format!("contrast_db must lie in (0, 60], got {}", self.contrast_db));
        }
        if !(self.spectral_tilt.abs() <= 40.0) {
            return fail(format!("spectral_tilt must lie in [-40, 40], got {}", self.spectral_tilt));
        }
        if self.train_utterances == 0 {
            return fail("train_utterances must be at least 1".into());
        }
        if self.segments_min == 0 || self.segments_min > self.segments_max {
            return fail("need 1 <= segments_min <= segments_max".into());
        }
        if !(self.segment_min_ms >= 40.0 && self.segment_min_ms <= self.segment_max_ms && self.segment_max_ms.is_finite()) {
            return fail("need 40 <= segment_min_ms <= segment_max_ms".into());
        }
        if self.sample_rate < 8000 {
            return fail("sample_rate must be at least 8000".into());
        }
        if self.image_size < 8 {
            return fail("image_size must be at least 8".into());
        }
        if !(self.image_noise >= 0.0 && self.image_noise.is_finite()) {
            return fail("image_noise must be non-negative".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return fail("fps must be positive".into());
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        doc.reject_unknown(KEYS, &[])?;
        let d = Self::default();
        let s = SynthSpec {
            classes: doc.parse_or("classes", d.classes)?,
            classes_per_pattern: doc.parse_or("classes_per_pattern", d.classes_per_pattern)?,
            separability: doc.parse_or("separability", d.separability)?,
            contrast_db: doc.parse_or("contrast_db", d.contrast_db)?,
            spectral_tilt: doc.parse_or("spectral_tilt", d.spectral_tilt)?,
            train_utterances: doc.parse_or("train_utterances", d.train_utterances)?,
            val_utterances: doc.parse_or("val_utterances", d.val_utterances)?,
            test_utterances: doc.parse_or("test_utterances", d.test_utterances)?,
            segments_min: doc.parse_or("segments_min", d.segments_min)?,
            segments_max: doc.parse_or("segments_max", d.segments_max)?,
            segment_min_ms: doc.parse_or("segment_min_ms", d.segment_min_ms)?,
            segment_max_ms: doc.parse_or("segment_max_ms", d.segment_max_ms)?,
            sample_rate: doc.parse_or("sample_rate", d.sample_rate)?,
            image_size: doc.parse_or("image_size", d.image_size)?,
            image_noise: doc.parse_or("image_noise", d.image_noise)?,
            fps: doc.parse_or("fps", d.fps)?,
            seed: doc.parse_or("seed", d.seed)?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        Self::from_kv(&KvDoc::parse_str(text, origin)?)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "classes = {}\nclasses_per_pattern = {}\nseparability = {}\ncontrast_db = {}\nspectral_tilt = {}\ntrain_utterances = {}\nval_utterances = {}\n\
             test_utterances = {}\nsegments_min = {}\nsegments_max = {}\nsegment_min_ms = {}\nsegment_max_ms = {}\n\
             sample_rate = {}\nimage_size = {}\nimage_noise = {}\nfps = {}\nseed = {}\n",
            self.classes,
            self.classes_per_pattern,
            self.separability,
            self.contrast_db,
            self.spectral_tilt,
            self.train_utterances,
            self.val_utterances,
            self.test_utterances,
            self.segments_min,
            self.segments_max,
            self.segment_min_ms,
            self.segment_max_ms,
            self.sample_rate,
            self.image_size,
            self.image_noise,
            self.fps,
            self.seed
        )
    }

    pub fn pattern_count(&self) -> usize {
        self.classes.div_ceil(self.classes_per_pattern)
    }

    pub fn pattern_of(&self, class: usize) -> usize {
        class / self.classes_per_pattern
    }

    fn utterances(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_utterances,
            Split::Val => self.val_utterances,
            Split::Test => self.test_utterances,
        }
    }
}

#[derive(Debug, Clone)]
struct Bump {
    center: f64,
    width: f64,
    height: f64,
}

/// Envelope in dB at mel frequency `m`.
fn envelope_db(bumps: &[Bump], m: f64, tilt_per_kmel: f64) -> f64 {
    bumps.iter().map(|b| b.height * (-0.5 * ((m - b.center) / b.width).powi(2)).exp()).sum::<f64>() + tilt_per_kmel * m / 1000.0
}

struct Templates {
    bumps: Vec<Vec<Bump>>,
    /// Half-axes of the mouth ellipse per pattern, as fractions of the image size.
    patterns: Vec<(f64, f64)>,
}

fn templates(spec: &SynthSpec, master: &Rng) -> Templates {
    let max_mel = hz_to_mel(spec.sample_rate as f64 / 2.0);
    let mut rng = master.derive(1);
    let bumps = (0..spec.classes)
        .map(|_| {
            (0..3)
                .map(|_| Bump {
                    center: rng.uniform_range(0.05, 0.92) * max_mel,
                    width: rng.uniform_range(0.05, 0.1) * max_mel,
                    height: rng.uniform_range(0.4, 1.0) * spec.contrast_db,
                })
                .collect()
        })
        .collect();
    let mut grid = Vec::new();
    for w in [0.18, 0.27, 0.36] {
        for h in [0.04, 0.1, 0.16, 0.22] {
            grid.push((w, h));
        }
    }
    let mut rng = master.derive(2);
    rng.shuffle(&mut grid);
    let patterns = (0..spec.pattern_count()).map(|p| grid[p % grid.len()]).collect();
    Templates { bumps, patterns }
}

/// White noise shaped by `gain_db(f_hz)` in the frequency domain.
fn shaped_noise(n: usize, sr: f64, gain_db: impl Fn(f64) -> f64, rng: &mut Rng, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(rng.normal(), 0.0)).collect();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n);
    let inv: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(n);
    fwd.process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = if k <= n / 2 { k } else { n - k };
        let f = bin as f64 * sr / n as f64;
        *v *= 10f64.powf(gain_db(f) / 20.0);
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn render_frame(spec: &SynthSpec, (aw, ah): (f64, f64), rng: &mut Rng, jitter: f64) -> Vec<u8> {
    let s = spec.image_size as f64;
    let cx = s * 0.5 + rng.normal() * 0.015 * s * jitter;
    let cy = s * 0.55 + rng.normal() * 0.015 * s * jitter;
    let a = aw * s * (1.0 + 0.06 * jitter * rng.normal());
    let b = (ah * s * (1.0 + 0.06 * jitter * rng.normal())).max(0.5);
    let mut px = Vec::with_capacity(spec.image_size * spec.image_size);
    for y in 0..spec.image_size {
        for x in 0..spec.image_size {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / a, (y as f64 + 0.5 - cy) / b);
            let r = (dx * dx + dy * dy).sqrt();
            let base = if r < 1.0 {
                50.0
            } else if r < 1.3 {
                115.0
            } else {
                150.0 + 30.0 * (y as f64 / s)
            };
            px.push((base + spec.image_noise * rng.normal()).round().clamp(0.0, 255.0) as u8);
        }
    }
    px
}

struct Generated {
    clip: AudioClip,
    labels: AlignedLabels,
    video: ImageSequence,
}

fn generate_utterance(spec: &SynthSpec, t: &Templates, rng: &mut Rng, planner: &mut FftPlanner<f64>) -> Result<Generated> {
    let sr = spec.sample_rate as f64;
    let jitter = 1.0 / spec.separability;
    let max_mel = hz_to_mel(sr / 2.0);
    let tilt = rng.normal() * 4.0 * jitter - spec.spectral_tilt;
    let level_db = rng.normal() * 2.0;
    let segments = spec.segments_min + rng.below(spec.segments_max - spec.segments_min + 1);
    let mut samples = Vec::new();
    let mut intervals = Vec::with_capacity(segments);
    for _ in 0..segments {
        let class = rng.below(spec.classes);
        let ms = rng.uniform_range(spec.segment_min_ms, spec.segment_max_ms);
        let n = ((ms / 1000.0) * sr).round() as usize;
        let shift = rng.normal() * 0.03 * max_mel * jitter;
        let bumps: Vec<Bump> = t.bumps[class]
            .iter()
            .map(|b| Bump { center: b.center + shift, width: b.width, height: b.height * (1.0 + rng.normal() * 0.25 * jitter) })
            .collect();
        let seg = shaped_noise(n, sr, |f| envelope_db(&bumps, hz_to_mel(f), tilt), rng, planner);
        let start = samples.len();
        samples.extend(seg);
        intervals.push(Interval { start: start as f64 / sr, end: samples.len() as f64 / sr, phoneme: class });
    }
    let rms = (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt();
    let g = 0.1 * 10f64.powf(level_db / 20.0) / rms.max(1e-12);
    samples.iter_mut().for_each(|v| *v = (*v * g).clamp(-0.99, 0.99));
    // Quantize here so the stored file and the in-memory clip agree.
    samples.iter_mut().for_each(|v| *v = (*v * 32768.0).round() / 32768.0);
    let clip = AudioClip::new(samples, spec.sample_rate)?;
    let duration = clip.duration();
    let frames = (duration * spec.fps).ceil().max(1.0) as usize;
    let mut pixels = Vec::with_capacity(frames * spec.image_size * spec.image_size);
    let mut k = 0;
    for j in 0..frames {
        let time = (j as f64 + 0.5) / spec.fps;
        while k + 1 < intervals.len() && intervals[k + 1].start <= time {
            k += 1;
        }
        let pattern = t.patterns[spec.pattern_of(intervals[k].phoneme)];
        pixels.extend(render_frame(spec, pattern, rng, jitter));
    }
    let video = ImageSequence::new(spec.image_size, spec.image_size, spec.fps, pixels)?;
    Ok(Generated { clip, labels: AlignedLabels { intervals }, video })
}

/// Writes the corpus and its `manifest.json` under `out`. The same spec
/// always produces byte-identical files.
pub fn generate_synthetic(spec: &SynthSpec, out: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    let master = Rng::new(spec.seed);
    let t = templates(spec, &master);
    let phonemes = PhonemeSet::standard();
    let mut planner = FftPlanner::new();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let snapshot = out.join("synth.cfg");
    std::fs::write(&snapshot, spec.to_kv_string()).map_err(|e| Error::io(&snapshot, e))?;
    for (si, split) in Split::ALL.into_iter().enumerate() {
        let dir = out.join(split.name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..spec.utterances(split) {
            let mut rng = master.derive(((si as u64 + 1) << 32) | i as u64);
            let g = generate_utterance(spec, &t, &mut rng, &mut planner)?;
            let id = format!("{}-{i:04}", split.name());
            write_wav(&dir.join(format!("{id}.wav")), &g.clip)?;
            let lab = dir.join(format!("{id}.lab"));
            std::fs::write(&lab, serialize_alignment(&g.labels, spec.sample_rate, phonemes)?).map_err(|e| Error::io(&lab, e))?;
            write_images(&dir.join(format!("{id}.frames")), &g.video)?;
        }
    }
    let manifest = scan_corpus(out)?;
    if !manifest.errors.is_empty() {
        return Err(Error::Format(format!("generated corpus failed its own scan: {:?}", manifest.errors[0])));
    }
    manifest.save()?;
    Ok(manifest)
}
