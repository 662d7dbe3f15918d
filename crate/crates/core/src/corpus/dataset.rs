use sha2::{Digest, Sha256};

use super::{read_images, CorpusManifest, ImageSequence, ScanIssue, Split, UtteranceRecord};
use crate::error::{Error, Result};
use crate::labels::{midpoint_frames_checked, parse_alignment, AlignedLabels, PhonemeSet};
use crate::models::Example;
use crate::numerics::Rng;
use crate::signal::{
    add_noise_snr, decode_wav, fit_norm_stats, normalize, read_features, read_wav, write_features, AudioClip,
    FeatureSequence, Mfcc, MfccConfig, NormStats, Snr,
};

pub const CACHE_DIR: &str = "cache";

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub clip: AudioClip,
    pub labels: AlignedLabels,
    pub video: Option<ImageSequence>,
}

impl Utterance {
    pub fn load(manifest: &CorpusManifest, rec: &UtteranceRecord) -> Result<Self> {
        let clip = read_wav(&manifest.path(&rec.audio))?;
        let lab = manifest.path(&rec.labels);
        let text = std::fs::read_to_string(&lab).map_err(|e| Error::io(&lab, e))?;
        let labels = parse_alignment(&text, clip.sample_rate(), PhonemeSet::standard())?;
        let video = rec.video.as_ref().map(|v| read_images(&manifest.path(v))).transpose()?;
        Ok(Utterance { id: rec.id.clone(), clip, labels, video })
    }
}

/// Class of each frame: the interval containing the frame centre, or the
/// nearest interval when the centre falls in a gap or past the ends.
pub fn frame_labels(labels: &AlignedLabels, frames: usize, hop: f64, window: f64) -> Vec<usize> {
    let ivs = &labels.intervals;
    if ivs.is_empty() {
        return Vec::new();
    }
    let mut k = 0;
    (0..frames)
        .map(|t| {
            let c = t as f64 * hop + window / 2.0;
            while k + 1 < ivs.len() && ivs[k + 1].start <= c {
                k += 1;
            }
            let iv = &ivs[k];
            if c >= iv.end && k + 1 < ivs.len() && (ivs[k + 1].start - c) < (c - iv.end) {
                ivs[k + 1].phoneme
            } else {
                iv.phoneme
            }
        })
        .collect()
}

/// Normalizes features and attaches frame labels, interval midpoints and
/// (when `with_video`) the image at each interval midpoint.
pub fn make_example(utt: &Utterance, raw: &FeatureSequence, norm: &NormStats, classes: usize, with_video: bool) -> Result<Example> {
    if let Some(iv) = utt.labels.intervals.iter().find(|iv| iv.phoneme >= classes) {
        return Err(Error::Format(format!(
            "{}: class {} is outside the model's {classes} classes",
            utt.id, iv.phoneme
        )));
    }
    let feats = normalize(raw, norm)?;
    let mids = midpoint_frames_checked(&utt.labels, feats.hop, feats.len(), utt.clip.duration())
        .map_err(|e| Error::Format(format!("{}: {e}", utt.id)))?;
    let images = if with_video {
        let video = utt.video.as_ref().ok_or_else(|| Error::Format(format!("{}: no image sequence", utt.id)))?;
        if video.is_empty() {
            return Err(Error::Format(format!("{}: image sequence is empty", utt.id)));
        }
        utt.labels.intervals.iter().map(|iv| video.tensor(video.index_at(iv.midpoint()))).collect()
    } else {
        Vec::new()
    };
    Ok(Example {
        frame_labels: frame_labels(&utt.labels, feats.len(), feats.hop, feats.window),
        features: Some(feats.frames),
        images,
        midpoints: mids.iter().map(|&(f, _)| f).collect(),
        labels: mids.iter().map(|&(_, c)| c).collect(),
    })
}

fn split_stream(split: Split) -> u64 {
    match split {
        Split::Train => 1,
        Split::Val => 2,
        Split::Test => 3,
    }
}

/// Loads a split as model examples. Clean audio uses cached features when
/// present; otherwise audio is corrupted at `snr` with a per-utterance noise
/// stream derived from `seed` before feature extraction.
pub fn load_split(
    manifest: &CorpusManifest,
    split: Split,
    snr: Snr,
    seed: u64,
    mfcc: &Mfcc,
    classes: usize,
    with_video: bool,
) -> Result<Vec<Example>> {
    let norm = manifest
        .norm_stats
        .as_ref()
        .ok_or_else(|| Error::Config("corpus has no normalization statistics; run the feature cache first".into()))?;
    let base = Rng::new(seed).derive(split_stream(split));
    manifest
        .split(split)
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let utt = Utterance::load(manifest, rec)?;
            let raw = match (snr, &rec.features) {
                (Snr::Clean, Some(p)) => read_features(&manifest.path(p))?,
                _ => {
                    let noisy = add_noise_snr(&utt.clip, snr, &mut base.derive(i as u64))?;
                    mfcc.extract(&noisy)?
                }
            };
            make_example(&utt, &raw, norm, classes, with_video)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheReport {
    pub computed: usize,
    pub hits: usize,
    pub errors: Vec<ScanIssue>,
}

fn content_hash(audio: &[u8], fingerprint: &str) -> String {
    let mut h = Sha256::new();
    h.update(audio);
    h.update(fingerprint.as_bytes());
    hex::encode(h.finalize())
}

/// Computes MFCC features for every utterance once, keyed by the hash of the
/// audio bytes and the extractor settings, then fits normalization
/// statistics on the training split only.
pub fn cache_features(manifest: &mut CorpusManifest, config: &MfccConfig) -> Result<CacheReport> {
    let mfcc = Mfcc::new(config.clone(), manifest.sample_rate.max(1))?;
    let fingerprint = config.fingerprint();
    let dir = manifest.root.join(CACHE_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut report = CacheReport::default();
    let mut train = Vec::new();
    let root = manifest.root.clone();
    for (&split, recs) in manifest.splits.iter_mut() {
        for rec in recs.iter_mut() {
            let audio_path = root.join(&rec.audio);
            let result = std::fs::read(&audio_path).map_err(|e| Error::io(&audio_path, e)).and_then(|bytes| {
                let hash = content_hash(&bytes, &fingerprint);
                let rel = std::path::PathBuf::from(CACHE_DIR).join(format!("{hash}.avfc"));
                let path = root.join(&rel);
                let feats = match read_features(&path) {
                    Ok(f) => {
                        report.hits += 1;
                        f
                    }
                    _ => {
                        write_features(&path, &mfcc.extract(&decode_wav(&bytes)?)?)?;
                        report.computed += 1;
                        // Read back so hits and misses see the same stored precision.
                        read_features(&path)?
                    }
                };
                Ok((hash, rel, feats))
            });
            match result {
                Ok((hash, rel, feats)) => {
                    rec.content_hash = Some(hash);
                    rec.features = Some(rel);
                    if split == Split::Train {
                        train.push(feats);
                    }
                }
                Err(e) => {
                    rec.features = None;
                    report.errors.push(ScanIssue { path: audio_path, message: e.to_string() });
                }
            }
        }
    }
    if train.is_empty() {
        return Err(Error::Config("the training split has no usable utterances to fit normalization".into()));
    }
    let frames: usize = train.iter().map(FeatureSequence::len).sum();
    manifest.norm_stats = Some(fit_norm_stats(&train)?);
    manifest.norm_provenance = Some(format!("train split: {} utterances, {frames} frames", train.len()));
    manifest.mfcc = Some(fingerprint);
    Ok(report)
}
