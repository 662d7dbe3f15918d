//! Corpus layout, manifests, feature caching and the synthetic generator.
//!
//! A corpus root holds `train/`, `val/` and `test/` directories. Each
//! utterance `<id>` is a mono 16-bit `<id>.wav`, a TIMIT-style `<id>.lab`
//! (`start_sample end_sample phoneme` lines) and optionally `<id>.frames`,
//! an image-sequence container of mouth crops.

mod dataset;
mod images;
mod synth;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use dataset::{cache_features, frame_labels, load_split, make_example, CacheReport, Utterance};
pub use images::{decode_images, encode_images, read_images, write_images, ImageSequence, IMAGE_MAGIC, IMAGE_VERSION, VIDEO_FPS};
pub use synth::{generate_synthetic, SynthSpec};

use crate::error::{Error, Result};
use crate::labels::{parse_alignment, PhonemeSet};
use crate::signal::{read_wav, NormStats};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split `{s}`")))
    }
}

/// Paths are relative to the corpus root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub audio: PathBuf,
    pub labels: PathBuf,
    pub video: Option<PathBuf>,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub content_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanIssue {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub sample_rate: u32,
    pub splits: BTreeMap<Split, Vec<UtteranceRecord>>,
    #[serde(default)]
    pub mfcc: Option<String>,
    #[serde(default)]
    pub norm_stats: Option<NormStats>,
    #[serde(default)]
    pub norm_provenance: Option<String>,
    #[serde(default)]
    pub errors: Vec<ScanIssue>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl CorpusManifest {
    pub fn split(&self, s: Split) -> &[UtteranceRecord] {
        self.splits.get(&s).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> BTreeMap<Split, usize> {
        Split::ALL.iter().map(|&s| (s, self.split(s).len())).collect()
    }

    pub fn path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// Splits must not share utterance ids.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for (&split, recs) in &self.splits {
            for r in recs {
                if let Some(prev) = seen.insert(&r.id, split) {
                    return Err(Error::Format(format!(
                        "utterance `{}` appears in both {} and {}",
                        r.id,
                        prev.name(),
                        split.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str, root: &Path) -> Result<Self> {
        let mut m: CorpusManifest = serde_json::from_str(text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("manifest version {} is not supported", m.version)));
        }
        m.root = root.to_path_buf();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self) -> Result<()> {
        let p = self.root.join(MANIFEST_FILE);
        std::fs::write(&p, self.to_json()?).map_err(|e| Error::io(&p, e))
    }

    /// Reads `manifest.json` from a corpus root and checks every record's
    /// files still exist.
    pub fn load(root: &Path) -> Result<Self> {
        let p = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let m = Self::from_json(&text, root)?;
        for r in m.splits.values().flatten() {
            for f in [Some(&r.audio), Some(&r.labels), r.video.as_ref()].into_iter().flatten() {
                if !root.join(f).exists() {
                    return Err(Error::Format(format!("manifest lists missing file {}", root.join(f).display())));
                }
            }
        }
        Ok(m)
    }
}

fn issue(path: &Path, message: impl Into<String>) -> ScanIssue {
    ScanIssue { path: path.to_path_buf(), message: message.into() }
}

/// Discovers utterances under `root`. Problems with individual files are
/// collected in `errors` and those utterances are left out.
pub fn scan_corpus(root: &Path) -> Result<CorpusManifest> {
    if !root.is_dir() {
        return Err(Error::io(root, std::io::Error::new(std::io::ErrorKind::NotFound, "corpus root is not a directory")));
    }
    let phonemes = PhonemeSet::standard();
    let mut manifest = CorpusManifest {
        version: MANIFEST_VERSION,
        sample_rate: 0,
        splits: BTreeMap::new(),
        mfcc: None,
        norm_stats: None,
        norm_provenance: None,
        errors: Vec::new(),
        warnings: Vec::new(),
        root: root.to_path_buf(),
    };
    for split in Split::ALL {
        let dir = root.join(split.name());
        if !dir.is_dir() {
            continue;
        }
        let mut stems: BTreeMap<String, [bool; 3]> = BTreeMap::new();
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let (Some(stem), Some(ext)) = (path.file_stem().and_then(|s| s.to_str()), path.extension().and_then(|s| s.to_str())) else {
                continue;
            };
            let slot = match ext {
                "wav" => 0,
                "lab" => 1,
                "frames" => 2,
                _ => continue,
            };
            stems.entry(stem.to_string()).or_default()[slot] = true;
        }
        let mut records = Vec::new();
        for (id, [wav, lab, frames]) in stems {
            let rel = |ext: &str| PathBuf::from(split.name()).join(format!("{id}.{ext}"));
            if !wav {
                manifest.errors.push(issue(&root.join(rel("lab")), "no matching .wav file"));
                continue;
            }
            if !lab {
                manifest.errors.push(issue(&root.join(rel("wav")), "no matching .lab file"));
                continue;
            }
            let clip = match read_wav(&root.join(rel("wav"))) {
                Ok(c) => c,
                Err(e) => {
                    manifest.errors.push(issue(&root.join(rel("wav")), e.to_string()));
                    continue;
                }
            };
            let lab_path = root.join(rel("lab"));
            let checked = std::fs::read_to_string(&lab_path)
                .map_err(|e| Error::io(&lab_path, e))
                .and_then(|t| parse_alignment(&t, clip.sample_rate(), phonemes))
                .and_then(|l| {
                    if l.intervals.is_empty() {
                        Err(Error::Format("label file has no intervals".into()))
                    } else if l.end_time() > clip.duration() + 1e-9 {
                        Err(Error::Format(format!("labels end at {:.4} s, audio lasts {:.4} s", l.end_time(), clip.duration())))
                    } else {
                        Ok(())
                    }
                });
            if let Err(e) = checked {
                manifest.errors.push(issue(&lab_path, e.to_string()));
                continue;
            }
            if manifest.sample_rate == 0 {
                manifest.sample_rate = clip.sample_rate();
            } else if manifest.sample_rate != clip.sample_rate() {
                manifest.errors.push(issue(&root.join(rel("wav")), format!("sample rate {} differs from {}", clip.sample_rate(), manifest.sample_rate)));
                continue;
            }
            records.push(UtteranceRecord {
                audio: rel("wav"),
                labels: rel("lab"),
                video: frames.then(|| rel("frames")),
                id,
                features: None,
                content_hash: None,
            });
        }
        if !records.is_empty() {
            manifest.splits.insert(split, records);
        }
    }
    if manifest.is_empty() {
        manifest.warnings.push(format!("no utterances found under {}", root.display()));
    }
    manifest.validate()?;
    Ok(manifest)
}
