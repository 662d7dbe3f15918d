//! Phoneme inventory, forced-alignment label files, midpoint decoding,
//! phoneme-to-viseme mapping and accuracy.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::error::{AlignmentError, Error, Result};

const PHONEMES_ASSET: &str = include_str!("../assets/phonemes.txt");
const VISEMES_ASSET: &str = include_str!("../assets/visemes.txt");
const ASSET_MANIFEST: &str = include_str!("../assets/MANIFEST.sha256");

pub const PHONEME_COUNT: usize = 39;

fn verify_asset(name: &str, contents: &str) -> Result<()> {
    let expected = ASSET_MANIFEST
        .lines()
        .find_map(|l| {
            let mut it = l.split_whitespace();
            let (sum, file) = (it.next()?, it.next()?);
            (file == name).then_some(sum)
        })
        .ok_or_else(|| Error::Asset(format!("{name} missing from asset manifest")))?;
    let actual = hex::encode(Sha256::digest(contents.as_bytes()));
    if actual != expected {
        return Err(Error::Asset(format!("{name}: checksum {actual} does not match manifest")));
    }
    Ok(())
}

fn asset_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Ordered phoneme symbols with stable indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSet {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeSet {
    pub fn from_symbols<I: IntoIterator<Item = S>, S: Into<String>>(symbols: I) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        let mut index = HashMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Asset(format!("duplicate phoneme `{s}`")));
            }
        }
        Ok(PhonemeSet { symbols, index })
    }

    /// The bundled 39-symbol set.
    pub fn standard() -> &'static PhonemeSet {
        static SET: OnceLock<PhonemeSet> = OnceLock::new();
        SET.get_or_init(|| {
            verify_asset("phonemes.txt", PHONEMES_ASSET).expect("bundled phoneme asset");
            let set = PhonemeSet::from_symbols(asset_lines(PHONEMES_ASSET)).expect("bundled phoneme asset");
            assert_eq!(set.len(), PHONEME_COUNT, "bundled phoneme asset must hold 39 symbols");
            set
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub phoneme: usize,
}

impl Interval {
    pub fn midpoint(&self) -> f64 {
        (self.start + self.end) / 2.0
    }
}

/// Sorted, non-overlapping phoneme intervals in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedLabels {
    pub intervals: Vec<Interval>,
}

impl AlignedLabels {
    pub fn end_time(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.end)
    }

    pub fn classes(&self) -> Vec<usize> {
        self.intervals.iter().map(|i| i.phoneme).collect()
    }
}

/// Parses `start_sample end_sample phoneme` lines (TIMIT style). Blank
/// lines are skipped.
pub fn parse_alignment(text: &str, sample_rate: u32, phonemes: &PhonemeSet) -> Result<AlignedLabels> {
    if sample_rate == 0 {
        return Err(Error::Parameter("sample rate must be positive".into()));
    }
    let sr = sample_rate as f64;
    let mut intervals: Vec<Interval> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fail = |kind| Error::Alignment { line, kind };
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let [s, e, p] = fields[..] else {
            return Err(fail(AlignmentError::Malformed(format!("expected 3 fields, got {}", fields.len()))));
        };
        let parse = |v: &str| v.parse::<u64>().map_err(|_| fail(AlignmentError::Malformed(format!("`{v}` is not a sample index"))));
        let (start, end) = (parse(s)?, parse(e)?);
        let phoneme = phonemes.index_of(p).ok_or_else(|| fail(AlignmentError::UnknownPhoneme(p.to_string())))?;
        if start >= end {
            return Err(fail(AlignmentError::Empty));
        }
        let interval = Interval { start: start as f64 / sr, end: end as f64 / sr, phoneme };
        if let Some(prev) = intervals.last() {
            if interval.start < prev.start {
                return Err(fail(AlignmentError::OutOfOrder));
            }
            if interval.start < prev.end {
                return Err(fail(AlignmentError::Overlap));
            }
        }
        intervals.push(interval);
    }
    Ok(AlignedLabels { intervals })
}

pub fn serialize_alignment(labels: &AlignedLabels, sample_rate: u32, phonemes: &PhonemeSet) -> Result<String> {
    let sr = sample_rate as f64;
    let mut out = String::new();
    for iv in &labels.intervals {
        let sym = phonemes.symbol(iv.phoneme).ok_or_else(|| Error::UnknownSymbol(format!("class {}", iv.phoneme)))?;
        let _ = writeln!(out, "{} {} {sym}", (iv.start * sr).round() as u64, (iv.end * sr).round() as u64);
    }
    Ok(out)
}

// Midpoints computed in floating point can land a hair below an exact frame
// boundary; the slack keeps those on the boundary frame.
const BOUNDARY_SLACK: f64 = 1e-9;

/// `(frame_index, class)` for each interval, with
/// `frame_index = floor(midpoint / hop)`.
pub fn midpoint_frames(labels: &AlignedLabels, hop: f64) -> Vec<(usize, usize)> {
    labels
        .intervals
        .iter()
        .map(|iv| (((iv.midpoint() / hop) + BOUNDARY_SLACK).floor().max(0.0) as usize, iv.phoneme))
        .collect()
}

/// Midpoint frames for a sequence of `frames` frames covering `duration`
/// seconds. Labels running past the clip are rejected; midpoints in the
/// final partial hop are clamped onto the last frame.
pub fn midpoint_frames_checked(labels: &AlignedLabels, hop: f64, frames: usize, duration: f64) -> Result<Vec<(usize, usize)>> {
    if hop <= 0.0 {
        return Err(Error::Parameter("hop must be positive".into()));
    }
    if frames == 0 {
        return Err(Error::Parameter("no frames to decode".into()));
    }
    if labels.end_time() > duration + BOUNDARY_SLACK {
        return Err(Error::Parameter(format!(
            "labels end at {:.4} s but the clip lasts {duration:.4} s",
            labels.end_time()
        )));
    }
    Ok(midpoint_frames(labels, hop).into_iter().map(|(f, c)| (f.min(frames - 1), c)).collect())
}

/// Total map from phoneme classes onto viseme classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisemeMap {
    visemes: Vec<String>,
    /// viseme index per phoneme index
    table: Vec<usize>,
}

impl VisemeMap {
    /// Parses `phoneme viseme` lines and checks totality over `phonemes`.
    pub fn parse(text: &str, phonemes: &PhonemeSet) -> Result<Self> {
        let mut visemes: Vec<String> = Vec::new();
        let mut table = vec![usize::MAX; phonemes.len()];
        for line in asset_lines(text) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [p, v] = fields[..] else {
                return Err(Error::Asset(format!("bad viseme line `{line}`")));
            };
            let pi = phonemes.index_of(p).ok_or_else(|| Error::UnknownSymbol(p.to_string()))?;
            if table[pi] != usize::MAX {
                return Err(Error::Asset(format!("phoneme `{p}` mapped twice")));
            }
            let vi = match visemes.iter().position(|x| x == v) {
                Some(i) => i,
                None => {
                    visemes.push(v.to_string());
                    visemes.len() - 1
                }
            };
            table[pi] = vi;
        }
        if let Some(missing) = table.iter().position(|&v| v == usize::MAX) {
            return Err(Error::Asset(format!("phoneme `{}` has no viseme", phonemes.symbols()[missing])));
        }
        if visemes.len() >= phonemes.len() {
            return Err(Error::Asset("a viseme map must merge phonemes".into()));
        }
        Ok(VisemeMap { visemes, table })
    }

    pub fn standard() -> &'static VisemeMap {
        static MAP: OnceLock<VisemeMap> = OnceLock::new();
        MAP.get_or_init(|| {
            verify_asset("visemes.txt", VISEMES_ASSET).expect("bundled viseme asset");
            VisemeMap::parse(VISEMES_ASSET, PhonemeSet::standard()).expect("bundled viseme asset")
        })
    }

    pub fn viseme_count(&self) -> usize {
        self.visemes.len()
    }

    pub fn viseme_symbol(&self, v: usize) -> Option<&str> {
        self.visemes.get(v).map(String::as_str)
    }

    pub fn map(&self, phoneme: usize) -> Result<usize> {
        self.table.get(phoneme).copied().ok_or_else(|| Error::UnknownSymbol(format!("class {phoneme}")))
    }
}

pub fn to_visemes(classes: &[usize], map: &VisemeMap) -> Result<Vec<usize>> {
    classes.iter().map(|&c| map.map(c)).collect()
}

/// Percentage of positions where prediction and reference agree.
pub fn frame_accuracy(preds: &[usize], golds: &[usize]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(Error::Dimension(format!("{} predictions for {} references", preds.len(), golds.len())));
    }
    if preds.is_empty() {
        return Err(Error::Parameter("accuracy of an empty sequence".into()));
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}
