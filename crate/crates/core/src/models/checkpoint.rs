//! Binary checkpoint container.
//!
//! ```text
//! "AVCK"  u32 version
//! u32 n   config text (key = value lines)
//! u32 n   metadata JSON
//! u32 count
//!   per tensor: u32 n name, u32 rank, u64 dims[rank], f64 data (all little-endian)
//! sha256 of everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_graph, ModelConfig, ModelGraph};
use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::numerics::{Rng, RngState, Tensor};
use crate::signal::NormStats;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AVCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;
const MAX_RANK: usize = 8;

/// Summary of one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub epochs: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    /// Loss of a predictor that always outputs the training-set class prior.
    pub baseline_loss: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_loss_history: Vec<f64>,
    pub rng_state: Option<RngState>,
    #[serde(default)]
    pub stages: Vec<StageRecord>,
    #[serde(default)]
    pub norm_stats: Option<NormStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub graph: ModelGraph,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, graph: ModelGraph, meta: CheckpointMeta) -> Self {
        Checkpoint { config, graph, meta }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_bytes(&mut out, ckpt.config.to_kv_string().as_bytes());
    put_bytes(&mut out, &serde_json::to_vec(&ckpt.meta)?);
    let params = ckpt.graph.named_params();
    put_u32(&mut out, params.len() as u32);
    for (name, t) in params {
        put_bytes(&mut out, name.as_bytes());
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn text(&mut self) -> Result<&'a str> {
        std::str::from_utf8(self.bytes()?).map_err(|_| corrupt("text field is not UTF-8"))
    }
}

/// Parses and verifies a checkpoint. When `expected` is given the stored
/// config must equal it.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    if bytes.len() < 8 + DIGEST_LEN {
        return Err(corrupt("file too short"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let config = ModelConfig::parse(r.text()?).map_err(|e| corrupt(format!("stored config: {e}")))?;
    let meta: CheckpointMeta = serde_json::from_slice(r.bytes()?).map_err(|e| corrupt(format!("metadata: {e}")))?;
    if let Some(exp) = expected {
        if exp != &config {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint holds\n{}but the requested config is\n{}",
                config.to_kv_string(),
                exp.to_kv_string()
            )));
        }
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.text()?.to_string();
        let rank = r.u32()? as usize;
        if rank > MAX_RANK {
            return Err(corrupt(format!("tensor `{name}` has rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt("tensor size overflows"))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| corrupt("tensor size overflows"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after tensors"));
    }
    let mut graph = build_graph(&config, &mut Rng::new(0)).map_err(|e| corrupt(format!("stored config: {e}")))?;
    assign_params(&mut graph, tensors)?;
    Ok(Checkpoint { config, graph, meta })
}

/// Copies named tensors into a graph; names and shapes must match exactly.
pub(crate) fn assign_params(graph: &mut ModelGraph, tensors: Vec<(String, Tensor)>) -> Result<()> {
    let names: Vec<(String, Vec<usize>)> = graph.named_params().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    if names.len() != tensors.len() {
        return Err(Error::ConfigMismatch(format!("graph has {} tensors, checkpoint has {}", names.len(), tensors.len())));
    }
    for ((n, shape), (tn, t)) in names.iter().zip(&tensors) {
        if n != tn || shape.as_slice() != t.shape() {
            return Err(Error::ConfigMismatch(format!("tensor `{tn}` {:?} does not fit `{n}` {shape:?}", t.shape())));
        }
    }
    let mut it = tensors.into_iter();
    graph.visit_params_mut("", &mut |_, p| {
        let (_, t) = it.next().unwrap();
        *p = t;
    });
    Ok(())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingPrerequisite(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected)
}
