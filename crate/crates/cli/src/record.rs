use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use avsr::error::{Error, Result};

pub const RUN_RECORD_SCHEMA: u32 = 1;

/// Everything needed to reproduce a run: the command, its resolved config
/// text, the seed and inputs, plus where the outputs went and a summary of
/// the metrics. Contains no timestamps, so reruns produce the same record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    /// Hash of command, config, seed and inputs.
    pub run_id: String,
    pub command: String,
    pub config: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub metrics: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn new(command: &str, config: String, seed: u64, inputs: BTreeMap<String, String>) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(config.as_bytes());
        h.update([0]);
        h.update(seed.to_le_bytes());
        for (k, v) in &inputs {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        let run_id = hex::encode(&h.finalize()[..8]);
        RunRecord {
            schema: RUN_RECORD_SCHEMA,
            run_id,
            command: command.into(),
            config,
            seed,
            inputs,
            outputs: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunRecord = serde_json::from_str(text)?;
        if r.schema != RUN_RECORD_SCHEMA {
            return Err(Error::Format(format!("run record schema {} is not supported", r.schema)));
        }
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_depends_on_every_input() {
        let base = RunRecord::new("train", "a = 1\n".into(), 0, BTreeMap::new());
        assert_eq!(base.run_id, RunRecord::new("train", "a = 1\n".into(), 0, BTreeMap::new()).run_id);
        assert_ne!(base.run_id, RunRecord::new("train", "a = 2\n".into(), 0, BTreeMap::new()).run_id);
        assert_ne!(base.run_id, RunRecord::new("train", "a = 1\n".into(), 1, BTreeMap::new()).run_id);
        let inputs = BTreeMap::from([("corpus".to_string(), "x".to_string())]);
        assert_ne!(base.run_id, RunRecord::new("train", "a = 1\n".into(), 0, inputs).run_id);
    }

    #[test]
    fn json_round_trip() {
        let mut r = RunRecord::new("sweep", "x = 1\n".into(), 3, BTreeMap::new());
        r.metrics.insert("accuracy".into(), 81.5);
        r.outputs.insert("csv".into(), "out/a.csv".into());
        assert_eq!(RunRecord::from_json(&r.to_json().unwrap()).unwrap(), r);
        let bumped = r.to_json().unwrap().replace("\"schema\": 1", "\"schema\": 9");
        assert!(RunRecord::from_json(&bumped).is_err());
    }
}
