use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{count_config, csv_err};
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::models::ModelConfig;

/// One completed configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub label: String,
    pub modality: String,
    pub layers: usize,
    pub hidden: usize,
    /// Percent.
    pub accuracy: f64,
    /// FLOP per second at the standard frame rates.
    pub flops: u64,
    pub size_bytes: u64,
}

/// `a` dominates `b`: at least as accurate and as cheap, strictly better in one.
pub fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.accuracy >= b.accuracy && a.flops <= b.flops && (a.accuracy > b.accuracy || a.flops < b.flops)
}

/// Indices of the non-dominated points under (maximize accuracy, minimize
/// FLOP), in ascending FLOP order. Points with non-finite accuracy are never
/// on the frontier. O(n log n).
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].accuracy.is_finite()).collect();
    idx.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.flops.cmp(&pb.flops).then(pb.accuracy.partial_cmp(&pa.accuracy).unwrap_or(Ordering::Equal)).then(a.cmp(&b))
    });
    let mut frontier = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut i = 0;
    while i < idx.len() {
        let flops = points[idx[i]].flops;
        let group_best = points[idx[i]].accuracy;
        let mut j = i;
        while j < idx.len() && points[idx[j]].flops == flops {
            if group_best > best && points[idx[j]].accuracy == group_best {
                frontier.push(idx[j]);
            }
            j += 1;
        }
        best = best.max(group_best);
        i = j;
    }
    frontier
}

/// Quadratic check that `frontier` is exactly the set of non-dominated points
/// with finite accuracy.
pub fn audit_frontier(points: &[ParetoPoint], frontier: &[usize]) -> std::result::Result<(), String> {
    let valid = |p: &ParetoPoint| p.accuracy.is_finite();
    for (i, p) in points.iter().enumerate() {
        let dominated = points.iter().any(|q| valid(q) && dominates(q, p));
        let expected = valid(p) && !dominated;
        if expected != frontier.contains(&i) {
            return Err(if expected {
                format!("non-dominated point {} ({}) missing from the frontier", i, p.label)
            } else {
                format!("point {} ({}) is on the frontier but dominated", i, p.label)
            });
        }
    }
    Ok(())
}

/// Cartesian grid over LSTM depth and width around a base config.
///
/// ```text
/// include base.cfg      # or base.* keys
/// grid.layers = 1,2
/// grid.hidden = 8,32
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub base: ModelConfig,
    pub layers: Vec<usize>,
    pub hidden: Vec<usize>,
}

impl SweepGrid {
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let mut base_doc = doc.section("base");
        for e in doc.entries() {
            if !e.key.starts_with("base.") && !e.key.starts_with("grid.") {
                base_doc.set(&e.key, e.value.clone());
            }
        }
        doc.section("grid").reject_unknown(&["layers", "hidden"], &[])?;
        let base = ModelConfig::from_kv(&base_doc)?;
        if base.modality.is_fused() {
            return Err(Error::Config("sweeps vary a single acoustic or visual network".into()));
        }
        let layers = doc.parse_list("grid.layers")?.unwrap_or_else(|| vec![base.layers]);
        let hidden = doc.parse_list("grid.hidden")?.unwrap_or_else(|| vec![base.hidden]);
        if layers.is_empty() || hidden.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        let grid = SweepGrid { base, layers, hidden };
        for c in grid.configs() {
            c.validate()?;
        }
        Ok(grid)
    }

    pub fn configs(&self) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &l in &self.layers {
            for &h in &self.hidden {
                out.push(ModelConfig { layers: l, hidden: h, ..self.base.clone() });
            }
        }
        out
    }
}

pub fn point_label(c: &ModelConfig) -> String {
    format!("{}-L{}-H{}", c.modality, c.layers, c.hidden)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub point: ParetoPoint,
    /// Runner error, if the point failed; its accuracy is then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub outcomes: Vec<SweepOutcome>,
    pub frontier: Vec<usize>,
}

impl SweepResult {
    pub fn points(&self) -> Vec<ParetoPoint> {
        self.outcomes.iter().map(|o| o.point.clone()).collect()
    }

    pub fn points_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "modality", "layers", "hidden", "accuracy", "flops", "size_bytes", "frontier", "error"])
            .map_err(csv_err)?;
        for (i, o) in self.outcomes.iter().enumerate() {
            let p = &o.point;
            w.write_record([
                p.label.clone(),
                p.modality.clone(),
                p.layers.to_string(),
                p.hidden.to_string(),
                p.accuracy.to_string(),
                p.flops.to_string(),
                p.size_bytes.to_string(),
                self.frontier.contains(&i).to_string(),
                o.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
    }

    pub fn frontier_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for &i in &self.frontier {
            w.serialize(&self.outcomes[i].point).map_err(csv_err)?;
        }
        if self.frontier.is_empty() {
            w.write_record(["label", "modality", "layers", "hidden", "accuracy", "flops", "size_bytes"]).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
    }
}

/// Trains and evaluates every config with `runner` (returning accuracy in
/// percent), attaches its cost and extracts the frontier. A failing point is
/// recorded and the sweep continues.
pub fn pareto_sweep(
    configs: &[ModelConfig],
    runner: &mut dyn FnMut(&ModelConfig) -> Result<f64>,
) -> Result<SweepResult> {
    if configs.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut outcomes = Vec::with_capacity(configs.len());
    for c in configs {
        let report = count_config(c)?;
        let (accuracy, error) = match runner(c) {
            Ok(a) => (a, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        outcomes.push(SweepOutcome {
            point: ParetoPoint {
                label: point_label(c),
                modality: c.modality.to_string(),
                layers: c.layers,
                hidden: c.hidden,
                accuracy,
                flops: report.flops_per_second,
                size_bytes: report.size_bytes,
            },
            error,
        });
    }
    let points: Vec<ParetoPoint> = outcomes.iter().map(|o| o.point.clone()).collect();
    let frontier = pareto_frontier(&points);
    Ok(SweepResult { outcomes, frontier })
}
