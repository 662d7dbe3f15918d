//! Cost model: multiply-accumulates per audio frame and per image, parameter
//! census and storage size, plus the instrumented forward pass that audits
//! the closed forms and the Pareto sweep engine.
//!
//! Convention: one MAC per weight application, biases included (one MAC
//! each), nonlinearities and pooling free, 1 MAC = 2 FLOP, 4 bytes per
//! parameter, 1 MB = 10⁶ bytes.

mod pareto;

use serde::{Deserialize, Serialize};

pub use pareto::{
    audit_frontier, dominates, pareto_frontier, pareto_sweep, point_label, ParetoPoint, SweepGrid, SweepOutcome,
    SweepResult,
};

use crate::error::{Error, Result};
use crate::layers::{BiLstmLayer, ConvOp, ConvStack, FcLayer, MacCounter};
use crate::models::{build_graph, Example, Fusion, ModelConfig, ModelGraph};
use crate::numerics::{Rng, Tensor};

pub const AUDIO_FRAMES_PER_SECOND: u64 = 100;
pub const IMAGES_PER_SECOND: u64 = 30;
pub const BYTES_PER_PARAM: u64 = 4;
pub const FLOPS_PER_MAC: u64 = 2;

pub const CONVENTION: &[&str] = &[
    "1 MAC per weight application; each bias counts as 1 MAC",
    "nonlinearities, softmax and max pooling cost 0 MACs",
    "1 MAC = 2 FLOP",
    "size = 4 bytes per parameter (32-bit weights); 1 MB = 1e6 bytes",
    "rates: 100 audio frames/s, 30 images/s",
    "fusion head and attention network run once per image",
];

/// `out·(in+1)`
pub fn fc_macs(input: usize, output: usize) -> u64 {
    (output * (input + 1)) as u64
}

/// `4·N_h·(in+N_h+1)` per frame.
pub fn lstm_sublayer_macs(input: usize, hidden: usize) -> u64 {
    (4 * hidden * (input + hidden + 1)) as u64
}

pub fn bilstm_macs(input: usize, hidden: usize) -> u64 {
    2 * lstm_sublayer_macs(input, hidden)
}

/// `outC·outH·outW·(inC·kH·kW+1)`
pub fn conv_macs(in_ch: usize, out_shape: [usize; 3], k: usize) -> u64 {
    (out_shape[0] * out_shape[1] * out_shape[2] * (in_ch * k * k + 1)) as u64
}

/// Closed-form parameter and per-frame MAC count of an acoustic DBLSTM with
/// 39 inputs, from `(N_L, N_h, classes)` alone. Parameters and MACs coincide
/// for recurrent and dense layers.
pub fn dblstm_closed_form(layers: usize, hidden: usize, classes: usize) -> u64 {
    (0..layers).map(|i| bilstm_macs(if i == 0 { 39 } else { hidden }, hidden)).sum::<u64>() + fc_macs(hidden, classes)
}

/// When a layer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rate {
    AudioFrame,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: String,
    pub rate: Rate,
    pub macs: u64,
    pub params: u64,
}

fn fc_cost(name: &str, l: &FcLayer, rate: Rate) -> LayerCost {
    let (i, o) = (l.input_size(), l.output_size());
    LayerCost { name: name.into(), kind: format!("fc {i}->{o}"), rate, macs: fc_macs(i, o), params: fc_macs(i, o) }
}

fn lstm_costs(prefix: &str, stack: &[BiLstmLayer], rate: Rate, out: &mut Vec<LayerCost>) {
    for (i, l) in stack.iter().enumerate() {
        let (inp, h) = (l.input_size(), l.hidden_size());
        let m = bilstm_macs(inp, h);
        out.push(LayerCost { name: format!("{prefix}lstm{i}"), kind: format!("bilstm {inp}->{h}"), rate, macs: m, params: m });
    }
}

fn conv_costs(prefix: &str, cnn: &ConvStack, out: &mut Vec<LayerCost>) -> Result<()> {
    let shapes = cnn.shapes()?;
    for (i, op) in cnn.ops.iter().enumerate() {
        let (inp, o) = (shapes[i], shapes[i + 1]);
        out.push(match op {
            ConvOp::Conv(c) => {
                let k = c.kernels.shape()[2];
                LayerCost {
                    name: format!("{prefix}conv{i}"),
                    kind: format!("conv {k}x{k} {}->{} out {}x{}", inp[0], o[0], o[1], o[2]),
                    rate: Rate::Image,
                    macs: conv_macs(inp[0], o, k),
                    params: (o[0] * (inp[0] * k * k + 1)) as u64,
                }
            }
            ConvOp::Pool(p) => LayerCost {
                name: format!("{prefix}pool{i}"),
                kind: format!("maxpool {}s{} out {}x{}", p.size, p.stride, o[1], o[2]),
                rate: Rate::Image,
                macs: 0,
                params: 0,
            },
        });
    }
    Ok(())
}

/// Per-layer closed-form costs of a graph.
pub fn layer_costs(graph: &ModelGraph) -> Result<Vec<LayerCost>> {
    let mut out = Vec::new();
    match graph {
        ModelGraph::Acoustic(m) => {
            lstm_costs("", &m.lstm, Rate::AudioFrame, &mut out);
            out.push(fc_cost("head", &m.head, Rate::AudioFrame));
        }
        ModelGraph::Visual(m) => visual_costs("", m, &mut out)?,
        ModelGraph::Fused(m) => {
            lstm_costs("acoustic.", &m.acoustic.lstm, Rate::AudioFrame, &mut out);
            out.push(fc_cost("acoustic.head", &m.acoustic.head, Rate::AudioFrame));
            visual_costs("visual.", &m.visual, &mut out)?;
            if let Fusion::Attention(b) = &m.fusion {
                for (i, l) in b.layers.iter().enumerate() {
                    out.push(fc_cost(&format!("attention.fc{i}"), l, Rate::Image));
                }
            }
            for (i, l) in m.head.iter().enumerate() {
                out.push(fc_cost(&format!("fusion{i}"), l, Rate::Image));
            }
        }
    }
    Ok(out)
}

fn visual_costs(prefix: &str, m: &crate::models::VisualModel, out: &mut Vec<LayerCost>) -> Result<()> {
    conv_costs(&format!("{prefix}cnn."), &m.cnn, out)?;
    if let Some(b) = &m.bottleneck {
        out.push(fc_cost(&format!("{prefix}bottleneck"), b, Rate::Image));
    }
    lstm_costs(prefix, &m.lstm, Rate::Image, out);
    out.push(fc_cost(&format!("{prefix}head"), &m.head, Rate::Image));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub macs_per_audio_frame: u64,
    pub macs_per_image: u64,
    pub flops_per_audio_frame: u64,
    pub flops_per_image: u64,
    pub param_count: u64,
    pub size_bytes: u64,
    /// At 100 audio frames/s and 30 images/s.
    pub flops_per_second: u64,
    pub layers: Vec<LayerCost>,
}

impl ResourceReport {
    pub fn from_layers(layers: Vec<LayerCost>) -> Self {
        let sum = |r: Rate| layers.iter().filter(|l| l.rate == r).map(|l| l.macs).sum::<u64>();
        let (ma, mi) = (sum(Rate::AudioFrame), sum(Rate::Image));
        let params: u64 = layers.iter().map(|l| l.params).sum();
        ResourceReport {
            macs_per_audio_frame: ma,
            macs_per_image: mi,
            flops_per_audio_frame: FLOPS_PER_MAC * ma,
            flops_per_image: FLOPS_PER_MAC * mi,
            param_count: params,
            size_bytes: BYTES_PER_PARAM * params,
            flops_per_second: FLOPS_PER_MAC * (AUDIO_FRAMES_PER_SECOND * ma + IMAGES_PER_SECOND * mi),
            layers,
        }
    }

    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<28} {:<34} {:>6} {:>14} {:>12}\n", "layer", "kind", "rate", "MACs", "params");
        for l in &self.layers {
            let rate = match l.rate {
                Rate::AudioFrame => "frame",
                Rate::Image => "image",
            };
            s += &format!("{:<28} {:<34} {:>6} {:>14} {:>12}\n", l.name, l.kind, rate, l.macs, l.params);
        }
        s += &format!(
            "\nMACs/audio frame {}  FLOP/audio frame {}\nMACs/image {}  FLOP/image {}\nparameters {}  size {} bytes ({:.3} MB)\nFLOP/s {} ({:.3e})\n",
            self.macs_per_audio_frame,
            self.flops_per_audio_frame,
            self.macs_per_image,
            self.flops_per_image,
            self.param_count,
            self.size_bytes,
            self.size_bytes as f64 / 1e6,
            self.flops_per_second,
            self.flops_per_second as f64
        );
        s
    }
}

pub fn count_resources(graph: &ModelGraph) -> Result<ResourceReport> {
    Ok(ResourceReport::from_layers(layer_costs(graph)?))
}

/// Builds the graph a config describes and counts it.
pub fn count_config(config: &ModelConfig) -> Result<ResourceReport> {
    count_resources(&build_graph(config, &mut Rng::new(0))?)
}

/// Report for a single dense layer.
pub fn count_fc(input: usize, output: usize) -> ResourceReport {
    let m = fc_macs(input, output);
    ResourceReport::from_layers(vec![LayerCost {
        name: "fc".into(),
        kind: format!("fc {input}->{output}"),
        rate: Rate::AudioFrame,
        macs: m,
        params: m,
    }])
}

/// Runs the real forward pass with a counting sink. Returns the output logits
/// and the number of multiply-accumulates executed.
pub fn instrumented_forward(graph: &ModelGraph, input: &Example) -> Result<(Tensor, u64)> {
    let counter = MacCounter::new();
    let out = match graph {
        ModelGraph::Acoustic(m) => m.forward_counted(input.features()?, &counter)?.0,
        ModelGraph::Visual(m) => m.forward_counted(&input.images, &counter)?.0,
        ModelGraph::Fused(m) => m.forward_counted(input.features()?, &input.images, &input.midpoints, &counter)?.0,
    };
    Ok((out, counter.count()))
}

/// Expected instrumented count for an input with `frames` audio frames and
/// `images` images.
pub fn expected_macs(report: &ResourceReport, frames: usize, images: usize) -> u64 {
    report.macs_per_audio_frame * frames as u64 + report.macs_per_image * images as u64
}

/// A published figure next to this crate's number for the same quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub quantity: String,
    pub published: f64,
    pub ours: f64,
    pub ratio: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub model: String,
    pub rows: Vec<Discrepancy>,
    pub convention: Vec<String>,
}

/// Published acoustic-only figures of the comparison table (N_L = 2,
/// N_h = 256, 39 classes) against this crate's census.
pub const PUBLISHED_ACOUSTIC_FLOP_PER_FRAME: f64 = 1.49e7;
pub const PUBLISHED_ACOUSTIC_SIZE_MB: f64 = 44.5;

pub fn acoustic_discrepancy_report() -> Result<DiscrepancyReport> {
    let r = count_config(&ModelConfig::acoustic(2, 256, 39))?;
    let row = |q: &str, published: f64, ours: f64, unit: &str| Discrepancy {
        quantity: q.into(),
        published,
        ours,
        ratio: published / ours,
        unit: unit.into(),
    };
    Ok(DiscrepancyReport {
        model: "acoustic DBLSTM N_L=2 N_h=256 classes=39".into(),
        rows: vec![
            row("FLOP per audio frame", PUBLISHED_ACOUSTIC_FLOP_PER_FRAME, r.flops_per_audio_frame as f64, "FLOP"),
            row("model size", PUBLISHED_ACOUSTIC_SIZE_MB, r.size_bytes as f64 / 1e6, "MB"),
            row(
                "FLOP per second",
                AUDIO_FRAMES_PER_SECOND as f64 * PUBLISHED_ACOUSTIC_FLOP_PER_FRAME,
                r.flops_per_second as f64,
                "FLOP/s",
            ),
        ],
        convention: CONVENTION.iter().map(|s| s.to_string()).collect(),
    })
}

impl DiscrepancyReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("{}\n{:<22} {:>14} {:>14} {:>8}\n", self.model, "quantity", "published", "ours", "ratio");
        for r in &self.rows {
            s += &format!("{:<22} {:>14.4e} {:>14.4e} {:>8.3}  {}\n", r.quantity, r.published, r.ours, r.ratio, r.unit);
        }
        s += "convention:\n";
        for c in &self.convention {
            s += &format!("  - {c}\n");
        }
        s
    }
}

pub(crate) fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

#[cfg(test)]
mod tests;
