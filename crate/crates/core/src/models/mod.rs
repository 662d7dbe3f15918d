//! The three model families, their shared training interface and the
//! checkpoint format.

mod acoustic;
mod checkpoint;
mod config;
mod fused;
mod visual;

pub use acoustic::{AcousticCache, AcousticModel};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, StageRecord,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{
    conv_stack_string, parse_conv_stack, ConvSpec, FusionInput, Modality, ModelConfig, DEFAULT_CONV_STACK, IMAGE_SIZE,
};
pub use fused::{build_audiovisual, FusedCache, FusedModel, Fusion};
pub use visual::{VisualCache, VisualModel};

use crate::error::{Error, Result};
use crate::layers::{BiLstmCache, BiLstmLayer, MacSink, Parameterized};
use crate::numerics::{Rng, Tensor};

/// One utterance prepared for a model. Fields a model family does not use
/// may be left empty.
#[derive(Debug, Clone, Default)]
pub struct Example {
    /// Normalized acoustic features, `L × 39`.
    pub features: Option<Tensor>,
    /// Class of every audio frame (length `L`).
    pub frame_labels: Vec<usize>,
    /// One `[1×H×W]` image per label interval, taken at the interval midpoint.
    pub images: Vec<Tensor>,
    /// Audio frame index of each interval midpoint.
    pub midpoints: Vec<usize>,
    /// Class of each label interval.
    pub labels: Vec<usize>,
}

impl Example {
    pub(crate) fn features(&self) -> Result<&Tensor> {
        self.features
            .as_ref()
            .ok_or_else(|| Error::Dimension("example has no acoustic features".into()))
    }
}

/// Loss, midpoint predictions and (for attention models) stream weights.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub predictions: Vec<usize>,
    /// `M × 2` rows of `(w_a, w_v)`.
    pub weights: Option<Tensor>,
}

pub trait Trainable: Parameterized + Clone {
    /// Mean cross-entropy on the example; gradients are added into `grads`.
    fn loss_and_grads(&self, ex: &Example, grads: &mut Self) -> Result<f64>;

    fn evaluate(&self, ex: &Example) -> Result<Evaluation>;

    /// Class targets the loss is computed against.
    fn targets<'e>(&self, ex: &'e Example) -> &'e [usize] {
        &ex.labels
    }

    fn loss(&self, ex: &Example) -> Result<f64> {
        Ok(self.evaluate(ex)?.loss)
    }

    fn predict(&self, ex: &Example) -> Result<Vec<usize>> {
        Ok(self.evaluate(ex)?.predictions)
    }
}

/// Argmax of each row.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows()).map(|r| logits.argmax_row(r)).collect()
}

fn build_lstm_stack(input: usize, layers: usize, hidden: usize, rng: &mut Rng) -> Vec<BiLstmLayer> {
    (0..layers)
        .map(|i| BiLstmLayer::new(if i == 0 { input } else { hidden }, hidden, rng))
        .collect()
}

fn lstm_stack_forward<S: MacSink>(stack: &[BiLstmLayer], xs: &Tensor, sink: &S) -> Result<(Tensor, Vec<BiLstmCache>)> {
    let mut x = xs.clone();
    let mut caches = Vec::with_capacity(stack.len());
    for l in stack {
        let (y, c) = l.forward_counted(&x, sink)?;
        caches.push(c);
        x = y;
    }
    Ok((x, caches))
}

fn lstm_stack_backward(
    stack: &[BiLstmLayer],
    caches: &[BiLstmCache],
    dout: Tensor,
    grads: &mut [BiLstmLayer],
) -> Result<Tensor> {
    let mut d = dout;
    for (i, l) in stack.iter().enumerate().rev() {
        d = l.backward(&caches[i], &d, &mut grads[i])?;
    }
    Ok(d)
}

/// A built model of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelGraph {
    Acoustic(AcousticModel),
    Visual(VisualModel),
    Fused(FusedModel),
}

pub fn build_acoustic(config: &ModelConfig, rng: &mut Rng) -> Result<AcousticModel> {
    if config.modality != Modality::Acoustic {
        return Err(Error::Config(format!("expected an acoustic config, got {}", config.modality)));
    }
    config.validate()?;
    Ok(AcousticModel::new(config, rng))
}

pub fn build_visual(config: &ModelConfig, rng: &mut Rng) -> Result<VisualModel> {
    if config.modality != Modality::Visual {
        return Err(Error::Config(format!("expected a visual config, got {}", config.modality)));
    }
    config.validate()?;
    VisualModel::new(config, rng)
}

/// Randomly initialized graph for any config, fused models included.
pub fn build_graph(config: &ModelConfig, rng: &mut Rng) -> Result<ModelGraph> {
    config.validate()?;
    Ok(match config.modality {
        Modality::Acoustic => ModelGraph::Acoustic(build_acoustic(config, rng)?),
        Modality::Visual => ModelGraph::Visual(build_visual(config, rng)?),
        Modality::AudioVisual | Modality::AudioVisualAttention => {
            let (a, v) = (config.acoustic.as_ref().unwrap(), config.visual.as_ref().unwrap());
            let acoustic = build_acoustic(a, rng)?;
            let visual = build_visual(v, rng)?;
            ModelGraph::Fused(FusedModel::new(config, acoustic, visual, rng)?)
        }
    })
}

impl ModelGraph {
    pub fn modality(&self) -> Modality {
        match self {
            ModelGraph::Acoustic(_) => Modality::Acoustic,
            ModelGraph::Visual(_) => Modality::Visual,
            ModelGraph::Fused(f) => {
                if matches!(f.fusion, Fusion::Attention(_)) {
                    Modality::AudioVisualAttention
                } else {
                    Modality::AudioVisual
                }
            }
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelGraph::Acoustic(m) => m.classes(),
            ModelGraph::Visual(m) => m.classes(),
            ModelGraph::Fused(m) => m.classes(),
        }
    }
}

impl Parameterized for ModelGraph {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        match self {
            ModelGraph::Acoustic(m) => m.visit_params(prefix, f),
            ModelGraph::Visual(m) => m.visit_params(prefix, f),
            ModelGraph::Fused(m) => m.visit_params(prefix, f),
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        match self {
            ModelGraph::Acoustic(m) => m.visit_params_mut(prefix, f),
            ModelGraph::Visual(m) => m.visit_params_mut(prefix, f),
            ModelGraph::Fused(m) => m.visit_params_mut(prefix, f),
        }
    }
}

impl Trainable for ModelGraph {
    fn loss_and_grads(&self, ex: &Example, grads: &mut Self) -> Result<f64> {
        match (self, grads) {
            (ModelGraph::Acoustic(m), ModelGraph::Acoustic(g)) => m.loss_and_grads(ex, g),
            (ModelGraph::Visual(m), ModelGraph::Visual(g)) => m.loss_and_grads(ex, g),
            (ModelGraph::Fused(m), ModelGraph::Fused(g)) => m.loss_and_grads(ex, g),
            _ => Err(Error::Dimension("gradient graph has a different family".into())),
        }
    }

    fn targets<'e>(&self, ex: &'e Example) -> &'e [usize] {
        match self {
            ModelGraph::Acoustic(m) => m.targets(ex),
            _ => &ex.labels,
        }
    }

    fn evaluate(&self, ex: &Example) -> Result<Evaluation> {
        match self {
            ModelGraph::Acoustic(m) => m.evaluate(ex),
            ModelGraph::Visual(m) => m.evaluate(ex),
            ModelGraph::Fused(m) => m.evaluate(ex),
        }
    }
}

#[cfg(test)]
mod tests;
