use super::{argmax_rows, build_lstm_stack, lstm_stack_backward, lstm_stack_forward, Evaluation, Example, ModelConfig, Trainable};
use crate::error::{Error, Result};
use crate::layers::{join, softmax_rows, softmax_xent, Activation, BiLstmCache, BiLstmLayer, FcCache, FcLayer, MacSink, NoCount, Parameterized};
use crate::numerics::{Rng, Tensor};
use crate::signal::FEATURE_DIM;

/// Stack of bidirectional LSTM layers over MFCC frames with a per-frame
/// classifier. The head emits logits; softmax is applied by the loss and by
/// [`AcousticModel::probabilities`].
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub lstm: Vec<BiLstmLayer>,
    pub head: FcLayer,
}

#[derive(Debug, Clone)]
pub struct AcousticCache {
    lstm: Vec<BiLstmCache>,
    head: FcCache,
}

impl AcousticModel {
    pub(crate) fn new(config: &ModelConfig, rng: &mut Rng) -> Self {
        let lstm = build_lstm_stack(FEATURE_DIM, config.layers, config.hidden, rng);
        let head = FcLayer::new(config.hidden, config.classes, Activation::Identity, rng);
        AcousticModel { lstm, head }
    }

    pub fn classes(&self) -> usize {
        self.head.output_size()
    }

    pub fn forward_counted<S: MacSink>(&self, features: &Tensor, sink: &S) -> Result<(Tensor, AcousticCache)> {
        if features.rank() != 2 || features.rows() == 0 || features.cols() != FEATURE_DIM {
            return Err(Error::Dimension(format!("acoustic model expects [L×{FEATURE_DIM}], got {:?}", features.shape())));
        }
        let (h, lstm) = lstm_stack_forward(&self.lstm, features, sink)?;
        let (logits, head) = self.head.forward_counted(&h, sink)?;
        Ok((logits, AcousticCache { lstm, head }))
    }

    /// Pre-softmax outputs, one row per frame.
    pub fn logits(&self, features: &Tensor) -> Result<Tensor> {
        Ok(self.forward_counted(features, &NoCount)?.0)
    }

    pub fn probabilities(&self, features: &Tensor) -> Result<Tensor> {
        Ok(softmax_rows(&self.logits(features)?))
    }

    pub fn backward(&self, cache: &AcousticCache, dlogits: &Tensor, grads: &mut AcousticModel) -> Result<()> {
        let dh = self.head.backward(&cache.head, dlogits, &mut grads.head)?;
        lstm_stack_backward(&self.lstm, &cache.lstm, dh, &mut grads.lstm)?;
        Ok(())
    }

    fn targets(ex: &Example, frames: usize) -> Result<&[usize]> {
        if ex.frame_labels.len() != frames {
            return Err(Error::Dimension(format!("{} frame labels for {frames} frames", ex.frame_labels.len())));
        }
        Ok(&ex.frame_labels)
    }
}

impl Trainable for AcousticModel {
    fn targets<'e>(&self, ex: &'e Example) -> &'e [usize] {
        &ex.frame_labels
    }

    fn loss_and_grads(&self, ex: &Example, grads: &mut Self) -> Result<f64> {
        let feats = ex.features()?;
        let (logits, cache) = self.forward_counted(feats, &NoCount)?;
        let (loss, dlogits) = softmax_xent(&logits, Self::targets(ex, feats.rows())?)?;
        self.backward(&cache, &dlogits, grads)?;
        Ok(loss)
    }

    fn evaluate(&self, ex: &Example) -> Result<Evaluation> {
        let feats = ex.features()?;
        let logits = self.logits(feats)?;
        let (loss, _) = softmax_xent(&logits, Self::targets(ex, feats.rows())?)?;
        let all = argmax_rows(&logits);
        let predictions = ex
            .midpoints
            .iter()
            .map(|&m| all.get(m).copied().ok_or_else(|| Error::Dimension(format!("midpoint frame {m} beyond {} frames", all.len()))))
            .collect::<Result<_>>()?;
        Ok(Evaluation { loss, predictions, weights: None })
    }
}

impl Parameterized for AcousticModel {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, l) in self.lstm.iter().enumerate() {
            l.visit_params(&join(prefix, &format!("lstm{i}")), f);
        }
        self.head.visit_params(&join(prefix, "head"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, l) in self.lstm.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &format!("lstm{i}")), f);
        }
        self.head.visit_params_mut(&join(prefix, "head"), f);
    }
}
