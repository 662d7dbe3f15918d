use super::{
    argmax_rows, build_lstm_stack, lstm_stack_backward, lstm_stack_forward, ConvSpec, Evaluation, Example, ModelConfig,
    Trainable,
};
use crate::error::{Error, Result};
use crate::layers::{
    join, softmax_rows, softmax_xent, Activation, BiLstmCache, BiLstmLayer, ConvLayer, ConvOp, ConvStack, ConvStackCache,
    FcCache, FcLayer, MacSink, NoCount, Parameterized, PoolLayer,
};
use crate::numerics::{Rng, Tensor};

/// Per-image convolution stack, optional softmax bottleneck, bidirectional
/// LSTM stack over the image sequence and a per-image classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualModel {
    pub cnn: ConvStack,
    pub bottleneck: Option<FcLayer>,
    pub lstm: Vec<BiLstmLayer>,
    pub head: FcLayer,
}

#[derive(Debug, Clone)]
pub struct VisualCache {
    cnn: Vec<ConvStackCache>,
    bottleneck: Option<FcCache>,
    lstm: Vec<BiLstmCache>,
    head: FcCache,
}

pub(crate) fn build_conv_stack(specs: &[ConvSpec], image_size: usize, rng: &mut Rng) -> Result<ConvStack> {
    let mut channels = 1;
    let ops = specs
        .iter()
        .map(|s| match *s {
            ConvSpec::Conv { kernel, channels: out, stride } => {
                let layer = ConvLayer::new(channels, out, kernel, stride, kernel / 2, true, rng);
                channels = out;
                ConvOp::Conv(layer)
            }
            ConvSpec::Pool { size, stride } => ConvOp::Pool(PoolLayer { size, stride }),
        })
        .collect();
    let stack = ConvStack { input: [1, image_size, image_size], ops };
    stack.output_shape()?;
    Ok(stack)
}

impl VisualModel {
    pub(crate) fn new(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let cnn = build_conv_stack(&config.conv_stack, config.image_size, rng)?;
        let features = cnn.feature_count()?;
        let bottleneck = config
            .use_fc_bottleneck
            .then(|| FcLayer::new(features, config.bottleneck_units, Activation::Softmax, rng));
        let lstm_in = bottleneck.as_ref().map_or(features, FcLayer::output_size);
        let lstm = build_lstm_stack(lstm_in, config.layers, config.hidden, rng);
        let head = FcLayer::new(config.hidden, config.classes, Activation::Identity, rng);
        Ok(VisualModel { cnn, bottleneck, lstm, head })
    }

    pub fn classes(&self) -> usize {
        self.head.output_size()
    }

    /// Input width of the first LSTM layer.
    pub fn lstm_input_size(&self) -> usize {
        self.lstm[0].input_size()
    }

    pub fn forward_counted<S: MacSink>(&self, images: &[Tensor], sink: &S) -> Result<(Tensor, VisualCache)> {
        if images.is_empty() {
            return Err(Error::Dimension("visual model needs at least one image".into()));
        }
        let fc = self.cnn.feature_count()?;
        let mut feats = Tensor::zeros(&[images.len(), fc]);
        let mut cnn = Vec::with_capacity(images.len());
        for (r, img) in images.iter().enumerate() {
            let (f, c) = self.cnn.forward_counted(img, sink)?;
            feats.row_mut(r).copy_from_slice(&f);
            cnn.push(c);
        }
        let (x, bottleneck) = match &self.bottleneck {
            Some(b) => {
                let (y, c) = b.forward_counted(&feats, sink)?;
                (y, Some(c))
            }
            None => (feats, None),
        };
        let (h, lstm) = lstm_stack_forward(&self.lstm, &x, sink)?;
        let (logits, head) = self.head.forward_counted(&h, sink)?;
        Ok((logits, VisualCache { cnn, bottleneck, lstm, head }))
    }

    pub fn logits(&self, images: &[Tensor]) -> Result<Tensor> {
        Ok(self.forward_counted(images, &NoCount)?.0)
    }

    pub fn probabilities(&self, images: &[Tensor]) -> Result<Tensor> {
        Ok(softmax_rows(&self.logits(images)?))
    }

    pub fn backward(&self, cache: &VisualCache, dlogits: &Tensor, grads: &mut VisualModel) -> Result<()> {
        let dh = self.head.backward(&cache.head, dlogits, &mut grads.head)?;
        let dx = lstm_stack_backward(&self.lstm, &cache.lstm, dh, &mut grads.lstm)?;
        let dfeat = match (&self.bottleneck, &cache.bottleneck, &mut grads.bottleneck) {
            (Some(b), Some(c), Some(g)) => b.backward(c, &dx, g)?,
            (None, None, None) => dx,
            _ => return Err(Error::Dimension("bottleneck structure differs between model and gradient".into())),
        };
        for (r, c) in cache.cnn.iter().enumerate() {
            self.cnn.backward(c, dfeat.row(r), &mut grads.cnn)?;
        }
        Ok(())
    }
}

impl Trainable for VisualModel {
    fn loss_and_grads(&self, ex: &Example, grads: &mut Self) -> Result<f64> {
        let (logits, cache) = self.forward_counted(&ex.images, &NoCount)?;
        let (loss, dlogits) = softmax_xent(&logits, &ex.labels)?;
        self.backward(&cache, &dlogits, grads)?;
        Ok(loss)
    }

    fn evaluate(&self, ex: &Example) -> Result<Evaluation> {
        let logits = self.logits(&ex.images)?;
        let (loss, _) = softmax_xent(&logits, &ex.labels)?;
        Ok(Evaluation { loss, predictions: argmax_rows(&logits), weights: None })
    }
}

impl Parameterized for VisualModel {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.cnn.visit_params(&join(prefix, "cnn"), f);
        if let Some(b) = &self.bottleneck {
            b.visit_params(&join(prefix, "bottleneck"), f);
        }
        for (i, l) in self.lstm.iter().enumerate() {
            l.visit_params(&join(prefix, &format!("lstm{i}")), f);
        }
        self.head.visit_params(&join(prefix, "head"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.cnn.visit_params_mut(&join(prefix, "cnn"), f);
        if let Some(b) = &mut self.bottleneck {
            b.visit_params_mut(&join(prefix, "bottleneck"), f);
        }
        for (i, l) in self.lstm.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &format!("lstm{i}")), f);
        }
        self.head.visit_params_mut(&join(prefix, "head"), f);
    }
}
