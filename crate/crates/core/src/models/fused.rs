use super::{
    argmax_rows, AcousticCache, FusionInput, AcousticModel, Checkpoint, Evaluation, Example, ModelConfig, ModelGraph, Modality, Trainable,
    VisualCache, VisualModel,
};
use crate::error::{Error, Result};
use crate::layers::{join, softmax_rows, softmax_xent, Activation, AttentionBlock, AttentionCache, FcCache, FcLayer, MacSink, NoCount, Parameterized};
use crate::numerics::{Rng, Tensor};

/// How the two streams are combined before the classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Fusion {
    /// Plain concatenation `[a, v]`.
    Concat,
    /// Learned per-interval stream weights.
    Attention(AttentionBlock),
    /// Constant weights `[w_a·a, (1 − w_a)·v]`.
    Fixed(f64),
}

/// Acoustic and visual networks whose final logits, taken at label-interval
/// midpoints, are fused and classified by a relu MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedModel {
    pub acoustic: AcousticModel,
    pub visual: VisualModel,
    pub fusion: Fusion,
    pub input: FusionInput,
    /// Hidden relu layers followed by the identity output layer.
    pub head: Vec<FcLayer>,
}

#[derive(Debug, Clone)]
pub struct FusedCache {
    frames: usize,
    midpoints: Vec<usize>,
    acoustic: AcousticCache,
    visual: VisualCache,
    attention: Option<AttentionCache>,
    /// Fusion inputs when they are posteriors, kept for the softmax Jacobian.
    posteriors: Option<(Tensor, Tensor)>,
    head: Vec<FcCache>,
    pub weights: Option<Tensor>,
}

fn concat_scaled(a: &Tensor, v: &Tensor, wa: f64, wv: f64) -> Tensor {
    let (m, da, dv) = (a.rows(), a.cols(), v.cols());
    let mut x = Tensor::zeros(&[m, da + dv]);
    for r in 0..m {
        let row = x.row_mut(r);
        row[..da].iter_mut().zip(a.row(r)).for_each(|(o, &s)| *o = wa * s);
        row[da..].iter_mut().zip(v.row(r)).for_each(|(o, &s)| *o = wv * s);
    }
    x
}

/// Gradient through row-wise softmax given its output `p`.
fn softmax_backward(p: &Tensor, g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(p.shape());
    for r in 0..p.rows() {
        let dot: f64 = p.row(r).iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
        for ((o, &pi), &gi) in out.row_mut(r).iter_mut().zip(p.row(r)).zip(g.row(r)) {
            *o = pi * (gi - dot);
        }
    }
    out
}

impl FusedModel {
    pub(crate) fn new(config: &ModelConfig, acoustic: AcousticModel, visual: VisualModel, rng: &mut Rng) -> Result<Self> {
        let (da, dv) = (acoustic.classes(), visual.classes());
        let fusion = match config.modality {
            Modality::AudioVisualAttention => Fusion::Attention(AttentionBlock::new(da, dv, &config.attention_hidden, rng)),
            Modality::AudioVisual => Fusion::Concat,
            other => return Err(Error::Config(format!("{other} is not a fused modality"))),
        };
        let mut head = Vec::with_capacity(config.fc_head.len() + 1);
        let mut prev = da + dv;
        for &w in &config.fc_head {
            head.push(FcLayer::new(prev, w, Activation::Relu, rng));
            prev = w;
        }
        head.push(FcLayer::new(prev, config.classes, Activation::Identity, rng));
        Ok(FusedModel { acoustic, visual, fusion, input: config.fusion_input, head })
    }

    pub fn classes(&self) -> usize {
        self.head.last().map_or(0, FcLayer::output_size)
    }

    pub fn forward_counted<S: MacSink>(
        &self,
        features: &Tensor,
        images: &[Tensor],
        midpoints: &[usize],
        sink: &S,
    ) -> Result<(Tensor, FusedCache)> {
        if midpoints.len() != images.len() {
            return Err(Error::Dimension(format!("{} midpoints for {} images", midpoints.len(), images.len())));
        }
        let (a_all, acoustic) = self.acoustic.forward_counted(features, sink)?;
        let mut a = Tensor::zeros(&[midpoints.len(), a_all.cols()]);
        for (r, &m) in midpoints.iter().enumerate() {
            if m >= a_all.rows() {
                return Err(Error::Dimension(format!("midpoint frame {m} beyond {} frames", a_all.rows())));
            }
            a.row_mut(r).copy_from_slice(a_all.row(m));
        }
        let (mut v, visual) = self.visual.forward_counted(images, sink)?;
        let posteriors = match self.input {
            FusionInput::Logits => None,
            FusionInput::Probabilities => {
                a = softmax_rows(&a);
                v = softmax_rows(&v);
                Some((a.clone(), v.clone()))
            }
        };
        let (mut x, attention, weights) = match &self.fusion {
            Fusion::Concat => (concat_scaled(&a, &v, 1.0, 1.0), None, None),
            Fusion::Fixed(wa) => (concat_scaled(&a, &v, *wa, 1.0 - wa), None, None),
            Fusion::Attention(block) => {
                let (fused, w, c) = block.fuse_counted(&a, &v, sink)?;
                (fused, Some(c), Some(w))
            }
        };
        let mut head = Vec::with_capacity(self.head.len());
        for l in &self.head {
            let (y, c) = l.forward_counted(&x, sink)?;
            head.push(c);
            x = y;
        }
        let cache = FusedCache {
            frames: a_all.rows(),
            midpoints: midpoints.to_vec(),
            acoustic,
            visual,
            attention,
            posteriors,
            head,
            weights,
        };
        Ok((x, cache))
    }

    pub fn forward_example(&self, ex: &Example) -> Result<(Tensor, FusedCache)> {
        self.forward_counted(ex.features()?, &ex.images, &ex.midpoints, &NoCount)
    }

    pub fn probabilities(&self, ex: &Example) -> Result<Tensor> {
        Ok(softmax_rows(&self.forward_example(ex)?.0))
    }

    pub fn backward(&self, cache: &FusedCache, dlogits: &Tensor, grads: &mut FusedModel) -> Result<()> {
        let mut d = dlogits.clone();
        for (i, l) in self.head.iter().enumerate().rev() {
            d = l.backward(&cache.head[i], &d, &mut grads.head[i])?;
        }
        let da_dim = self.acoustic.classes();
        let split = |d: &Tensor, wa: f64, wv: f64| {
            let m = d.rows();
            let mut da = Tensor::zeros(&[m, da_dim]);
            let mut dv = Tensor::zeros(&[m, d.cols() - da_dim]);
            for r in 0..m {
                let (ga, gv) = d.row(r).split_at(da_dim);
                da.row_mut(r).iter_mut().zip(ga).for_each(|(o, &g)| *o = wa * g);
                dv.row_mut(r).iter_mut().zip(gv).for_each(|(o, &g)| *o = wv * g);
            }
            (da, dv)
        };
        let (mut da, mut dv) = match (&self.fusion, &cache.attention, &mut grads.fusion) {
            (Fusion::Concat, None, _) => split(&d, 1.0, 1.0),
            (Fusion::Fixed(wa), None, _) => split(&d, *wa, 1.0 - wa),
            (Fusion::Attention(b), Some(c), Fusion::Attention(g)) => b.backward(c, &d, g)?,
            _ => return Err(Error::Dimension("fusion structure differs between model and gradient".into())),
        };
        if let Some((pa, pv)) = &cache.posteriors {
            da = softmax_backward(pa, &da);
            dv = softmax_backward(pv, &dv);
        }
        let mut da_all = Tensor::zeros(&[cache.frames, da_dim]);
        for (r, &m) in cache.midpoints.iter().enumerate() {
            da_all.row_mut(m).iter_mut().zip(da.row(r)).for_each(|(o, &g)| *o += g);
        }
        self.acoustic.backward(&cache.acoustic, &da_all, &mut grads.acoustic)?;
        self.visual.backward(&cache.visual, &dv, &mut grads.visual)
    }
}

impl Trainable for FusedModel {
    fn loss_and_grads(&self, ex: &Example, grads: &mut Self) -> Result<f64> {
        let (logits, cache) = self.forward_example(ex)?;
        let (loss, dlogits) = softmax_xent(&logits, &ex.labels)?;
        self.backward(&cache, &dlogits, grads)?;
        Ok(loss)
    }

    fn evaluate(&self, ex: &Example) -> Result<Evaluation> {
        let (logits, cache) = self.forward_example(ex)?;
        let (loss, _) = softmax_xent(&logits, &ex.labels)?;
        Ok(Evaluation { loss, predictions: argmax_rows(&logits), weights: cache.weights })
    }
}

impl Parameterized for FusedModel {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.acoustic.visit_params(&join(prefix, "acoustic"), f);
        self.visual.visit_params(&join(prefix, "visual"), f);
        if let Fusion::Attention(b) = &self.fusion {
            b.visit_params(&join(prefix, "attention"), f);
        }
        for (i, l) in self.head.iter().enumerate() {
            l.visit_params(&join(prefix, &format!("fusion{i}")), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.acoustic.visit_params_mut(&join(prefix, "acoustic"), f);
        self.visual.visit_params_mut(&join(prefix, "visual"), f);
        if let Fusion::Attention(b) = &mut self.fusion {
            b.visit_params_mut(&join(prefix, "attention"), f);
        }
        for (i, l) in self.head.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &format!("fusion{i}")), f);
        }
    }
}

/// Builds a fused model whose sub-networks start from the given checkpoints.
pub fn build_audiovisual(
    config: &ModelConfig,
    acoustic_ckpt: &Checkpoint,
    visual_ckpt: &Checkpoint,
    with_attention: bool,
    rng: &mut Rng,
) -> Result<FusedModel> {
    let mut config = config.clone();
    config.modality = if with_attention { Modality::AudioVisualAttention } else { Modality::AudioVisual };
    config.validate()?;
    let (ac, vc) = (config.acoustic.as_deref().unwrap(), config.visual.as_deref().unwrap());
    if &acoustic_ckpt.config != ac {
        return Err(Error::ConfigMismatch("acoustic checkpoint was trained with a different config".into()));
    }
    if &visual_ckpt.config != vc {
        return Err(Error::ConfigMismatch("visual checkpoint was trained with a different config".into()));
    }
    let (ModelGraph::Acoustic(a), ModelGraph::Visual(v)) = (&acoustic_ckpt.graph, &visual_ckpt.graph) else {
        return Err(Error::ConfigMismatch("sub-checkpoints must hold an acoustic and a visual model".into()));
    };
    FusedModel::new(&config, a.clone(), v.clone(), rng)
}
