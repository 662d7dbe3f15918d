use super::{join, softmax, Activation, FcCache, FcLayer, MacSink, NoCount, Parameterized};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// Feed-forward attention network producing a 2-way softmax over the acoustic
/// and visual streams. Each stream's feature vector is scaled by its weight
/// before the two are concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub audio_dim: usize,
    pub video_dim: usize,
    /// Hidden relu layers followed by a linear layer with 2 outputs.
    pub layers: Vec<FcLayer>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    a: Tensor,
    v: Tensor,
    weights: Tensor,
    layer_caches: Vec<FcCache>,
}

impl AttentionBlock {
    pub fn new(audio_dim: usize, video_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = audio_dim + video_dim;
        for &h in hidden {
            layers.push(FcLayer::new(prev, h, Activation::Relu, rng));
            prev = h;
        }
        layers.push(FcLayer::new(prev, 2, Activation::Identity, rng));
        AttentionBlock { audio_dim, video_dim, layers }
    }

    fn concat(a: &Tensor, v: &Tensor) -> Tensor {
        let (m, da, dv) = (a.rows(), a.cols(), v.cols());
        let mut x = Tensor::zeros(&[m, da + dv]);
        for r in 0..m {
            x.row_mut(r)[..da].copy_from_slice(a.row(r));
            x.row_mut(r)[da..].copy_from_slice(v.row(r));
        }
        x
    }

    /// Returns the gated concatenation `[w_a·a, w_v·v]` per row and the
    /// `[M×2]` stream weights.
    pub fn fuse(&self, a: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor, AttentionCache)> {
        self.fuse_counted(a, v, &NoCount)
    }

    pub fn fuse_counted<S: MacSink>(&self, a: &Tensor, v: &Tensor, sink: &S) -> Result<(Tensor, Tensor, AttentionCache)> {
        a.expect_shape(&[a.shape().first().copied().unwrap_or(0), self.audio_dim], "attention audio input")?;
        v.expect_shape(&[a.rows(), self.video_dim], "attention video input")?;
        let mut x = Self::concat(a, v);
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, c) = l.forward_counted(&x, sink)?;
            layer_caches.push(c);
            x = y;
        }
        if x.cols() != 2 {
            return Err(Error::Dimension(format!("attention network must end in 2 logits, got {}", x.cols())));
        }
        let mut weights = Tensor::zeros(&[a.rows(), 2]);
        let mut fused = Self::concat(a, v);
        for r in 0..a.rows() {
            let w = softmax(x.row(r));
            weights.row_mut(r).copy_from_slice(&w);
            let row = fused.row_mut(r);
            row[..self.audio_dim].iter_mut().for_each(|e| *e *= w[0]);
            row[self.audio_dim..].iter_mut().for_each(|e| *e *= w[1]);
        }
        let cache = AttentionCache { a: a.clone(), v: v.clone(), weights: weights.clone(), layer_caches };
        Ok((fused, weights, cache))
    }

    /// Returns `(dL/da, dL/dv)`.
    pub fn backward(&self, cache: &AttentionCache, dfused: &Tensor, grads: &mut AttentionBlock) -> Result<(Tensor, Tensor)> {
        let (m, da_dim) = (cache.a.rows(), self.audio_dim);
        dfused.expect_shape(&[m, da_dim + self.video_dim], "attention backward")?;
        let mut da = Tensor::zeros(cache.a.shape());
        let mut dv = Tensor::zeros(cache.v.shape());
        let mut dlogits = Tensor::zeros(&[m, 2]);
        for r in 0..m {
            let w = cache.weights.row(r);
            let (dfa, dfv) = dfused.row(r).split_at(da_dim);
            let dwa: f64 = dfa.iter().zip(cache.a.row(r)).map(|(g, x)| g * x).sum();
            let dwv: f64 = dfv.iter().zip(cache.v.row(r)).map(|(g, x)| g * x).sum();
            for (d, g) in da.row_mut(r).iter_mut().zip(dfa) {
                *d = w[0] * g;
            }
            for (d, g) in dv.row_mut(r).iter_mut().zip(dfv) {
                *d = w[1] * g;
            }
            let dot = w[0] * dwa + w[1] * dwv;
            dlogits.row_mut(r).copy_from_slice(&[w[0] * (dwa - dot), w[1] * (dwv - dot)]);
        }
        let mut d = dlogits;
        for (i, l) in self.layers.iter().enumerate().rev() {
            d = l.backward(&cache.layer_caches[i], &d, &mut grads.layers[i])?;
        }
        for r in 0..m {
            let (ga, gv) = d.row(r).split_at(da_dim);
            da.row_mut(r).iter_mut().zip(ga).for_each(|(x, g)| *x += g);
            dv.row_mut(r).iter_mut().zip(gv).for_each(|(x, g)| *x += g);
        }
        Ok((da, dv))
    }
}

impl Parameterized for AttentionBlock {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_params(&join(prefix, &format!("fc{i}")), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &format!("fc{i}")), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::check_param_grads;
    use crate::numerics::{finite_diff_grad, max_rel_error, rng_normal, DEFAULT_STEP};

    fn weighted(y: &Tensor) -> (f64, Tensor) {
        let mut w = y.clone();
        for (k, v) in w.data_mut().iter_mut().enumerate() {
            *v = ((k * 3 % 7) as f64 - 3.0) / 3.0;
        }
        (y.mul(&w).unwrap().sum(), w)
    }

    #[test]
    fn equal_logits_halve_both_streams() {
        let mut rng = Rng::new(0);
        let mut block = AttentionBlock::new(3, 2, &[4], &mut rng);
        let last = block.layers.last_mut().unwrap();
        last.weights.data_mut().fill(0.0);
        last.bias = Tensor::vector(vec![0.7, 0.7]);
        let a = rng_normal(&mut rng, &[2, 3], 0.0, 1.0).unwrap();
        let v = rng_normal(&mut rng, &[2, 2], 0.0, 1.0).unwrap();
        let (fused, w, _) = block.fuse(&a, &v).unwrap();
        assert!(w.data().iter().all(|&x| x == 0.5));
        let half = AttentionBlock::concat(&a, &v).scale(0.5);
        assert!(fused.max_abs_diff(&half).unwrap() < 1e-15);
    }

    #[test]
    fn vanishing_video_weight() {
        let mut rng = Rng::new(1);
        let mut block = AttentionBlock::new(2, 2, &[], &mut rng);
        block.layers[0].weights.data_mut().fill(0.0);
        block.layers[0].bias = Tensor::vector(vec![50.0, -50.0]);
        let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let v = Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let (fused, _, _) = block.fuse(&a, &v).unwrap();
        let expected = [1.0, 2.0, 0.0, 0.0];
        for (x, e) in fused.data().iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_form_a_distribution() {
        let mut rng = Rng::new(2);
        let block = AttentionBlock::new(4, 3, &[8, 8], &mut rng);
        let a = rng_normal(&mut rng, &[20, 4], 0.0, 5.0).unwrap();
        let v = rng_normal(&mut rng, &[20, 3], 0.0, 5.0).unwrap();
        let (_, w, _) = block.fuse(&a, &v).unwrap();
        for r in 0..20 {
            assert!(w.row(r).iter().all(|&x| x >= 0.0));
            assert!((w.row(r)[0] + w.row(r)[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn end_to_end_gradients() {
        let mut rng = Rng::new(3);
        let block = AttentionBlock::new(3, 2, &[5, 4], &mut rng);
        let a = rng_normal(&mut rng, &[3, 3], 0.0, 1.0).unwrap();
        let v = rng_normal(&mut rng, &[3, 2], 0.0, 1.0).unwrap();
        let (fused, _, cache) = block.fuse(&a, &v).unwrap();
        let (_, dfused) = weighted(&fused);
        let mut grads = block.zeros_like();
        let (da, dv) = block.backward(&cache, &dfused, &mut grads).unwrap();
        let loss = |b: &AttentionBlock, a: &Tensor, v: &Tensor| Ok(weighted(&b.fuse(a, v)?.0).0);
        assert!(check_param_grads(&block, &grads, |b| loss(b, &a, &v), DEFAULT_STEP).unwrap() < 1e-4);
        let nda = finite_diff_grad(|t| loss(&block, t, &v), &a, DEFAULT_STEP).unwrap();
        let ndv = finite_diff_grad(|t| loss(&block, &a, t), &v, DEFAULT_STEP).unwrap();
        assert!(max_rel_error(&da, &nda).unwrap() < 1e-4);
        assert!(max_rel_error(&dv, &ndv).unwrap() < 1e-4);
    }
}
