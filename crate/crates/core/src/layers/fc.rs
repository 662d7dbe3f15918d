use serde::{Deserialize, Serialize};

use super::{init_uniform, join, softmax, MacSink, NoCount, Parameterized};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
}

/// Fully connected layer `y = act(W x + b)` applied to each batch row.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    /// `out × in`
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct FcCache {
    x: Tensor,
    y: Tensor,
}

impl FcLayer {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        FcLayer {
            weights: init_uniform(rng, &[output, input], input),
            bias: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn output_size(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, FcCache)> {
        self.forward_counted(x, &NoCount)
    }

    pub fn forward_counted<S: MacSink>(&self, x: &Tensor, sink: &S) -> Result<(Tensor, FcCache)> {
        let (out, inp) = (self.output_size(), self.input_size());
        if x.rank() != 2 || x.cols() != inp {
            return Err(Error::Dimension(format!("fc expects [batch×{inp}], got {:?}", x.shape())));
        }
        let batch = x.rows();
        let w = self.weights.data();
        let mut y = Tensor::zeros(&[batch, out]);
        for r in 0..batch {
            let xr = x.row(r);
            let yr = y.row_mut(r);
            for (o, yo) in yr.iter_mut().enumerate() {
                let mut acc = self.bias.data()[o];
                sink.mac();
                for (wv, xv) in w[o * inp..(o + 1) * inp].iter().zip(xr) {
                    acc += wv * xv;
                    sink.mac();
                }
                *yo = acc;
            }
            match self.activation {
                Activation::Identity => {}
                Activation::Relu => yr.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Softmax => {
                    let p = softmax(yr);
                    yr.copy_from_slice(&p);
                }
            }
        }
        Ok((y.clone(), FcCache { x: x.clone(), y }))
    }

    /// Accumulates parameter gradients into `grads`, returns `dL/dx`.
    pub fn backward(&self, cache: &FcCache, dy: &Tensor, grads: &mut FcLayer) -> Result<Tensor> {
        dy.expect_shape(cache.y.shape(), "fc backward")?;
        let (out, inp) = (self.output_size(), self.input_size());
        let batch = dy.rows();
        let mut dx = Tensor::zeros(&[batch, inp]);
        let mut dz = vec![0.0; out];
        for r in 0..batch {
            let (yr, dyr) = (cache.y.row(r), dy.row(r));
            match self.activation {
                Activation::Identity => dz.copy_from_slice(dyr),
                Activation::Relu => {
                    for ((d, &g), &y) in dz.iter_mut().zip(dyr).zip(yr) {
                        *d = if y > 0.0 { g } else { 0.0 };
                    }
                }
                Activation::Softmax => {
                    let dot: f64 = dyr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for ((d, &g), &y) in dz.iter_mut().zip(dyr).zip(yr) {
                        *d = y * (g - dot);
                    }
                }
            }
            let xr = cache.x.row(r);
            let dxr = dx.row_mut(r);
            let gw = grads.weights.data_mut();
            let w = self.weights.data();
            for (o, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for ((g, &xv), (dxv, &wv)) in
                    gw[o * inp..(o + 1) * inp].iter_mut().zip(xr).zip(dxr.iter_mut().zip(&w[o * inp..(o + 1) * inp]))
                {
                    *g += d * xv;
                    *dxv += d * wv;
                }
            }
            for (gb, &d) in grads.bias.data_mut().iter_mut().zip(&dz) {
                *gb += d;
            }
        }
        Ok(dx)
    }
}

impl Parameterized for FcLayer {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "weights"), &self.weights);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "weights"), &mut self.weights);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{check_param_grads, softmax_xent, MacCounter};
    use crate::numerics::{finite_diff_grad, max_rel_error, rng_normal, DEFAULT_STEP};

    #[test]
    fn identity_weights() {
        let mut rng = Rng::new(0);
        let layer = FcLayer {
            weights: Tensor::identity(4),
            bias: Tensor::zeros(&[4]),
            activation: Activation::Identity,
        };
        let x = rng_normal(&mut rng, &[3, 4], 0.0, 1.0).unwrap();
        assert_eq!(layer.forward(&x).unwrap().0, x);
    }

    #[test]
    fn zero_weights_give_bias() {
        let c = vec![0.5, -1.0, 2.0];
        for act in [Activation::Identity, Activation::Relu, Activation::Softmax] {
            let layer = FcLayer { weights: Tensor::zeros(&[3, 5]), bias: Tensor::vector(c.clone()), activation: act };
            let (y, _) = layer.forward(&Tensor::full(&[2, 5], 3.0)).unwrap();
            let expected = match act {
                Activation::Identity => c.clone(),
                Activation::Relu => vec![0.5, 0.0, 2.0],
                Activation::Softmax => softmax(&c),
            };
            for r in 0..2 {
                for (a, b) in y.row(r).iter().zip(&expected) {
                    assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let layer = FcLayer::new(4, 2, Activation::Identity, &mut Rng::new(0));
        assert!(layer.forward(&Tensor::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn counts_out_times_in_plus_one() {
        let layer = FcLayer::new(39, 10, Activation::Identity, &mut Rng::new(0));
        let c = MacCounter::new();
        layer.forward_counted(&Tensor::zeros(&[1, 39]), &c).unwrap();
        assert_eq!(c.count(), 400);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, act) in [(0, Activation::Identity), (1, Activation::Relu), (2, Activation::Softmax)] {
            let mut rng = Rng::new(seed);
            let mut layer = FcLayer::new(5, 4, act, &mut rng);
            layer.bias = rng_normal(&mut rng, &[4], 0.0, 0.5).unwrap();
            let x = rng_normal(&mut rng, &[3, 5], 0.0, 1.0).unwrap();
            let labels = [1, 3, 0];
            let loss = |l: &FcLayer, x: &Tensor| -> Result<(f64, Tensor, FcCache)> {
                let (y, cache) = l.forward(x)?;
                let (loss, dy) = softmax_xent(&y, &labels)?;
                Ok((loss, dy, cache))
            };
            let (_, dy, cache) = loss(&layer, &x).unwrap();
            let mut grads = layer.zeros_like();
            let dx = layer.backward(&cache, &dy, &mut grads).unwrap();
            let err = check_param_grads(&layer, &grads, |l| loss(l, &x).map(|r| r.0), DEFAULT_STEP).unwrap();
            assert!(err < 1e-4, "{act:?}: {err}");
            let ndx = finite_diff_grad(|t| loss(&layer, t).map(|r| r.0), &x, DEFAULT_STEP).unwrap();
            assert!(max_rel_error(&dx, &ndx).unwrap() < 1e-4);
        }
    }
}
