use super::{init_uniform, join, MacSink, NoCount, Parameterized};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

fn out_extent(input: usize, pad: usize, k: usize, stride: usize) -> Result<usize> {
    if stride == 0 || k == 0 {
        return Err(Error::Geometry("kernel and stride must be positive".into()));
    }
    if input + 2 * pad < k {
        return Err(Error::Geometry(format!("kernel {k} does not fit input {input} with padding {pad}")));
    }
    Ok((input + 2 * pad - k) / stride + 1)
}

/// 2-D cross-correlation with bias and optional relu over a `[C×H×W]` image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `outC × inC × kH × kW`
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    padded: Tensor,
    in_shape: [usize; 3],
    y: Tensor,
}

impl ConvLayer {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, stride: usize, padding: usize, relu: bool, rng: &mut Rng) -> Self {
        ConvLayer {
            kernels: init_uniform(rng, &[out_ch, in_ch, k, k], in_ch * k * k),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
            relu,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernels.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let (oc, ic, kh, kw) = self.dims();
        if input[0] != ic {
            return Err(Error::Geometry(format!("conv expects {ic} input channels, got {}", input[0])));
        }
        Ok([oc, out_extent(input[1], self.padding, kh, self.stride)?, out_extent(input[2], self.padding, kw, self.stride)?])
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        self.forward_counted(x, &NoCount)
    }

    pub fn forward_counted<S: MacSink>(&self, x: &Tensor, sink: &S) -> Result<(Tensor, ConvCache)> {
        if x.rank() != 3 {
            return Err(Error::Dimension(format!("conv expects [C×H×W], got {:?}", x.shape())));
        }
        let in_shape = [x.shape()[0], x.shape()[1], x.shape()[2]];
        let [oc, oh, ow] = self.output_shape(in_shape)?;
        let (_, ic, kh, kw) = self.dims();
        let p = self.padding;
        let (ph, pw) = (in_shape[1] + 2 * p, in_shape[2] + 2 * p);
        let mut padded = Tensor::zeros(&[ic, ph, pw]);
        {
            let pd = padded.data_mut();
            for c in 0..ic {
                for r in 0..in_shape[1] {
                    let src = &x.data()[(c * in_shape[1] + r) * in_shape[2]..][..in_shape[2]];
                    pd[(c * ph + r + p) * pw + p..][..in_shape[2]].copy_from_slice(src);
                }
            }
        }
        let k = self.kernels.data();
        let pd = padded.data();
        let mut y = Tensor::zeros(&[oc, oh, ow]);
        let yd = y.data_mut();
        for o in 0..oc {
            for r in 0..oh {
                for col in 0..ow {
                    let mut acc = self.bias.data()[o];
                    sink.mac();
                    for c in 0..ic {
                        for dy in 0..kh {
                            let row = &pd[(c * ph + r * self.stride + dy) * pw + col * self.stride..][..kw];
                            let kr = &k[((o * ic + c) * kh + dy) * kw..][..kw];
                            for (a, b) in kr.iter().zip(row) {
                                acc += a * b;
                                sink.mac();
                            }
                        }
                    }
                    yd[(o * oh + r) * ow + col] = if self.relu { acc.max(0.0) } else { acc };
                }
            }
        }
        Ok((y.clone(), ConvCache { padded, in_shape, y }))
    }

    pub fn backward(&self, cache: &ConvCache, dy: &Tensor, grads: &mut ConvLayer) -> Result<Tensor> {
        dy.expect_shape(cache.y.shape(), "conv backward")?;
        let (oc, ic, kh, kw) = self.dims();
        let (oh, ow) = (dy.shape()[1], dy.shape()[2]);
        let ph = cache.padded.shape()[1];
        let pw = cache.padded.shape()[2];
        let mut dpad = vec![0.0; cache.padded.len()];
        let pd = cache.padded.data();
        let k = self.kernels.data();
        for o in 0..oc {
            for r in 0..oh {
                for col in 0..ow {
                    let idx = (o * oh + r) * ow + col;
                    let mut d = dy.data()[idx];
                    if self.relu && cache.y.data()[idx] <= 0.0 {
                        d = 0.0;
                    }
                    if d == 0.0 {
                        continue;
                    }
                    grads.bias.data_mut()[o] += d;
                    let gk = grads.kernels.data_mut();
                    for c in 0..ic {
                        for dyk in 0..kh {
                            let base = (c * ph + r * self.stride + dyk) * pw + col * self.stride;
                            let kbase = ((o * ic + c) * kh + dyk) * kw;
                            for dx in 0..kw {
                                gk[kbase + dx] += d * pd[base + dx];
                                dpad[base + dx] += d * k[kbase + dx];
                            }
                        }
                    }
                }
            }
        }
        let [c_in, h, w] = cache.in_shape;
        let p = self.padding;
        let mut dx = Tensor::zeros(&[c_in, h, w]);
        for c in 0..c_in {
            for r in 0..h {
                dx.data_mut()[(c * h + r) * w..][..w].copy_from_slice(&dpad[(c * ph + r + p) * pw + p..][..w]);
            }
        }
        Ok(dx)
    }
}

impl Parameterized for ConvLayer {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "kernels"), &self.kernels);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "kernels"), &mut self.kernels);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Max pooling without padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolLayer {
    pub size: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    in_shape: [usize; 3],
    argmax: Vec<usize>,
}

impl PoolLayer {
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        Ok([input[0], out_extent(input[1], 0, self.size, self.stride)?, out_extent(input[2], 0, self.size, self.stride)?])
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolCache)> {
        if x.rank() != 3 {
            return Err(Error::Dimension(format!("pool expects [C×H×W], got {:?}", x.shape())));
        }
        let in_shape = [x.shape()[0], x.shape()[1], x.shape()[2]];
        let [c, oh, ow] = self.output_shape(in_shape)?;
        let (h, w) = (in_shape[1], in_shape[2]);
        let mut y = Tensor::zeros(&[c, oh, ow]);
        let mut argmax = vec![0; c * oh * ow];
        for ch in 0..c {
            for r in 0..oh {
                for col in 0..ow {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let i = (ch * h + r * self.stride + dy) * w + col * self.stride + dx;
                            if x.data()[i] > best.0 {
                                best = (x.data()[i], i);
                            }
                        }
                    }
                    let o = (ch * oh + r) * ow + col;
                    y.data_mut()[o] = best.0;
                    argmax[o] = best.1;
                }
            }
        }
        Ok((y, PoolCache { in_shape, argmax }))
    }

    /// Routes each output gradient to the input that won the max.
    pub fn backward(&self, cache: &PoolCache, dy: &Tensor) -> Result<Tensor> {
        if dy.len() != cache.argmax.len() {
            return Err(Error::Dimension("pool backward: gradient size mismatch".into()));
        }
        let mut dx = Tensor::zeros(&cache.in_shape);
        for (&i, &d) in cache.argmax.iter().zip(dy.data()) {
            dx.data_mut()[i] += d;
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvOp {
    Conv(ConvLayer),
    Pool(PoolLayer),
}

/// Convolution/pooling stack applied to one greyscale image; the result is
/// flattened into a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack {
    pub input: [usize; 3],
    pub ops: Vec<ConvOp>,
}

#[derive(Debug, Clone)]
pub struct ConvStackCache {
    caches: Vec<OpCache>,
}

#[derive(Debug, Clone)]
enum OpCache {
    Conv(ConvCache),
    Pool(PoolCache),
}

impl ConvStack {
    pub fn output_shape(&self) -> Result<[usize; 3]> {
        let mut shape = self.input;
        for op in &self.ops {
            shape = match op {
                ConvOp::Conv(c) => c.output_shape(shape)?,
                ConvOp::Pool(p) => p.output_shape(shape)?,
            };
        }
        Ok(shape)
    }

    pub fn feature_count(&self) -> Result<usize> {
        Ok(self.output_shape()?.iter().product())
    }

    /// Shapes entering each op, then the final output shape.
    pub fn shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shapes = vec![self.input];
        for op in &self.ops {
            let s = *shapes.last().unwrap();
            shapes.push(match op {
                ConvOp::Conv(c) => c.output_shape(s)?,
                ConvOp::Pool(p) => p.output_shape(s)?,
            });
        }
        Ok(shapes)
    }

    pub fn forward_counted<S: MacSink>(&self, image: &Tensor, sink: &S) -> Result<(Vec<f64>, ConvStackCache)> {
        image.expect_shape(&self.input, "conv stack input")?;
        let mut x = image.clone();
        let mut caches = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            x = match op {
                ConvOp::Conv(c) => {
                    let (y, cache) = c.forward_counted(&x, sink)?;
                    caches.push(OpCache::Conv(cache));
                    y
                }
                ConvOp::Pool(p) => {
                    let (y, cache) = p.forward(&x)?;
                    caches.push(OpCache::Pool(cache));
                    y
                }
            };
        }
        Ok((x.into_data(), ConvStackCache { caches }))
    }

    pub fn forward(&self, image: &Tensor) -> Result<(Vec<f64>, ConvStackCache)> {
        self.forward_counted(image, &NoCount)
    }

    /// Backward from the flattened feature gradient; returns the image gradient.
    pub fn backward(&self, cache: &ConvStackCache, dfeat: &[f64], grads: &mut ConvStack) -> Result<Tensor> {
        let shapes = self.shapes()?;
        let mut d = Tensor::new(shapes.last().unwrap().to_vec(), dfeat.to_vec())?;
        for (i, (op, c)) in self.ops.iter().zip(&cache.caches).enumerate().rev() {
            d = match (op, c, &mut grads.ops[i]) {
                (ConvOp::Conv(l), OpCache::Conv(c), ConvOp::Conv(g)) => l.backward(c, &d, g)?,
                (ConvOp::Pool(p), OpCache::Pool(c), _) => p.backward(c, &d)?,
                _ => return Err(Error::Dimension("conv stack cache does not match its ops".into())),
            };
        }
        Ok(d)
    }
}

impl Parameterized for ConvStack {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, op) in self.ops.iter().enumerate() {
            if let ConvOp::Conv(c) = op {
                c.visit_params(&join(prefix, &format!("conv{i}")), f);
            }
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (i, op) in self.ops.iter_mut().enumerate() {
            if let ConvOp::Conv(c) = op {
                c.visit_params_mut(&join(prefix, &format!("conv{i}")), f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{check_param_grads, MacCounter};
    use crate::numerics::{finite_diff_grad, max_rel_error, rng_normal, DEFAULT_STEP};

    fn weighted(y: &Tensor) -> (f64, Tensor) {
        let mut w = y.clone();
        for (k, v) in w.data_mut().iter_mut().enumerate() {
            *v = ((k * 5 % 13) as f64 - 6.0) / 6.0;
        }
        (y.mul(&w).unwrap().sum(), w)
    }

    #[test]
    fn unit_one_by_one_kernel() {
        let layer = ConvLayer {
            kernels: Tensor::full(&[1, 1, 1, 1], 1.0),
            bias: Tensor::zeros(&[1]),
            stride: 1,
            padding: 0,
            relu: false,
        };
        let x = rng_normal(&mut Rng::new(0), &[1, 6, 5], 0.0, 1.0).unwrap();
        assert_eq!(layer.forward(&x).unwrap().0, x);
    }

    #[test]
    fn box_filter_on_constant_image() {
        let layer = ConvLayer {
            kernels: Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0),
            bias: Tensor::zeros(&[1]),
            stride: 1,
            padding: 1,
            relu: false,
        };
        let (y, _) = layer.forward(&Tensor::full(&[1, 8, 8], 2.5)).unwrap();
        assert_eq!(y.shape(), &[1, 8, 8]);
        for r in 1..7 {
            for c in 1..7 {
                assert!((y.data()[r * 8 + c] - 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_geometry() {
        let layer = ConvLayer::new(1, 2, 5, 1, 0, false, &mut Rng::new(0));
        assert!(matches!(layer.forward(&Tensor::zeros(&[1, 3, 3])), Err(Error::Geometry(_))));
        let pool = PoolLayer { size: 4, stride: 4 };
        assert!(pool.forward(&Tensor::zeros(&[1, 3, 3])).is_err());
    }

    #[test]
    fn conv_macs_follow_output_geometry() {
        let layer = ConvLayer::new(2, 3, 3, 2, 1, true, &mut Rng::new(0));
        let c = MacCounter::new();
        let (y, _) = layer.forward_counted(&Tensor::zeros(&[2, 9, 7]), &c).unwrap();
        assert_eq!(y.shape(), &[3, 5, 4]);
        assert_eq!(c.count(), (3 * 5 * 4 * (2 * 9 + 1)) as u64);
    }

    #[test]
    fn conv_gradients() {
        for seed in 0..2 {
            let mut rng = Rng::new(seed);
            let mut layer = ConvLayer::new(2, 3, 3, 1 + seed as usize, 1, false, &mut rng);
            layer.bias = rng_normal(&mut rng, &[3], 0.0, 0.3).unwrap();
            let x = rng_normal(&mut rng, &[2, 8, 8], 0.0, 1.0).unwrap();
            let (y, cache) = layer.forward(&x).unwrap();
            let (_, dy) = weighted(&y);
            let mut grads = layer.zeros_like();
            let dx = layer.backward(&cache, &dy, &mut grads).unwrap();
            let loss = |l: &ConvLayer, x: &Tensor| Ok(weighted(&l.forward(x)?.0).0);
            assert!(check_param_grads(&layer, &grads, |l| loss(l, &x), DEFAULT_STEP).unwrap() < 1e-4);
            let ndx = finite_diff_grad(|t| loss(&layer, t), &x, DEFAULT_STEP).unwrap();
            assert!(max_rel_error(&dx, &ndx).unwrap() < 1e-4);
        }
    }

    #[test]
    fn pool_routes_to_argmax() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 4.0, 3.0, 2.0]).unwrap();
        let pool = PoolLayer { size: 2, stride: 2 };
        let (y, cache) = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let dx = pool.backward(&cache, &Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_gradient_matches_finite_differences() {
        let x = rng_normal(&mut Rng::new(4), &[2, 6, 6], 0.0, 1.0).unwrap();
        let pool = PoolLayer { size: 2, stride: 2 };
        let (y, cache) = pool.forward(&x).unwrap();
        let (_, dy) = weighted(&y);
        let dx = pool.backward(&cache, &dy).unwrap();
        let ndx = finite_diff_grad(|t| Ok(weighted(&pool.forward(t)?.0).0), &x, DEFAULT_STEP).unwrap();
        assert!(max_rel_error(&dx, &ndx).unwrap() < 1e-4);
    }

    #[test]
    fn stack_gradients() {
        let mut rng = Rng::new(12);
        let stack = ConvStack {
            input: [1, 10, 10],
            ops: vec![
                ConvOp::Conv(ConvLayer::new(1, 2, 3, 1, 1, true, &mut rng)),
                ConvOp::Pool(PoolLayer { size: 2, stride: 2 }),
                ConvOp::Conv(ConvLayer::new(2, 3, 3, 1, 0, false, &mut rng)),
            ],
        };
        assert_eq!(stack.feature_count().unwrap(), 3 * 3 * 3);
        let img = rng_normal(&mut rng, &[1, 10, 10], 0.0, 1.0).unwrap();
        let (feat, cache) = stack.forward(&img).unwrap();
        let ft = Tensor::vector(feat);
        let (_, dfeat) = weighted(&ft);
        let mut grads = stack.zeros_like();
        stack.backward(&cache, dfeat.data(), &mut grads).unwrap();
        let loss = |s: &ConvStack| Ok(weighted(&Tensor::vector(s.forward(&img)?.0)).0);
        assert!(check_param_grads(&stack, &grads, loss, DEFAULT_STEP).unwrap() < 1e-4);
    }
}
