use super::{init_uniform, join, MacSink, NoCount, Parameterized};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// LSTM without peepholes. Each gate has a `hidden × (input + hidden)` weight
/// matrix applied to `[x_t, h_{t-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

#[derive(Debug, Clone)]
struct Step {
    z: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<Step>,
}

impl LstmLayer {
    /// Uniform init over `1/sqrt(input + hidden)`; forget-gate bias 1.
    pub fn new(input_size: usize, hidden_size: usize, rng: &mut Rng) -> Self {
        let fan = input_size + hidden_size;
        let shape = [hidden_size, fan];
        LstmLayer {
            input_size,
            hidden_size,
            w_i: init_uniform(rng, &shape, fan),
            w_f: init_uniform(rng, &shape, fan),
            w_c: init_uniform(rng, &shape, fan),
            w_o: init_uniform(rng, &shape, fan),
            b_i: Tensor::zeros(&[hidden_size]),
            b_f: Tensor::full(&[hidden_size], 1.0),
            b_c: Tensor::zeros(&[hidden_size]),
            b_o: Tensor::zeros(&[hidden_size]),
        }
    }

    /// All weights and biases zero.
    pub fn zeroed(input_size: usize, hidden_size: usize) -> Self {
        let mut l = Self::new(input_size, hidden_size, &mut Rng::new(0));
        l.visit_params_mut("", &mut |_, t| t.data_mut().fill(0.0));
        l
    }

    pub fn forward(&self, xs: &Tensor, h0: Option<&[f64]>, c0: Option<&[f64]>) -> Result<(Tensor, LstmCache)> {
        self.forward_counted(xs, h0, c0, &NoCount)
    }

    pub fn forward_counted<S: MacSink>(
        &self,
        xs: &Tensor,
        h0: Option<&[f64]>,
        c0: Option<&[f64]>,
        sink: &S,
    ) -> Result<(Tensor, LstmCache)> {
        let (n_in, n_h) = (self.input_size, self.hidden_size);
        if xs.rank() != 2 || xs.cols() != n_in {
            return Err(Error::Dimension(format!("lstm expects [L×{n_in}], got {:?}", xs.shape())));
        }
        if xs.rows() == 0 {
            return Err(Error::Dimension("lstm needs at least one timestep".into()));
        }
        for s in [h0, c0].into_iter().flatten() {
            if s.len() != n_h {
                return Err(Error::Dimension(format!("initial state has {} units, expected {n_h}", s.len())));
            }
        }
        let fan = n_in + n_h;
        let mut h = h0.map_or_else(|| vec![0.0; n_h], <[f64]>::to_vec);
        let mut c = c0.map_or_else(|| vec![0.0; n_h], <[f64]>::to_vec);
        let mut hs = Tensor::zeros(&[xs.rows(), n_h]);
        let mut steps = Vec::with_capacity(xs.rows());

        let gate = |w: &Tensor, b: &Tensor, z: &[f64]| -> Vec<f64> {
            let wd = w.data();
            (0..n_h)
                .map(|j| {
                    let mut acc = b.data()[j];
                    sink.mac();
                    for (wv, zv) in wd[j * fan..(j + 1) * fan].iter().zip(z) {
                        acc += wv * zv;
                        sink.mac();
                    }
                    acc
                })
                .collect()
        };

        for t in 0..xs.rows() {
            let mut z = Vec::with_capacity(fan);
            z.extend_from_slice(xs.row(t));
            z.extend_from_slice(&h);
            let i: Vec<f64> = gate(&self.w_i, &self.b_i, &z).into_iter().map(sigmoid).collect();
            let f: Vec<f64> = gate(&self.w_f, &self.b_f, &z).into_iter().map(sigmoid).collect();
            let g: Vec<f64> = gate(&self.w_c, &self.b_c, &z).into_iter().map(f64::tanh).collect();
            let o: Vec<f64> = gate(&self.w_o, &self.b_o, &z).into_iter().map(sigmoid).collect();
            let c_prev = c.clone();
            for j in 0..n_h {
                c[j] = f[j] * c_prev[j] + i[j] * g[j];
            }
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            for j in 0..n_h {
                h[j] = o[j] * tanh_c[j];
            }
            hs.row_mut(t).copy_from_slice(&h);
            steps.push(Step { z, i, f, g, o, c_prev, tanh_c });
        }
        Ok((hs, LstmCache { steps }))
    }

    /// Backpropagation through time over the whole sequence.
    pub fn backward(&self, cache: &LstmCache, dhs: &Tensor, grads: &mut LstmLayer) -> Result<Tensor> {
        let (n_in, n_h) = (self.input_size, self.hidden_size);
        let len = cache.steps.len();
        dhs.expect_shape(&[len, n_h], "lstm backward")?;
        let fan = n_in + n_h;
        let mut dxs = Tensor::zeros(&[len, n_in]);
        let mut dh_next = vec![0.0; n_h];
        let mut dc_next = vec![0.0; n_h];
        let mut da = [vec![0.0; n_h], vec![0.0; n_h], vec![0.0; n_h], vec![0.0; n_h]];

        for t in (0..len).rev() {
            let s = &cache.steps[t];
            for j in 0..n_h {
                let dh = dhs.row(t)[j] + dh_next[j];
                let dc = dh * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
                da[0][j] = dc * s.g[j] * s.i[j] * (1.0 - s.i[j]);
                da[1][j] = dc * s.c_prev[j] * s.f[j] * (1.0 - s.f[j]);
                da[2][j] = dc * s.i[j] * (1.0 - s.g[j] * s.g[j]);
                da[3][j] = dh * s.tanh_c[j] * s.o[j] * (1.0 - s.o[j]);
                dc_next[j] = dc * s.f[j];
            }
            let mut dz = vec![0.0; fan];
            let params = [&self.w_i, &self.w_f, &self.w_c, &self.w_o];
            let gw = [&mut grads.w_i, &mut grads.w_f, &mut grads.w_c, &mut grads.w_o];
            for ((w, gwk), dak) in params.iter().zip(gw).zip(&da) {
                let (wd, gd) = (w.data(), gwk.data_mut());
                for (j, &d) in dak.iter().enumerate() {
                    let range = j * fan..(j + 1) * fan;
                    for ((g, &zv), (dzv, &wv)) in
                        gd[range.clone()].iter_mut().zip(&s.z).zip(dz.iter_mut().zip(&wd[range]))
                    {
                        *g += d * zv;
                        *dzv += d * wv;
                    }
                }
            }
            let gb = [&mut grads.b_i, &mut grads.b_f, &mut grads.b_c, &mut grads.b_o];
            for (b, dak) in gb.into_iter().zip(&da) {
                for (bv, d) in b.data_mut().iter_mut().zip(dak) {
                    *bv += d;
                }
            }
            dxs.row_mut(t).copy_from_slice(&dz[..n_in]);
            dh_next.copy_from_slice(&dz[n_in..]);
        }
        Ok(dxs)
    }
}

impl Parameterized for LstmLayer {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (n, t) in [
            ("w_i", &self.w_i),
            ("w_f", &self.w_f),
            ("w_c", &self.w_c),
            ("w_o", &self.w_o),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_c", &self.b_c),
            ("b_o", &self.b_o),
        ] {
            f(join(prefix, n), t);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        for (n, t) in [
            ("w_i", &mut self.w_i),
            ("w_f", &mut self.w_f),
            ("w_c", &mut self.w_c),
            ("w_o", &mut self.w_o),
            ("b_i", &mut self.b_i),
            ("b_f", &mut self.b_f),
            ("b_c", &mut self.b_c),
            ("b_o", &mut self.b_o),
        ] {
            f(join(prefix, n), t);
        }
    }
}

/// Two LSTM sublayers running in opposite time directions; their per-step
/// outputs are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmLayer,
    pub backward: LstmLayer,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

fn reversed(xs: &Tensor) -> Tensor {
    let mut out = xs.clone();
    let n = xs.rows();
    for t in 0..n {
        out.row_mut(t).copy_from_slice(xs.row(n - 1 - t));
    }
    out
}

impl BiLstmLayer {
    pub fn new(input_size: usize, hidden_size: usize, rng: &mut Rng) -> Self {
        BiLstmLayer {
            forward: LstmLayer::new(input_size, hidden_size, rng),
            backward: LstmLayer::new(input_size, hidden_size, rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size
    }

    pub fn forward(&self, xs: &Tensor) -> Result<(Tensor, BiLstmCache)> {
        self.forward_counted(xs, &NoCount)
    }

    pub fn forward_counted<S: MacSink>(&self, xs: &Tensor, sink: &S) -> Result<(Tensor, BiLstmCache)> {
        if self.forward.input_size != self.backward.input_size || self.forward.hidden_size != self.backward.hidden_size {
            return Err(Error::Dimension("bidirectional sublayers disagree in size".into()));
        }
        let (hf, fwd) = self.forward.forward_counted(xs, None, None, sink)?;
        let (hb, bwd) = self.backward.forward_counted(&reversed(xs), None, None, sink)?;
        let out = hf.add(&reversed(&hb))?;
        Ok((out, BiLstmCache { fwd, bwd }))
    }

    pub fn backward(&self, cache: &BiLstmCache, dout: &Tensor, grads: &mut BiLstmLayer) -> Result<Tensor> {
        let dxf = self.forward.backward(&cache.fwd, dout, &mut grads.forward)?;
        let dxb = self.backward.backward(&cache.bwd, &reversed(dout), &mut grads.backward)?;
        dxf.add(&reversed(&dxb))
    }
}

impl Parameterized for BiLstmLayer {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.forward.visit_params(&join(prefix, "fwd"), f);
        self.backward.visit_params(&join(prefix, "bwd"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.forward.visit_params_mut(&join(prefix, "fwd"), f);
        self.backward.visit_params_mut(&join(prefix, "bwd"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{check_param_grads, MacCounter};
    use crate::numerics::{finite_diff_grad, max_rel_error, rng_normal, DEFAULT_STEP};

    /// Weighted sum of outputs; the fixed weights make every output matter.
    fn probe_loss(hs: &Tensor) -> (f64, Tensor) {
        let w = hs.map(|_| 0.0);
        let mut w = w;
        for (k, v) in w.data_mut().iter_mut().enumerate() {
            *v = ((k * 7 % 11) as f64 - 5.0) / 5.0;
        }
        (hs.mul(&w).unwrap().sum(), w)
    }

    #[test]
    fn zero_parameters_stay_at_zero() {
        let l = LstmLayer::zeroed(3, 4);
        let xs = rng_normal(&mut Rng::new(1), &[5, 3], 0.0, 1.0).unwrap();
        let (hs, cache) = l.forward(&xs, None, None).unwrap();
        assert!(hs.data().iter().all(|&v| v == 0.0));
        // g = tanh(0) = 0 so the cell never charges
        assert!(cache.steps.iter().all(|s| s.tanh_c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn scalar_cell_hand_computation() {
        let l = LstmLayer::zeroed(1, 1);
        let c0 = 0.8;
        let (hs, cache) = l.forward(&Tensor::new(vec![1, 1], vec![2.0]).unwrap(), Some(&[0.3]), Some(&[c0])).unwrap();
        let c1 = 0.5 * c0;
        assert!((cache.steps[0].tanh_c[0] - c1.tanh()).abs() < 1e-15);
        assert!((hs.data()[0] - 0.5 * (0.5 * c0).tanh()).abs() < 1e-15);
    }

    #[test]
    fn empty_sequence_rejected() {
        let l = LstmLayer::new(2, 2, &mut Rng::new(0));
        assert!(l.forward(&Tensor::zeros(&[0, 2]), None, None).is_err());
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let l = LstmLayer::new(2, 3, &mut Rng::new(0));
        assert_eq!(l.b_f.data(), &[1.0; 3]);
    }

    #[test]
    fn sublayer_mac_count() {
        let l = LstmLayer::new(39, 16, &mut Rng::new(0));
        let c = MacCounter::new();
        l.forward_counted(&Tensor::zeros(&[3, 39]), None, None, &c).unwrap();
        assert_eq!(c.count(), 3 * 4 * 16 * (39 + 16 + 1));
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let l = LstmLayer::new(3, 4, &mut rng);
        let xs = rng_normal(&mut rng, &[7, 3], 0.0, 1.0).unwrap();
        let loss = |l: &LstmLayer, xs: &Tensor| probe_loss(&l.forward(xs, None, None).unwrap().0).0;
        let (hs, cache) = l.forward(&xs, None, None).unwrap();
        let (_, dhs) = probe_loss(&hs);
        let mut grads = l.zeros_like();
        let dxs = l.backward(&cache, &dhs, &mut grads).unwrap();
        let err = check_param_grads(&l, &grads, |m| Ok(loss(m, &xs)), DEFAULT_STEP).unwrap();
        assert!(err < 1e-4, "{err}");
        let ndx = finite_diff_grad(|t| Ok(loss(&l, t)), &xs, DEFAULT_STEP).unwrap();
        assert!(max_rel_error(&dxs, &ndx).unwrap() < 1e-4);
    }

    #[test]
    fn zero_backward_sublayer_equals_forward_lstm() {
        let mut rng = Rng::new(8);
        let fwd = LstmLayer::new(3, 5, &mut rng);
        let bi = BiLstmLayer { forward: fwd.clone(), backward: LstmLayer::zeroed(3, 5) };
        let xs = rng_normal(&mut rng, &[6, 3], 0.0, 1.0).unwrap();
        assert_eq!(bi.forward(&xs).unwrap().0, fwd.forward(&xs, None, None).unwrap().0);
    }

    #[test]
    fn swapping_sublayers_reverses_output() {
        let mut rng = Rng::new(9);
        let bi = BiLstmLayer::new(3, 4, &mut rng);
        let swapped = BiLstmLayer { forward: bi.backward.clone(), backward: bi.forward.clone() };
        let xs = rng_normal(&mut rng, &[6, 3], 0.0, 1.0).unwrap();
        let a = bi.forward(&xs).unwrap().0;
        let b = swapped.forward(&reversed(&xs)).unwrap().0;
        // summation order differs (hf + hb vs hb + hf) but addition commutes exactly
        assert_eq!(reversed(&a), b);
    }

    #[test]
    fn bilstm_gradients() {
        let mut rng = Rng::new(10);
        let bi = BiLstmLayer::new(3, 4, &mut rng);
        let xs = rng_normal(&mut rng, &[5, 3], 0.0, 1.0).unwrap();
        let (out, cache) = bi.forward(&xs).unwrap();
        let (_, dout) = probe_loss(&out);
        let mut grads = bi.zeros_like();
        let dxs = bi.backward(&cache, &dout, &mut grads).unwrap();
        let loss = |m: &BiLstmLayer, xs: &Tensor| Ok(probe_loss(&m.forward(xs)?.0).0);
        assert!(check_param_grads(&bi, &grads, |m| loss(m, &xs), DEFAULT_STEP).unwrap() < 1e-4);
        let ndx = finite_diff_grad(|t| loss(&bi, t), &xs, DEFAULT_STEP).unwrap();
        assert!(max_rel_error(&dxs, &ndx).unwrap() < 1e-4);
    }
}
