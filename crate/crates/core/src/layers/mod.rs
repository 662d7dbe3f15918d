//! Forward and backward passes for every layer kind the models compose.
//!
//! Each forward pass is generic over a [`MacSink`] so the same loops serve as
//! the instrumented multiply-accumulate counter used to audit the cost model.
//! Backward passes accumulate into a gradient value of the layer's own type.

mod attention;
mod conv;
mod fc;
mod lstm;

use std::cell::Cell;

pub use attention::{AttentionBlock, AttentionCache};
pub use conv::{ConvCache, ConvLayer, ConvOp, ConvStack, ConvStackCache, PoolCache, PoolLayer};
pub use fc::{Activation, FcCache, FcLayer};
pub use lstm::{BiLstmCache, BiLstmLayer, LstmCache, LstmLayer};

use crate::error::{Error, Result};
use crate::numerics::{finite_diff_grad, max_rel_error, Rng, Tensor};

/// Receives one call per executed multiply-accumulate.
pub trait MacSink {
    fn mac(&self);
}

/// Discards counts; compiles away.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoCount;

impl MacSink for NoCount {
    #[inline(always)]
    fn mac(&self) {}
}

#[derive(Debug, Default)]
pub struct MacCounter(Cell<u64>);

impl MacCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.0.get()
    }
}

impl MacSink for MacCounter {
    #[inline]
    fn mac(&self) {
        self.0.set(self.0.get() + 1);
    }
}

/// Named parameter tensors of a layer or model.
pub trait Parameterized {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor));

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit_params("", &mut |n, t| out.push((n, t)));
        out
    }

    fn param_count(&self) -> u64 {
        let mut n = 0u64;
        self.visit_params("", &mut |_, t| n += t.len() as u64);
        n
    }

    /// Same structure with every parameter set to zero; used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.visit_params_mut("", &mut |_, t| t.data_mut().fill(0.0));
        z
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `uniform(-s, s)` with `s = 1/sqrt(fan_in)`.
pub(crate) fn init_uniform(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let s = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-s, s)).collect()).unwrap()
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for i in 0..logits.rows() {
        let p = softmax(logits.row(i));
        out.row_mut(i).copy_from_slice(&p);
    }
    out
}

/// Mean cross-entropy of `softmax(logits)` against class indices, with the
/// gradient `(softmax - onehot) / batch`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "softmax_xent: logits {:?} for {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let (batch, classes) = (logits.rows(), logits.cols());
    if batch == 0 {
        return Err(Error::Dimension("softmax_xent: empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Parameter(format!("label {bad} out of range for {classes} classes")));
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let g = grad.row_mut(i);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = (row[j] - lse).exp() / batch as f64;
        }
        g[label] -= 1.0 / batch as f64;
    }
    let loss = loss / batch as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric("cross-entropy is not finite".into()));
    }
    Ok((loss, grad))
}

/// Largest relative error between analytic parameter gradients and central
/// finite differences of `loss` around `model`.
pub fn check_param_grads<M, F>(model: &M, analytic: &M, mut loss: F, h: f64) -> Result<f64>
where
    M: Parameterized + Clone,
    F: FnMut(&M) -> Result<f64>,
{
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Tensor> = analytic.named_params().into_iter().map(|(_, t)| t.clone()).collect();
    if grads.len() != names.len() {
        return Err(Error::Dimension("gradient structure differs from the model".into()));
    }
    let mut worst: f64 = 0.0;
    for (idx, (name, grad)) in names.iter().zip(&grads).enumerate() {
        let current = model.named_params()[idx].1.clone();
        let numeric = finite_diff_grad(
            |t| {
                let mut probe = model.clone();
                let mut k = 0;
                probe.visit_params_mut("", &mut |_, p| {
                    if k == idx {
                        p.data_mut().copy_from_slice(t.data());
                    }
                    k += 1;
                });
                loss(&probe)
            },
            &current,
            h,
        )?;
        let err = max_rel_error(grad, &numeric).map_err(|e| Error::Dimension(format!("{name}: {e}")))?;
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rng_normal, DEFAULT_STEP};

    #[test]
    fn uniform_logits_give_ln_classes() {
        let (loss, _) = softmax_xent(&Tensor::zeros(&[3, 39]), &[0, 5, 38]).unwrap();
        assert!((loss - 39f64.ln()).abs() < 1e-12);
        assert!((loss - 3.6636).abs() < 1e-4);
    }

    #[test]
    fn saturated_true_class() {
        let mut logits = Tensor::zeros(&[1, 39]);
        logits.data_mut()[7] = 1000.0;
        let (loss, _) = softmax_xent(&logits, &[7]).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(softmax_xent(&Tensor::zeros(&[1, 3]), &[3]), Err(Error::Parameter(_))));
    }

    #[test]
    fn xent_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(seed);
            let logits = rng_normal(&mut rng, &[4, 6], 0.0, 2.0).unwrap();
            let labels = [0, 5, 2, 2];
            let (_, grad) = softmax_xent(&logits, &labels).unwrap();
            let numeric = finite_diff_grad(|t| softmax_xent(t, &labels).map(|r| r.0), &logits, DEFAULT_STEP).unwrap();
            assert!(max_rel_error(&grad, &numeric).unwrap() < 1e-4);
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = Rng::new(2);
        let p = softmax_rows(&rng_normal(&mut rng, &[10, 7], 0.0, 30.0).unwrap());
        for i in 0..10 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn counter_counts() {
        let c = MacCounter::new();
        for _ in 0..5 {
            c.mac();
        }
        assert_eq!(c.count(), 5);
    }
}
