use crate::error::{Error, Result};
use crate::layers::Parameterized;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// any parameter changes.
pub fn adam_step<M: Parameterized>(params: &mut M, grads: &M, state: &mut AdamState, lr: f64) -> Result<()> {
    let gs = grads.named_params();
    for (name, g) in &gs {
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("gradient of `{name}` is not finite")));
        }
    }
    if state.m.is_empty() {
        state.m = gs.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != gs.len() {
        return Err(Error::Dimension("optimizer state does not match the parameter list".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    let mut idx = 0;
    let mut shape_err = None;
    params.visit_params_mut("", &mut |name, p| {
        let g = gs[idx].1.data();
        if g.len() != p.len() || state.m[idx].len() != p.len() {
            shape_err.get_or_insert(name);
            idx += 1;
            return;
        }
        let (m, v) = (&mut state.m[idx], &mut state.v[idx]);
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= lr * mhat / (vhat.sqrt() + EPSILON);
        }
        idx += 1;
    });
    match shape_err {
        Some(name) => Err(Error::Dimension(format!("gradient shape differs for `{name}`"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Activation, FcLayer};
    use crate::numerics::{Rng, Tensor};

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = FcLayer::new(3, 2, Activation::Identity, &mut Rng::new(1));
        let before = p.clone();
        let g = p.zeros_like();
        let mut s = AdamState::new();
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = FcLayer::new(2, 2, Activation::Identity, &mut Rng::new(2));
        let before = p.clone();
        let mut g = p.zeros_like();
        g.weights = Tensor::new(vec![2, 2], vec![0.3, -2.0, 5.0, -1e-3]).unwrap();
        let mut s = AdamState::new();
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        for ((a, b), gv) in p.weights.data().iter().zip(before.weights.data()).zip(g.weights.data()) {
            // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
            let expect = 0.01 * gv / (gv.abs() + EPSILON);
            assert!(((b - a) - expect).abs() < 1e-12);
            assert!(((b - a).abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = FcLayer::new(2, 1, Activation::Identity, &mut Rng::new(3));
        let before = p.clone();
        let mut g = p.zeros_like();
        g.bias.data_mut()[0] = f64::NAN;
        assert!(adam_step(&mut p, &g, &mut AdamState::new(), 0.01).unwrap_err().is_numeric());
        assert_eq!(p, before);
    }
}
