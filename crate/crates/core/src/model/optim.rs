//! Adaptive-moment optimizer with decoupled weight decay.

use super::params::{Params, TensorKind};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates, one buffer per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_params(params: &Params) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        AdamState::with_lengths(&shapes)
    }

    pub fn with_lengths(lengths: &[usize]) -> Self {
        AdamState {
            step: 0,
            first: lengths.iter().map(|n| vec![0.0; *n]).collect(),
            second: lengths.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    /// Bias-corrected update of one tensor at step `t` (1-based). Decay, if
    /// any, is `param -= lr · weight_decay · param`, applied before the
    /// moment step.
    pub fn update_slot(&mut self, slot: usize, param: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64, t: u64) {
        let bc1 = 1.0 - BETA1.powi(t as i32);
        let bc2 = 1.0 - BETA2.powi(t as i32);
        let m = &mut self.first[slot];
        let v = &mut self.second[slot];
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            if weight_decay != 0.0 {
                param[i] -= lr * weight_decay * param[i];
            }
            param[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
}

/// One optimizer step over all tensors. Weight decay touches only weight
/// matrices, never biases or modality embeddings.
pub fn optimizer_step(
    params: &mut Params,
    state: &mut AdamState,
    grads: &Params,
    lr: f64,
    weight_decay: f64,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("optimizer step index is 1-based"));
    }
    let grad_tensors = grads.tensors();
    let tensors = params.tensors_mut();
    if tensors.len() != grad_tensors.len() || tensors.len() != state.first.len() {
        return Err(Error::Shape("gradient/optimizer tensor count mismatch".into()));
    }
    for (slot, (p, g)) in tensors.into_iter().zip(grad_tensors).enumerate() {
        if p.data.len() != g.data.len() || p.data.len() != state.first[slot].len() {
            return Err(Error::Shape(format!("tensor {} shape mismatch", p.name)));
        }
        let decay = if p.kind == TensorKind::Weight { weight_decay } else { 0.0 };
        state.update_slot(slot, p.data, g.data, lr, decay, t);
    }
    state.step = t;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = ModelConfig::default();
        let mut p = Params::init(&cfg, 5);
        let before = p.clone();
        let mut s = AdamState::for_params(&p);
        let g = p.zeros_like();
        for t in 1..=3 {
            optimizer_step(&mut p, &mut s, &g, 1e-3, 0.0, t).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = w^2, gradient 2w, lr 0.1. The moment terms carry w past the
        // minimum around step 11, so |w| shrinks strictly only until then.
        let mut w = [1.0f64];
        let mut s = AdamState::with_lengths(&[1]);
        let (mut m, mut v, mut reference) = (0.0f64, 0.0f64, 1.0f64);
        let mut prev = 1.0f64;
        for t in 1..=50u64 {
            let g = [2.0 * w[0]];
            s.update_slot(0, &mut w, &g, 0.1, 0.0, t);

            let gr = 2.0 * reference;
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32));
            reference -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((w[0] - reference).abs() < 1e-12, "step {t}");

            if t <= 11 {
                assert!(w[0].abs() < prev, "step {t}");
            }
            prev = w[0].abs();
        }
        assert!(w[0].abs() < 0.01);
    }

    #[test]
    fn decay_skips_biases_and_embeddings() {
        let cfg = ModelConfig::default();
        let mut p = Params::init(&cfg, 5);
        let before = p.clone();
        let mut s = AdamState::for_params(&p);
        let g = p.zeros_like();
        optimizer_step(&mut p, &mut s, &g, 1e-2, 0.5, 1).unwrap();
        assert_eq!(p.modality_embed, before.modality_embed);
        assert_eq!(p.classifier.bias, before.classifier.bias);
        assert_ne!(p.classifier.weight, before.classifier.weight);
        for (a, b) in p.classifier.weight.iter().zip(&before.classifier.weight) {
            assert_eq!(*a, b - 1e-2 * 0.5 * b);
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let cfg = ModelConfig::default();
        let run = || {
            let mut p = Params::init(&cfg, 9);
            let mut s = AdamState::for_params(&p);
            let mut g = p.clone();
            g.scale(0.01);
            for t in 1..=5 {
                optimizer_step(&mut p, &mut s, &g, 1e-3, 1e-4, t).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }
}
