//! Forward pass and exact reverse-mode gradients of the attention-MIL
//! network.
//!
//! Per instance j of modality m:
//!
//! ```text
//! e_j   = W2 relu(W1 x_j + b1) + b2          modality encoder f_m
//! ẽ_j   = e_j + v_m                          modality tag
//! h_j   = relu(Wφ ẽ_j + bφ)                  projector φ
//! ℓ_j   = w_aᵀ tanh(V_a h_j + b_a)           gated-tanh attention score
//! ```
//!
//! Bag level: `α = softmax(ℓ)`, `z = Σ α_j h_j`, `ŷ = W_g z + b_g`, and the
//! loss is `-w_y log softmax(ŷ)_y`.

use super::linalg::{affine, affine_backward, axpy, dot, log_sum_exp, softmax};
use super::params::Params;
use crate::bags::Bag;
use crate::cohort::{DeltaClass, Modality};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct InstanceCache {
    modality: Modality,
    row: usize,
    hidden_pre: Vec<f64>,
    tagged: Vec<f64>,
    proj_pre: Vec<f64>,
    h: Vec<f64>,
    gate: Vec<f64>,
}

/// Logits, attention weights and the activations needed for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// One weight per instance, in concatenation order (phys, sleep, hrv).
    pub attention: Vec<f64>,
    /// (modality, row) of each attention weight.
    pub instances: Vec<(Modality, usize)>,
    /// Pooled bag representation z.
    pub pooled: Vec<f64>,
    caches: Vec<InstanceCache>,
}

impl ForwardTrace {
    pub fn predicted(&self) -> DeltaClass {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        DeltaClass::from_code(best).expect("three classes")
    }

    /// Attention weights belonging to one modality, in row order.
    pub fn attention_for(&self, modality: Modality) -> Vec<f64> {
        self.instances
            .iter()
            .zip(&self.attention)
            .filter(|((m, _), _)| *m == modality)
            .map(|(_, a)| *a)
            .collect()
    }
}

fn check_finite(values: &[f64], layer: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Encoder plus modality tag for one instance: returns (hidden pre-activation, ẽ).
fn encode_one(params: &Params, modality: Modality, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let enc = &params.encoders[modality.index()];
    if x.len() != enc.hidden.in_dim {
        return Err(Error::Shape(format!(
            "{modality} instance has {} features, encoder expects {}",
            x.len(),
            enc.hidden.in_dim
        )));
    }
    let mut hidden_pre = vec![0.0; enc.hidden.out_dim];
    affine(&enc.hidden.weight, &enc.hidden.bias, x, &mut hidden_pre);
    let mut hidden = hidden_pre.clone();
    relu_in_place(&mut hidden);
    let mut tagged = vec![0.0; enc.output.out_dim];
    affine(&enc.output.weight, &enc.output.bias, &hidden, &mut tagged);
    axpy(1.0, &params.modality_embed[modality.index()], &mut tagged);
    Ok((hidden_pre, tagged))
}

/// Projector and attention score: returns (projector pre-activation, h, tanh gate, score).
fn score_one(params: &Params, tagged: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let mut proj_pre = vec![0.0; params.projector.out_dim];
    affine(&params.projector.weight, &params.projector.bias, tagged, &mut proj_pre);
    let mut h = proj_pre.clone();
    relu_in_place(&mut h);
    let mut gate = vec![0.0; params.attention.out_dim];
    affine(&params.attention.weight, &params.attention.bias, &h, &mut gate);
    gate.iter_mut().for_each(|u| *u = u.tanh());
    let score = dot(&params.attention_out, &gate);
    (proj_pre, h, gate, score)
}

/// Tagged instance embeddings ẽ, one row per instance in concatenation order.
pub fn encode_instances(params: &Params, bag: &Bag) -> Result<Vec<Vec<f64>>> {
    if bag.is_empty() {
        return Err(Error::invalid("cannot encode an empty bag"));
    }
    bag.instance_index()
        .map(|(m, i)| encode_one(params, m, bag.modality(m).row(i)).map(|(_, e)| e))
        .collect()
}

/// Attention pooling over tagged embeddings: returns (z, α).
pub fn attention_pool(params: &Params, embeddings: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut hs = Vec::with_capacity(embeddings.len());
    let mut scores = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        let (_, h, _, s) = score_one(params, e);
        hs.push(h);
        scores.push(s);
    }
    let alpha = softmax(&scores);
    let mut z = vec![0.0; params.projector.out_dim];
    for (a, h) in alpha.iter().zip(&hs) {
        axpy(*a, h, &mut z);
    }
    (z, alpha)
}

pub fn forward(params: &Params, bag: &Bag) -> Result<ForwardTrace> {
    if bag.is_empty() {
        return Err(Error::invalid("cannot run forward on an empty bag"));
    }
    let n = bag.len();
    let mut caches = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    let mut instances = Vec::with_capacity(n);
    for (m, i) in bag.instance_index() {
        let (hidden_pre, tagged) = encode_one(params, m, bag.modality(m).row(i))?;
        check_finite(&tagged, "encoder")?;
        let (proj_pre, h, gate, score) = score_one(params, &tagged);
        check_finite(&h, "projector")?;
        if !score.is_finite() {
            return Err(Error::NonFinite { layer: "attention" });
        }
        scores.push(score);
        instances.push((m, i));
        caches.push(InstanceCache {
            modality: m,
            row: i,
            hidden_pre,
            tagged,
            proj_pre,
            h,
            gate,
        });
    }
    let attention = softmax(&scores);
    let mut pooled = vec![0.0; params.projector.out_dim];
    for (a, c) in attention.iter().zip(&caches) {
        axpy(*a, &c.h, &mut pooled);
    }
    let mut logits = vec![0.0; params.classifier.out_dim];
    affine(&params.classifier.weight, &params.classifier.bias, &pooled, &mut logits);
    check_finite(&logits, "classifier")?;
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        logits,
        probs,
        attention,
        instances,
        pooled,
        caches,
    })
}

/// Class-weighted cross-entropy of a trace.
pub fn weighted_loss(trace: &ForwardTrace, label: DeltaClass, class_weights: &[f64; 3]) -> f64 {
    let y = label.code();
    class_weights[y] * (log_sum_exp(&trace.logits) - trace.logits[y])
}

/// Adds `scale · ∂loss/∂θ` into `grads` and returns the (unscaled) loss.
pub fn backward(
    params: &Params,
    bag: &Bag,
    trace: &ForwardTrace,
    label: DeltaClass,
    class_weights: &[f64; 3],
    scale: f64,
    grads: &mut Params,
) -> f64 {
    let y = label.code();
    let wy = class_weights[y];
    let loss = weighted_loss(trace, label, class_weights);

    let dlogits: Vec<f64> = trace
        .probs
        .iter()
        .enumerate()
        .map(|(c, p)| scale * wy * (p - if c == y { 1.0 } else { 0.0 }))
        .collect();
    if dlogits.iter().all(|g| *g == 0.0) {
        return loss;
    }

    let d = params.projector.out_dim;
    let mut dpooled = vec![0.0; d];
    affine_backward(
        &params.classifier.weight,
        &trace.pooled,
        &dlogits,
        &mut grads.classifier.weight,
        &mut grads.classifier.bias,
        Some(&mut dpooled),
    );

    // Softmax over attention scores.
    let dalpha: Vec<f64> = trace.caches.iter().map(|c| dot(&dpooled, &c.h)).collect();
    let mean: f64 = trace.attention.iter().zip(&dalpha).map(|(a, g)| a * g).sum();

    let mut dh = vec![0.0; d];
    let mut tmp_d = vec![0.0; d];
    let mut dgate = vec![0.0; params.attention.out_dim];
    let mut dtagged = vec![0.0; d];
    for ((cache, alpha), ga) in trace.caches.iter().zip(&trace.attention).zip(&dalpha) {
        let dscore = alpha * (ga - mean);

        dh.iter_mut().zip(&dpooled).for_each(|(o, g)| *o = alpha * g);

        axpy(dscore, &cache.gate, &mut grads.attention_out);
        for ((dg, w), t) in dgate.iter_mut().zip(&params.attention_out).zip(&cache.gate) {
            *dg = dscore * w * (1.0 - t * t);
        }
        affine_backward(
            &params.attention.weight,
            &cache.h,
            &dgate,
            &mut grads.attention.weight,
            &mut grads.attention.bias,
            Some(&mut tmp_d),
        );
        axpy(1.0, &tmp_d, &mut dh);

        for (g, pre) in dh.iter_mut().zip(&cache.proj_pre) {
            if *pre <= 0.0 {
                *g = 0.0;
            }
        }
        affine_backward(
            &params.projector.weight,
            &cache.tagged,
            &dh,
            &mut grads.projector.weight,
            &mut grads.projector.bias,
            Some(&mut dtagged),
        );

        let mi = cache.modality.index();
        axpy(1.0, &dtagged, &mut grads.modality_embed[mi]);

        let enc = &params.encoders[mi];
        let genc = &mut grads.encoders[mi];
        let hidden: Vec<f64> = cache.hidden_pre.iter().map(|v| v.max(0.0)).collect();
        let mut dhidden = vec![0.0; enc.hidden.out_dim];
        affine_backward(
            &enc.output.weight,
            &hidden,
            &dtagged,
            &mut genc.output.weight,
            &mut genc.output.bias,
            Some(&mut dhidden),
        );
        for (g, pre) in dhidden.iter_mut().zip(&cache.hidden_pre) {
            if *pre <= 0.0 {
                *g = 0.0;
            }
        }
        let x = bag.modality(cache.modality).row(cache.row);
        affine_backward(
            &enc.hidden.weight,
            x,
            &dhidden,
            &mut genc.hidden.weight,
            &mut genc.hidden.bias,
            None,
        );
    }
    loss
}

/// Loss and full parameter gradient for one bag.
pub fn loss_and_grad(
    params: &Params,
    bag: &Bag,
    label: DeltaClass,
    class_weights: &[f64; 3],
) -> Result<(f64, Params)> {
    if class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("class weights must be finite and non-negative"));
    }
    let trace = forward(params, bag)?;
    let mut grads = params.zeros_like();
    let loss = backward(params, bag, &trace, label, class_weights, 1.0, &mut grads);
    Ok((loss, grads))
}
