//! Attention-based multi-instance classifier with a self-contained
//! gradient engine.
//!
//! All math is `f64`. A [`MilModel`] owns its configuration, parameters and
//! optimizer state, and round-trips bit-exactly through
//! [`checkpoint`](crate::model::checkpoint).

mod accounting;
pub mod checkpoint;
mod linalg;
mod network;
mod optim;
mod params;
mod train;

pub use accounting::{count_params_flops, Accounting, REPORTED_FLOPS_G, REPORTED_PARAMS_M};
pub use network::{attention_pool, backward, encode_instances, forward, loss_and_grad, weighted_loss, ForwardTrace};
pub use optim::{optimizer_step, AdamState, BETA1, BETA2, EPSILON as ADAM_EPSILON};
pub use params::{Encoder, Linear, Params, TensorKind, TensorMut, TensorRef};
pub use train::{mean_loss, train, EpochRecord, History};

use crate::bags::Bag;
use crate::cohort::DeltaClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Feature count per modality (phys, sleep, hrv).
    pub input_dims: [usize; 3],
    pub embed_dim: usize,
    pub encoder_hidden: [usize; 3],
    pub attention_dim: usize,
    pub classes: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Bags per optimizer step.
    pub grad_accum: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dims: [12, 8, 10],
            embed_dim: 128,
            encoder_hidden: [128; 3],
            attention_dim: 64,
            classes: DeltaClass::COUNT,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            max_epochs: 100,
            patience: 10,
            grad_accum: 8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.input_dims.iter().chain(&self.encoder_hidden).all(|d| *d >= 1)
            && self.embed_dim >= 1
            && self.attention_dim >= 1;
        if !dims_ok {
            return Err(Error::invalid("all model dimensions must be at least 1"));
        }
        if self.classes != DeltaClass::COUNT {
            return Err(Error::invalid(format!("class count must be {}", DeltaClass::COUNT)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        if self.max_epochs == 0 || self.grad_accum == 0 {
            return Err(Error::invalid("max_epochs and grad_accum must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilModel {
    pub config: ModelConfig,
    pub seed: u64,
    pub params: Params,
    pub optimizer: AdamState,
}

/// Xavier-uniform weights from a ChaCha8 stream seeded by `seed`; zero
/// biases; modality tags drawn with fan-in = fan-out = D.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<MilModel> {
    config.validate()?;
    let params = Params::init(config, seed);
    let optimizer = AdamState::for_params(&params);
    Ok(MilModel {
        config: config.clone(),
        seed,
        params,
        optimizer,
    })
}

impl MilModel {
    pub fn forward(&self, bag: &Bag) -> Result<ForwardTrace> {
        forward(&self.params, bag)
    }

    pub fn loss_and_grad(&self, bag: &Bag, class_weights: &[f64; 3]) -> Result<(f64, Params)> {
        loss_and_grad(&self.params, bag, bag.label, class_weights)
    }

    pub fn step(&mut self, grads: &Params, t: u64) -> Result<()> {
        optimizer_step(
            &mut self.params,
            &mut self.optimizer,
            grads,
            self.config.learning_rate,
            self.config.weight_decay,
            t,
        )
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Hash of every parameter bit pattern, for cheap equality checks.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in self.params.tensors() {
            h.update(t.name.as_bytes());
            for v in t.data {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
