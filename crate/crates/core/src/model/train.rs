use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{backward, forward, weighted_loss};
use super::MilModel;
use crate::bags::Bag;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch, measured before each update.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Mean class-weighted loss over `bags`.
pub fn mean_loss(model: &MilModel, bags: &[Bag], class_weights: &[f64; 3]) -> Result<f64> {
    let mut total = 0.0;
    for bag in bags {
        total += weighted_loss(&forward(&model.params, bag)?, bag.label, class_weights);
    }
    Ok(total / bags.len() as f64)
}

/// Trains with shuffled gradient accumulation and early stopping on
/// validation loss. Returns the parameters from the best validation epoch.
///
/// Training stops once `patience` consecutive epochs pass without a strict
/// improvement (so `patience = 0` runs exactly one epoch), or at
/// `max_epochs`.
pub fn train(
    mut model: MilModel,
    train_bags: &[Bag],
    val_bags: &[Bag],
    class_weights: &[f64; 3],
) -> Result<(MilModel, History)> {
    if train_bags.is_empty() || val_bags.is_empty() {
        return Err(Error::invalid("training and validation bag sets must be non-empty"));
    }
    let cfg = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(model.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_bags.len()).collect();
    let mut grads = model.params.zeros_like();
    let mut step = model.optimizer.step;

    let mut history = History {
        best_val_loss: f64::INFINITY,
        ..History::default()
    };
    let mut best = model.clone();
    let mut since_best = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for group in order.chunks(cfg.grad_accum) {
            grads.scale(0.0);
            let scale = 1.0 / group.len() as f64;
            for &i in group {
                let bag = &train_bags[i];
                let trace = forward(&model.params, bag)?;
                epoch_loss += backward(&model.params, bag, &trace, bag.label, class_weights, scale, &mut grads);
            }
            step += 1;
            model.step(&grads, step)?;
        }
        if !model.params.all_finite() {
            return Err(Error::NonFinite { layer: "parameters" });
        }
        let train_loss = epoch_loss / train_bags.len() as f64;
        let val_loss = mean_loss(&model, val_bags, class_weights)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    Ok((best, history))
}
