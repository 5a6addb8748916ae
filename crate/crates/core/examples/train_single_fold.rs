//! One fold by hand: fit preprocessing on training patients, build bags,
//! train with early stopping, then inspect predictions and the attention
//! weights of a held-out bag. The trained model is checkpointed and reloaded.
//!
//! cargo run --release --example train_single_fold

use std::collections::BTreeSet;

use wearmil::bags::build_bags;
use wearmil::cohort::{Horizon, Modality, PatientId, Task};
use wearmil::eval::{class_weights, predict};
use wearmil::ingest::build_labels;
use wearmil::model::{checkpoint, init_model, train, ModelConfig};
use wearmil::preprocess::{fit_stats, transform_all, DEFAULT_EPSILON};
use wearmil::synth::{generate_cohort, SynthConfig};

fn main() -> anyhow::Result<()> {
    let cfg = SynthConfig {
        patients: 15,
        ..SynthConfig::default()
    };
    let ds = generate_cohort(&cfg)?.dataset;
    let labels: Vec<_> = build_labels(&ds.clinical, &cfg.margins)?
        .into_iter()
        .filter(|l| l.task == Task::Handgrip && l.horizon == Horizon::M6)
        .collect();
    let patients: Vec<PatientId> = labels.iter().map(|l| l.patient.clone()).collect();
    let (test, rest) = patients.split_last().expect("cohort is not empty");
    let (val, train_ids) = rest.split_at(3);
    let training: BTreeSet<PatientId> = train_ids.iter().cloned().collect();

    let stats = fit_stats(&ds.tables, &training, DEFAULT_EPSILON)?;
    let tables = transform_all(&ds.tables, &stats)?;
    let bags = build_bags(&tables, &labels, &cfg.windows, &ds.clinical)?.bags;
    let pick = |ids: &[PatientId]| bags.iter().filter(|b| ids.contains(&b.patient)).cloned().collect::<Vec<_>>();
    let (train_bags, val_bags, test_bags) = (pick(train_ids), pick(val), pick(std::slice::from_ref(test)));

    let weights = class_weights(&train_bags.iter().map(|b| b.label).collect::<Vec<_>>());
    let model_cfg = ModelConfig {
        input_dims: tables.widths(),
        embed_dim: 32,
        encoder_hidden: [32; 3],
        attention_dim: 16,
        ..ModelConfig::default()
    };
    let (model, history) = train(init_model(&model_cfg, 7)?, &train_bags, &val_bags, &weights.weights)?;
    println!(
        "{} train / {} val bags; stopped after {} epochs, best epoch {} (val loss {:.4})",
        train_bags.len(),
        val_bags.len(),
        history.epochs.len(),
        history.best_epoch,
        history.best_val_loss
    );

    for p in predict(&model, &test_bags)? {
        println!(
            "held-out {}: label {}, predicted {}, probs [{:.3}, {:.3}, {:.3}]",
            p.patient, p.label.name(), p.predicted.name(), p.probs[0], p.probs[1], p.probs[2]
        );
        for m in Modality::ALL {
            let share: f64 = p.attention.iter().filter(|a| a.modality == m).map(|a| a.alpha).sum();
            println!("  attention on {m}: {share:.3}");
        }
        let top = p.attention.iter().max_by(|a, b| a.alpha.total_cmp(&b.alpha)).unwrap();
        println!("  strongest instance: {} on {} (alpha {:.3})", top.modality, top.date, top.alpha);
    }

    let text = checkpoint::to_string(&model);
    let reloaded = checkpoint::from_str(&text)?;
    println!(
        "checkpoint: {} bytes, fingerprint {} round-trips: {}",
        text.len(),
        &model.fingerprint()[..16],
        reloaded.fingerprint() == model.fingerprint()
    );
    Ok(())
}
