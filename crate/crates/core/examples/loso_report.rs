//! Leave-one-subject-out evaluation on a small synthetic cohort, written as
//! the same CSV reports the CLI produces.
//!
//! cargo run --release --example loso_report -- [out_dir]

use wearmil::cohort::{Horizon, Task};
use wearmil::eval::{run_loso, write_pooled_csv, write_report_csv, write_summary_csv, EvalConfig, ModalitySubset};
use wearmil::model::ModelConfig;
use wearmil::synth::{generate_cohort, SynthConfig};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let ds = generate_cohort(&SynthConfig {
        patients: 12,
        ..SynthConfig::default()
    })?
    .dataset;
    let cfg = EvalConfig {
        model: ModelConfig {
            embed_dim: 32,
            encoder_hidden: [32; 3],
            attention_dim: 16,
            ..ModelConfig::default()
        },
        seed: 1,
        ..EvalConfig::default()
    };
    let report = run_loso(&ds, Task::Handgrip, Horizon::M6, ModalitySubset::ALL, &cfg)?;
    for f in &report.folds {
        let p = &f.predictions[0];
        println!(
            "{}: label {} predicted {} (train {}, val {}, {} epochs)",
            f.patient,
            p.label.name(),
            p.predicted.name(),
            f.train_patients.len(),
            f.val_patients.len(),
            f.history.epochs.len()
        );
    }
    let (ba, ba_sd) = report.balanced_accuracy();
    let (f1, f1_sd) = report.f1();
    println!("per-fold balanced accuracy {ba:.3} ± {ba_sd:.3}, macro F1 {f1:.3} ± {f1_sd:.3}");
    println!(
        "pooled over {} bags: balanced accuracy {:.3}, macro F1 {:.3}",
        report.n_predictions(),
        report.pooled_balanced_accuracy()?,
        report.pooled_f1()?
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let reports = [report];
        write_report_csv(dir.join("report.csv"), &reports)?;
        write_summary_csv(dir.join("summary.csv"), &reports)?;
        write_pooled_csv(dir.join("pooled_summary.csv"), &reports)?;
        println!("reports written to {}", dir.display());
    }
    Ok(())
}
