//! Generate a synthetic cohort, write it as CSV and compare its class
//! balance with the Bayes oracle for the planted signal.
//!
//! cargo run --example synth_cohort -- [out_dir]

use wearmil::cohort::{Horizon, Modality, Task};
use wearmil::ingest::{build_labels, summarize_cohort};
use wearmil::synth::{generate_cohort, oracle_accuracy, SynthConfig};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let cfg = SynthConfig::default();
    let cohort = generate_cohort(&cfg)?;
    let ds = &cohort.dataset;
    let labels = build_labels(&ds.clinical, &cfg.margins)?;
    let summary = summarize_cohort(&ds.tables, &ds.clinical, &labels, &cfg.windows);
    for task in Task::ALL {
        for h in Horizon::ALL {
            let [w, s, i] = summary.patients(task, h);
            let inst: Vec<String> = Modality::ALL
                .iter()
                .map(|&m| format!("{m} {:?}", summary.instances(m, task, h)))
                .collect();
            println!("{task} {h}: classes {w}/{s}/{i}; instances {}", inst.join(", "));
        }
    }
    for signal in [0.0, 0.5, 1.0, 2.0] {
        let o = oracle_accuracy(&SynthConfig { signal, ..cfg.clone() }, 20_000)?;
        println!("oracle balanced accuracy at s = {signal}: {:.3} ± {:.3}", o.balanced_accuracy, o.std_error);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        for p in cohort.write_dir(&dir)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}
