//! ECG to HRV: detect R peaks on a synthetic five-minute trace, build the NN
//! series and compute time, frequency and Poincaré indices.
//!
//! cargo run --example hrv_from_ecg

use wearmil::hrv::{
    clean_nn, detect_r_peaks_with, hrv_frequency_domain, hrv_nonlinear, hrv_time_domain, peaks_to_nn, HrvFeatures,
    PeakDetectorConfig, HRV_FEATURE_NAMES,
};
use wearmil::synth::{synthetic_ecg, EcgSynthConfig};

fn main() -> anyhow::Result<()> {
    let cfg = EcgSynthConfig {
        mean_bpm: 72.0,
        ..EcgSynthConfig::default()
    };
    let ecg = synthetic_ecg(&cfg, 42)?;
    let peaks = detect_r_peaks_with(&ecg.samples, cfg.fs, &PeakDetectorConfig::default())?;
    let hits = ecg
        .r_peaks
        .iter()
        .filter(|&&p| peaks.iter().any(|&q| q.abs_diff(p) <= 3))
        .count();
    println!(
        "{} samples at {} Hz: {} peaks detected, {hits}/{} planted peaks within 3 samples",
        ecg.samples.len(),
        cfg.fs,
        peaks.len(),
        ecg.r_peaks.len()
    );

    let nn = clean_nn(&peaks_to_nn(&peaks, cfg.fs)?)?;
    let features = hrv_time_domain(&nn)?
        .merge(&hrv_frequency_domain(&nn)?)
        .merge(&hrv_nonlinear(&nn)?);
    print_features(&features);
    Ok(())
}

fn print_features(f: &HrvFeatures) {
    for (name, v) in HRV_FEATURE_NAMES.iter().zip(f.values()) {
        match v {
            Some(x) => println!("  {name:<10} {x:>12.4}"),
            None => println!("  {name:<10} {:>12}", "missing"),
        }
    }
}
