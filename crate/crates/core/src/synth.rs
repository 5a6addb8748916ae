//! Synthetic cohorts with a planted class signal, their Bayes-oracle
//! accuracy, and synthetic ECG traces.
//!
//! Every (patient, horizon) gets a class `c` shared by both tasks. Each
//! in-window instance carries features `offset + scale · (z + (c - 1) · s · mask)`
//! with `z ~ N(0, 1)`, so after z-scoring the class means sit `s` standard
//! units apart on masked features. A few pre-window rows with no signal are
//! added per modality so that windowing matters.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::cohort::{DeltaClass, Horizon, HorizonWindows, InstanceRow, Margins, Modality, PatientId, Task};
use crate::error::{Error, Result};
use crate::hrv::HRV_FEATURE_NAMES;
use crate::ingest::{
    modality_file, write_clinical, write_modality_table, ClinicalRecords, Dataset, ModalityTable, ModalityTables,
    Timepoint, CLINICAL_FILE,
};
use crate::seed::derive_seed;

pub const LEDGER_FILE: &str = "ledger.csv";

const PHYS_NAMES: [&str; 12] = [
    "steps",
    "distance_km",
    "active_min",
    "sedentary_min",
    "light_min",
    "moderate_min",
    "vigorous_min",
    "calories",
    "floors",
    "resting_hr",
    "mean_hr",
    "max_hr",
];

const SLEEP_NAMES: [&str; 8] = [
    "total_sleep_min",
    "time_in_bed_min",
    "efficiency",
    "deep_min",
    "light_min",
    "rem_min",
    "awake_min",
    "awakenings",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub patients: usize,
    pub feature_counts: [usize; 3],
    /// Inclusive (min, max) in-window instances per modality and horizon.
    pub instances: [(usize, usize); 3],
    /// Out-of-window rows per modality and patient, drawn before M3.
    pub pre_window_instances: (usize, usize),
    pub missing_prob: [f64; 3],
    pub class_prior: [f64; 3],
    /// Mean shift between adjacent classes, in standard units.
    pub signal: f64,
    /// Which features carry the shift, per modality.
    pub signal_mask: [Vec<bool>; 3],
    pub seed: u64,
    pub windows: HorizonWindows,
    pub margins: Margins,
}

/// Mask with the first `k` features of each listed modality switched on.
pub fn leading_mask(feature_counts: [usize; 3], k: usize, modalities: &[Modality]) -> [Vec<bool>; 3] {
    [0, 1, 2].map(|i| {
        let on = modalities.iter().any(|m| m.index() == i);
        (0..feature_counts[i]).map(|f| on && f < k).collect()
    })
}

impl Default for SynthConfig {
    fn default() -> Self {
        let feature_counts = [12, 8, 10];
        SynthConfig {
            patients: 30,
            feature_counts,
            instances: [(5, 25); 3],
            pre_window_instances: (0, 3),
            missing_prob: [0.1; 3],
            class_prior: [1.0 / 3.0; 3],
            signal: 2.0,
            signal_mask: leading_mask(feature_counts, 4, &Modality::ALL),
            seed: 1,
            windows: HorizonWindows::default(),
            margins: Margins::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patients == 0 {
            return Err(Error::invalid("patient count must be at least 1"));
        }
        if !(self.signal >= 0.0 && self.signal.is_finite()) {
            return Err(Error::invalid("signal strength must be finite and non-negative"));
        }
        if self.missing_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("missing probabilities must lie in [0, 1]"));
        }
        let prior_sum: f64 = self.class_prior.iter().sum();
        if self.class_prior.iter().any(|p| !(0.0..=1.0).contains(p)) || (prior_sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("class prior must be a probability vector"));
        }
        for m in Modality::ALL {
            let i = m.index();
            let (lo, hi) = self.instances[i];
            if lo > hi {
                return Err(Error::invalid(format!("{m} instance range {lo}..={hi} is empty")));
            }
            if self.feature_counts[i] == 0 {
                return Err(Error::invalid(format!("{m} needs at least one feature")));
            }
            if self.signal_mask[i].len() != self.feature_counts[i] {
                return Err(Error::invalid(format!(
                    "{m} signal mask has {} entries for {} features",
                    self.signal_mask[i].len(),
                    self.feature_counts[i]
                )));
            }
            for h in Horizon::ALL {
                if hi as i64 > self.windows.window(h).len_days() {
                    return Err(Error::invalid(format!("{m} instance maximum {hi} exceeds the {h} window length")));
                }
            }
        }
        if self.pre_window_instances.0 > self.pre_window_instances.1 {
            return Err(Error::invalid("pre-window instance range is empty"));
        }
        self.margins.validate()
    }

    pub fn feature_names(&self, m: Modality) -> Vec<String> {
        let n = self.feature_counts[m.index()];
        let preset: &[&str] = match m {
            Modality::Phys => &PHYS_NAMES,
            Modality::Sleep => &SLEEP_NAMES,
            Modality::Hrv => &HRV_FEATURE_NAMES,
        };
        if n == preset.len() {
            preset.iter().map(|s| s.to_string()).collect()
        } else {
            (1..=n).map(|i| format!("{}_f{i:02}", m.name())).collect()
        }
    }

    fn signal_cells(&self, m: Modality) -> usize {
        self.signal_mask[m.index()].iter().filter(|b| **b).count()
    }
}

/// Ground truth for one (patient, task, horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub patient: PatientId,
    pub task: Task,
    pub horizon: Horizon,
    pub class: DeltaClass,
    /// In-window instances per modality.
    pub instances: [usize; 3],
    /// Missing cells among those instances, per modality.
    pub missing_cells: [usize; 3],
    /// Planted mean shift `(c - 1) · s` on masked features.
    pub shift: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthLedger {
    pub rows: Vec<LedgerRow>,
}

impl SynthLedger {
    /// Patient counts per class for one (task, horizon).
    pub fn class_counts(&self, task: Task, horizon: Horizon) -> [usize; 3] {
        let mut out = [0; 3];
        for r in self.rows.iter().filter(|r| r.task == task && r.horizon == horizon) {
            out[r.class.code()] += 1;
        }
        out
    }

    pub fn class_of(&self, patient: &PatientId, task: Task, horizon: Horizon) -> Option<DeltaClass> {
        self.rows
            .iter()
            .find(|r| &r.patient == patient && r.task == task && r.horizon == horizon)
            .map(|r| r.class)
    }

    /// `patient_id,task,horizon,class,n_phys,n_sleep,n_hrv,missing_phys,missing_sleep,missing_hrv,shift`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(
            out,
            "patient_id,task,horizon,class,n_phys,n_sleep,n_hrv,missing_phys,missing_sleep,missing_hrv,shift"
        )
        .map_err(io)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.patient,
                r.task,
                r.horizon,
                r.class.code(),
                r.instances[0],
                r.instances[1],
                r.instances[2],
                r.missing_cells[0],
                r.missing_cells[1],
                r.missing_cells[2],
                r.shift
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub dataset: Dataset,
    pub ledger: SynthLedger,
}

impl SynthCohort {
    /// Writes the three modality tables, `clinical.csv` and `ledger.csv`.
    /// Returns the written paths in that order.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for table in self.dataset.tables.iter() {
            let p = dir.join(modality_file(table.modality));
            write_modality_table(&p, table)?;
            paths.push(p);
        }
        let p = dir.join(CLINICAL_FILE);
        write_clinical(&p, &self.dataset.clinical)?;
        paths.push(p);
        let p = dir.join(LEDGER_FILE);
        self.ledger.write_csv(&p)?;
        paths.push(p);
        Ok(paths)
    }
}

fn draw_class(rng: &mut ChaCha8Rng, prior: &[f64; 3]) -> DeltaClass {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, p) in prior.iter().enumerate() {
        acc += p;
        if u < acc {
            return DeltaClass::from_code(c).unwrap();
        }
    }
    // Rounding left a sliver above the last cumulative value.
    let last = prior.iter().rposition(|p| *p > 0.0).unwrap_or(2);
    DeltaClass::from_code(last).unwrap()
}

/// A change whose discretization is `class`, at least 0.5 away from either
/// margin, rounded to one decimal.
fn draw_delta(rng: &mut ChaCha8Rng, class: DeltaClass, r: f64) -> f64 {
    let u: f64 = rng.random();
    let d = match class {
        DeltaClass::Worsened => -(r + 0.5 + u * r),
        DeltaClass::Stable => (2.0 * u - 1.0) * (r - 0.5).max(0.0),
        DeltaClass::Improved => r + 0.5 + u * r,
    };
    (d * 10.0).round() / 10.0
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Generates a cohort. Fully determined by `config` (including its seed).
pub fn generate_cohort(config: &SynthConfig) -> Result<SynthCohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "synth"));

    // Per-feature raw offsets and scales, so preprocessing has work to do.
    let affine: [Vec<(f64, f64)>; 3] = [0, 1, 2].map(|i| {
        (0..config.feature_counts[i])
            .map(|_| (rng.random_range(-50.0..50.0), rng.random_range(0.5..20.0)))
            .collect()
    });

    let origin = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
    let mut rows: [Vec<InstanceRow>; 3] = Default::default();
    let mut clinical = ClinicalRecords::new();
    let mut ledger = SynthLedger::default();
    let width = (config.patients.max(1) as f64).log10().floor() as usize + 1;

    for pi in 0..config.patients {
        let patient = PatientId::new(format!("P{:0w$}", pi + 1, w = width.max(3)))?;
        let baseline = origin + chrono::Days::new(rng.random_range(0..365));
        clinical.set_baseline(patient.clone(), baseline);

        let classes = Horizon::ALL.map(|_| draw_class(&mut rng, &config.class_prior));
        let mut realized = [[0usize; 3]; 2];
        let mut missing = [[0usize; 3]; 2];

        for m in Modality::ALL {
            let mi = m.index();
            let mut emit = |rng: &mut ChaCha8Rng, day: i64, shift: f64, signal: bool| -> usize {
                let mut n_missing = 0;
                let features = (0..config.feature_counts[mi])
                    .map(|f| {
                        let z: f64 = rng.sample(StandardNormal);
                        let planted = if signal && config.signal_mask[mi][f] { shift } else { 0.0 };
                        let (offset, scale) = affine[mi][f];
                        let value = offset + scale * (z + planted);
                        if rng.random::<f64>() < config.missing_prob[mi] {
                            n_missing += 1;
                            None
                        } else {
                            Some(value)
                        }
                    })
                    .collect();
                rows[mi].push(InstanceRow {
                    patient: patient.clone(),
                    modality: m,
                    date: baseline + chrono::Days::new(day as u64),
                    features,
                });
                n_missing
            };

            let first_window = config.windows.window(Horizon::M3).t_minus.min(config.windows.window(Horizon::M6).t_minus);
            let (lo, hi) = config.pre_window_instances;
            let n_pre = rng.random_range(lo..=hi).min(first_window.max(0) as usize);
            if n_pre > 0 {
                let mut days: Vec<usize> = sample(&mut rng, first_window as usize, n_pre).into_vec();
                days.sort_unstable();
                for d in days {
                    emit(&mut rng, d as i64, 0.0, false);
                }
            }

            for h in Horizon::ALL {
                let w = config.windows.window(h);
                let (lo, hi) = config.instances[mi];
                let n = rng.random_range(lo..=hi);
                let mut days: Vec<usize> = sample(&mut rng, w.len_days() as usize, n).into_vec();
                days.sort_unstable();
                let shift = (classes[h.index()].code() as f64 - 1.0) * config.signal;
                for d in days {
                    missing[h.index()][mi] += emit(&mut rng, w.t_minus + d as i64, shift, true);
                }
                realized[h.index()][mi] = n;
            }
        }

        for task in Task::ALL {
            let bl = match task {
                Task::Facit => round1(rng.random_range(20.0..45.0)),
                Task::Handgrip => round1(rng.random_range(15.0..40.0)),
            };
            clinical.set_value(patient.clone(), task, Timepoint::Baseline, bl)?;
            for h in Horizon::ALL {
                let class = classes[h.index()];
                let delta = draw_delta(&mut rng, class, config.margins.for_task(task));
                clinical.set_value(patient.clone(), task, Timepoint::Followup(h), round1(bl + delta))?;
                ledger.rows.push(LedgerRow {
                    patient: patient.clone(),
                    task,
                    horizon: h,
                    class,
                    instances: realized[h.index()],
                    missing_cells: missing[h.index()],
                    shift: (class.code() as f64 - 1.0) * config.signal,
                });
            }
        }
    }

    let [phys, sleep, hrv] = rows;
    let tables = ModalityTables::new(
        ModalityTable::new(Modality::Phys, config.feature_names(Modality::Phys), phys)?,
        ModalityTable::new(Modality::Sleep, config.feature_names(Modality::Sleep), sleep)?,
        ModalityTable::new(Modality::Hrv, config.feature_names(Modality::Hrv), hrv)?,
    )?;
    Ok(SynthCohort {
        dataset: Dataset::new(tables, clinical)?,
        ledger,
    })
}

/// Monte-Carlo balanced accuracy of the Bayes rule, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub balanced_accuracy: f64,
    pub std_error: f64,
    pub bags: usize,
}

/// Estimates the best achievable balanced accuracy for bags drawn like the
/// generator's in-window instances.
///
/// Under the planted model every observed signal cell is an independent
/// `N((c - 1) s, 1)` draw, so the mean of observed signal cells is
/// sufficient; with equal class priors (which maximize mean recall) the
/// likelihood-ratio rule picks the nearest class mean. Bags without any
/// observed signal cell, or with `s = 0`, are guessed uniformly.
pub fn oracle_accuracy(config: &SynthConfig, bags: usize) -> Result<OracleEstimate> {
    config.validate()?;
    if bags < 3 {
        return Err(Error::invalid("oracle needs at least 3 Monte-Carlo bags"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "oracle"));
    let mut correct = [0usize; 3];
    let mut total = [0usize; 3];
    for b in 0..bags {
        let class = b % 3;
        let mut cells = 0usize;
        for m in Modality::ALL {
            let (lo, hi) = config.instances[m.index()];
            let n = rng.random_range(lo..=hi);
            let p_obs = 1.0 - config.missing_prob[m.index()];
            for _ in 0..n * config.signal_cells(m) {
                if rng.random::<f64>() < p_obs {
                    cells += 1;
                }
            }
        }
        let guess = if cells == 0 || config.signal == 0.0 {
            rng.random_range(0..3)
        } else {
            let mean = (class as f64 - 1.0) * config.signal;
            let noise = Normal::new(0.0, 1.0 / (cells as f64).sqrt()).expect("positive std");
            let xbar = mean + noise.sample(&mut rng);
            (0..3)
                .min_by(|&a, &b| {
                    let da = (xbar - (a as f64 - 1.0) * config.signal).abs();
                    let db = (xbar - (b as f64 - 1.0) * config.signal).abs();
                    da.total_cmp(&db)
                })
                .unwrap()
        };
        total[class] += 1;
        if guess == class {
            correct[class] += 1;
        }
    }
    let recalls: Vec<f64> = (0..3).map(|c| correct[c] as f64 / total[c] as f64).collect();
    let ba = recalls.iter().sum::<f64>() / 3.0;
    let var: f64 = (0..3).map(|c| recalls[c] * (1.0 - recalls[c]) / total[c] as f64).sum::<f64>() / 9.0;
    Ok(OracleEstimate {
        balanced_accuracy: ba,
        std_error: var.sqrt(),
        bags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcgSynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    pub mean_bpm: f64,
    /// Peak-to-peak RR modulation, in ms, at 0.1 Hz and 0.25 Hz.
    pub lf_modulation_ms: f64,
    pub hf_modulation_ms: f64,
    pub noise_std: f64,
    pub baseline_wander: f64,
}

impl Default for EcgSynthConfig {
    fn default() -> Self {
        EcgSynthConfig {
            fs: crate::hrv::DEFAULT_FS,
            duration_s: 300.0,
            mean_bpm: 70.0,
            lf_modulation_ms: 40.0,
            hf_modulation_ms: 30.0,
            noise_std: 0.02,
            baseline_wander: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEcg {
    pub samples: Vec<f64>,
    /// Sample index of every planted R peak.
    pub r_peaks: Vec<usize>,
}

/// ECG-like trace: Gaussian P, QRS and T waves on a wandering baseline with
/// white noise, and RR intervals modulated at 0.1 Hz and 0.25 Hz.
pub fn synthetic_ecg(config: &EcgSynthConfig, seed: u64) -> Result<SyntheticEcg> {
    if !(config.fs > 0.0 && config.duration_s > 0.0 && config.mean_bpm > 0.0) {
        return Err(Error::invalid("sampling rate, duration and heart rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (config.duration_s * config.fs).round() as usize;
    let mean_rr = 60.0 / config.mean_bpm;
    let mut beats = Vec::new();
    let mut t = 0.3 + rng.random_range(0.0..mean_rr * 0.5);
    while t < config.duration_s - 0.3 {
        beats.push(t);
        let rr = mean_rr
            + 0.5e-3 * config.lf_modulation_ms * (2.0 * std::f64::consts::PI * 0.1 * t).sin()
            + 0.5e-3 * config.hf_modulation_ms * (2.0 * std::f64::consts::PI * 0.25 * t).sin();
        t += rr;
    }
    // (offset s, width s, amplitude)
    let waves = [(-0.16, 0.025, 0.12), (-0.025, 0.01, -0.1), (0.0, 0.012, 1.0), (0.03, 0.01, -0.2), (0.25, 0.05, 0.3)];
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let ti = i as f64 / config.fs;
            let noise: f64 = rng.sample(StandardNormal);
            config.baseline_wander * (2.0 * std::f64::consts::PI * 0.3 * ti + phase).sin() + config.noise_std * noise
        })
        .collect();
    let mut r_peaks = Vec::with_capacity(beats.len());
    for &b in &beats {
        for &(off, width, amp) in &waves {
            let centre = b + off;
            let lo = (((centre - 5.0 * width) * config.fs).floor().max(0.0)) as usize;
            let hi = (((centre + 5.0 * width) * config.fs).ceil() as usize).min(n.saturating_sub(1));
            for (i, s) in samples.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let d = i as f64 / config.fs - centre;
                *s += amp * (-0.5 * (d / width).powi(2)).exp();
            }
        }
        r_peaks.push((b * config.fs).round() as usize);
    }
    Ok(SyntheticEcg { samples, r_peaks })
}
