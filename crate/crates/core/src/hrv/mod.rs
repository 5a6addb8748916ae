//! ECG to heart-rate-variability features.
//!
//! The pipeline is: R-peak detection ([`detect_r_peaks`]) → NN intervals
//! ([`peaks_to_nn`]) → artifact rejection ([`clean_nn`]) → time-domain,
//! frequency-domain and Poincaré indices → per-date median aggregation.

mod features;
mod nn;
mod peaks;
mod spectrum;

use chrono::NaiveDate;

use crate::cohort::PatientId;
use crate::error::{Error, Result};

pub use features::{aggregate_daily, hrv_nonlinear, hrv_time_domain, segment_features};
pub use nn::{clean_nn, peaks_to_nn, NnSeries};
pub use peaks::{detect_r_peaks, detect_r_peaks_with, PeakDetectorConfig};
pub use spectrum::{hrv_frequency_domain, natural_cubic_spline, welch_psd, Psd};

/// Polar H10 sampling rate.
pub const DEFAULT_FS: f64 = 130.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecording {
    pub patient: PatientId,
    pub date: NaiveDate,
    pub fs: f64,
    pub samples: Vec<f64>,
}

impl EcgRecording {
    pub fn new(patient: PatientId, date: NaiveDate, fs: f64, samples: Vec<f64>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::invalid(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::invalid("ECG recording has no samples"));
        }
        Ok(EcgRecording {
            patient,
            date,
            fs,
            samples,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Splits into consecutive non-overlapping segments of `segment_s`
    /// seconds; a trailing remainder shorter than `min_s` is dropped.
    pub fn segments(&self, segment_s: f64, min_s: f64) -> Vec<&[f64]> {
        let len = ((segment_s * self.fs).round() as usize).max(1);
        let min_len = (min_s * self.fs).ceil() as usize;
        self.samples
            .chunks(len)
            .filter(|c| c.len() >= min_len)
            .collect()
    }
}

/// Indices into [`HrvFeatures`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HrvIndex {
    MeanNn,
    Sdnn,
    Rmssd,
    Pnn50,
    LfPower,
    HfPower,
    LfHf,
    Sd1,
    Sd2,
    Sd1Sd2,
}

impl HrvIndex {
    pub const ALL: [HrvIndex; 10] = [
        HrvIndex::MeanNn,
        HrvIndex::Sdnn,
        HrvIndex::Rmssd,
        HrvIndex::Pnn50,
        HrvIndex::LfPower,
        HrvIndex::HfPower,
        HrvIndex::LfHf,
        HrvIndex::Sd1,
        HrvIndex::Sd2,
        HrvIndex::Sd1Sd2,
    ];

    pub fn name(self) -> &'static str {
        HRV_FEATURE_NAMES[self as usize]
    }
}

/// Column names of the hrv modality table, in feature order.
pub const HRV_FEATURE_NAMES: [&str; 10] = [
    "mean_nn", "sdnn", "rmssd", "pnn50", "lf_power", "hf_power", "lf_hf", "sd1", "sd2", "sd1_sd2",
];

/// Ten HRV indices; any of them may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HrvFeatures {
    values: [Option<f64>; 10],
}

impl HrvFeatures {
    pub fn get(&self, index: HrvIndex) -> Option<f64> {
        self.values[index as usize]
    }

    pub fn set(&mut self, index: HrvIndex, value: Option<f64>) {
        self.values[index as usize] = value;
    }

    pub fn with(mut self, index: HrvIndex, value: Option<f64>) -> Self {
        self.set(index, value);
        self
    }

    /// Fills every index of `self` that is present in `other`.
    pub fn merge(mut self, other: &HrvFeatures) -> Self {
        for (slot, v) in self.values.iter_mut().zip(other.values.iter()) {
            if v.is_some() {
                *slot = *v;
            }
        }
        self
    }

    pub fn values(&self) -> &[Option<f64>; 10] {
        &self.values
    }

    pub fn to_vec(&self) -> Vec<Option<f64>> {
        self.values.to_vec()
    }
}
