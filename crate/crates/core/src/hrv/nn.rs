use crate::error::{Error, Result};

const MIN_NN_MS: f64 = 300.0;
const MAX_NN_MS: f64 = 2000.0;
const MAX_SUCCESSIVE_DEVIATION: f64 = 0.20;

/// Inter-beat intervals in milliseconds, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct NnSeries {
    intervals: Vec<f64>,
}

impl NnSeries {
    pub fn new(intervals: Vec<f64>) -> Result<Self> {
        if let Some(bad) = intervals.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Signal(format!("NN interval must be positive, got {bad}")));
        }
        Ok(NnSeries { intervals })
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn span_s(&self) -> f64 {
        self.intervals.iter().sum::<f64>() / 1000.0
    }
}

pub fn peaks_to_nn(peaks: &[usize], fs: f64) -> Result<NnSeries> {
    if peaks.len() < 2 {
        return Err(Error::Signal(format!(
            "need at least 2 peaks for NN intervals, got {}",
            peaks.len()
        )));
    }
    if !(fs > 0.0) {
        return Err(Error::invalid(format!("sampling rate must be positive, got {fs}")));
    }
    let intervals = peaks
        .windows(2)
        .map(|w| {
            if w[1] <= w[0] {
                Err(Error::Signal("peak indices must be strictly increasing".into()))
            } else {
                Ok((w[1] - w[0]) as f64 / fs * 1000.0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    NnSeries::new(intervals)
}

/// Drops intervals outside [300, 2000] ms and intervals deviating more than
/// 20% from the previously retained interval.
pub fn clean_nn(nn: &NnSeries) -> Result<NnSeries> {
    if nn.is_empty() {
        return Err(Error::Signal("empty NN series".into()));
    }
    let mut kept: Vec<f64> = Vec::with_capacity(nn.len());
    for &v in nn.intervals() {
        if !(MIN_NN_MS..=MAX_NN_MS).contains(&v) {
            continue;
        }
        if let Some(&prev) = kept.last() {
            if (v - prev).abs() / prev > MAX_SUCCESSIVE_DEVIATION {
                continue;
            }
        }
        kept.push(v);
    }
    if kept.is_empty() {
        return Err(Error::Signal("all NN intervals rejected as artifacts".into()));
    }
    NnSeries::new(kept)
}
