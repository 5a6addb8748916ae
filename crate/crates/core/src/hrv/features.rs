use super::{
    clean_nn, detect_r_peaks_with, hrv_frequency_domain, peaks_to_nn, HrvFeatures, HrvIndex,
    NnSeries, PeakDetectorConfig,
};
use crate::error::{Error, Result};

/// Minimum span (seconds) for spectral indices.
pub(crate) const MIN_SPECTRAL_SPAN_S: f64 = 120.0;

fn require_two(nn: &NnSeries) -> Result<()> {
    if nn.len() < 2 {
        return Err(Error::Signal(format!(
            "need at least 2 NN intervals, got {}",
            nn.len()
        )));
    }
    Ok(())
}

/// MeanNN, SDNN (n-1 denominator), RMSSD and pNN50.
pub fn hrv_time_domain(nn: &NnSeries) -> Result<HrvFeatures> {
    require_two(nn)?;
    let x = nn.intervals();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let sdnn = (ss / (n - 1.0)).sqrt();

    let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
    let over50 = diffs.iter().filter(|d| d.abs() > 50.0).count();
    let pnn50 = 100.0 * over50 as f64 / diffs.len() as f64;

    Ok(HrvFeatures::default()
        .with(HrvIndex::MeanNn, Some(mean))
        .with(HrvIndex::Sdnn, Some(sdnn))
        .with(HrvIndex::Rmssd, Some(rmssd))
        .with(HrvIndex::Pnn50, Some(pnn50)))
}

/// Poincaré descriptors derived from RMSSD and SDNN.
pub fn hrv_nonlinear(nn: &NnSeries) -> Result<HrvFeatures> {
    let td = hrv_time_domain(nn)?;
    let rmssd = td.get(HrvIndex::Rmssd).unwrap_or(0.0);
    let sdnn = td.get(HrvIndex::Sdnn).unwrap_or(0.0);
    let sd1 = rmssd / std::f64::consts::SQRT_2;
    let sd2 = (2.0 * sdnn * sdnn - sd1 * sd1).max(0.0).sqrt();
    let ratio = if sd2 > 0.0 { Some(sd1 / sd2) } else { None };
    Ok(HrvFeatures::default()
        .with(HrvIndex::Sd1, Some(sd1))
        .with(HrvIndex::Sd2, Some(sd2))
        .with(HrvIndex::Sd1Sd2, ratio))
}

/// Per-feature median over the present values of each segment.
pub fn aggregate_daily(segments: &[HrvFeatures]) -> Result<HrvFeatures> {
    if segments.is_empty() {
        return Err(Error::invalid("no HRV segments to aggregate"));
    }
    let mut out = HrvFeatures::default();
    for index in HrvIndex::ALL {
        let mut present: Vec<f64> = segments.iter().filter_map(|s| s.get(index)).collect();
        out.set(index, median(&mut present));
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Full extraction for one ECG segment. Frequency indices stay missing when
/// the cleaned series spans less than two minutes.
pub fn segment_features(samples: &[f64], fs: f64, detector: &PeakDetectorConfig) -> Result<HrvFeatures> {
    let peaks = detect_r_peaks_with(samples, fs, detector)?;
    let nn = clean_nn(&peaks_to_nn(&peaks, fs)?)?;
    let mut features = hrv_time_domain(&nn)?.merge(&hrv_nonlinear(&nn)?);
    if nn.span_s() >= MIN_SPECTRAL_SPAN_S {
        features = features.merge(&hrv_frequency_domain(&nn)?);
    }
    Ok(features)
}
