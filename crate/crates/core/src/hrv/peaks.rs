//! Pan–Tompkins style QRS detector.
//!
//! Stages: zero-phase band-pass built from cascaded moving-average
//! differences, five-point derivative, squaring, moving-window integration,
//! then adaptive signal/noise thresholds with a refractory period and
//! search-back for missed beats. Detected positions are refined to the
//! largest band-passed excursion near each integrated peak.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PeakDetectorConfig {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub integration_ms: f64,
    pub refractory_ms: f64,
    pub max_bpm: f64,
    pub min_duration_s: f64,
}

impl Default for PeakDetectorConfig {
    fn default() -> Self {
        PeakDetectorConfig {
            band_low_hz: 5.0,
            band_high_hz: 15.0,
            integration_ms: 150.0,
            refractory_ms: 200.0,
            max_bpm: 220.0,
            min_duration_s: 5.0,
        }
    }
}

/// Detects R peaks with the default configuration.
pub fn detect_r_peaks(ecg: &super::EcgRecording) -> Result<Vec<usize>> {
    detect_r_peaks_with(&ecg.samples, ecg.fs, &PeakDetectorConfig::default())
}

pub fn detect_r_peaks_with(samples: &[f64], fs: f64, cfg: &PeakDetectorConfig) -> Result<Vec<usize>> {
    if !(fs > 0.0) {
        return Err(Error::invalid(format!("sampling rate must be positive, got {fs}")));
    }
    let min_len = (cfg.min_duration_s * fs).ceil() as usize;
    if samples.len() < min_len {
        return Err(Error::Signal(format!(
            "recording has {} samples; at least {} s ({min_len} samples) required",
            samples.len(),
            cfg.min_duration_s
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Signal("recording contains non-finite samples".into()));
    }
    let first = samples[0];
    if samples.iter().all(|v| *v == first) {
        return Err(Error::Signal("no peaks: flat-line signal".into()));
    }

    let band = band_pass(samples, fs, cfg);
    let deriv = five_point_derivative(&band);
    let squared: Vec<f64> = deriv.iter().map(|d| d * d).collect();
    let integrated = centered_moving_average(&squared, odd_len(cfg.integration_ms / 1000.0 * fs));

    let refractory = ((cfg.refractory_ms / 1000.0 * fs).round() as usize).max(1);
    let candidates = local_maxima(&integrated, refractory);
    let detections = adaptive_threshold(&integrated, &candidates, fs, refractory);

    let search = (odd_len(cfg.integration_ms / 1000.0 * fs) / 2).max(1);
    let mut refined: Vec<usize> = detections
        .iter()
        .map(|&p| {
            let lo = p.saturating_sub(search);
            let hi = (p + search).min(band.len() - 1);
            (lo..=hi)
                .max_by(|&a, &b| band[a].abs().total_cmp(&band[b].abs()).then(b.cmp(&a)))
                .unwrap_or(p)
        })
        .collect();
    refined.sort_unstable();
    refined.dedup();

    // Enforce the physiological ceiling, keeping the stronger beat.
    let min_gap = (60.0 / cfg.max_bpm * fs).floor() as usize;
    let mut peaks: Vec<usize> = Vec::with_capacity(refined.len());
    for p in refined {
        match peaks.last() {
            Some(&last) if p - last < min_gap => {
                if band[p].abs() > band[last].abs() {
                    *peaks.last_mut().unwrap() = p;
                }
            }
            _ => peaks.push(p),
        }
    }

    if peaks.is_empty() {
        return Err(Error::Signal("no peaks detected".into()));
    }
    Ok(peaks)
}

fn odd_len(samples: f64) -> usize {
    let n = samples.round().max(1.0) as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Centered moving average; windows are truncated at the edges.
fn centered_moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let half = len / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn band_pass(x: &[f64], fs: f64, cfg: &PeakDetectorConfig) -> Vec<f64> {
    // A boxcar of length L has its -3 dB point near 0.443 * fs / L.
    let lp_len = odd_len(0.443 * fs / cfg.band_high_hz);
    let hp_len = odd_len(0.443 * fs / cfg.band_low_hz);
    let low = centered_moving_average(&centered_moving_average(x, lp_len), lp_len);
    let trend = centered_moving_average(&centered_moving_average(&low, hp_len), hp_len);
    low.iter().zip(&trend).map(|(a, b)| a - b).collect()
}

fn five_point_derivative(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let at = |i: isize| -> f64 { x[i.clamp(0, n as isize - 1) as usize] };
    (0..n as isize)
        .map(|i| (2.0 * at(i + 1) + at(i + 2) - at(i - 2) - 2.0 * at(i - 1)) / 8.0)
        .collect()
}

/// Indices that are the (first) maximum of their ±`radius` neighbourhood
/// and strictly positive.
fn local_maxima(x: &[f64], radius: usize) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    for i in 0..n {
        if x[i] <= 0.0 {
            continue;
        }
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let is_max = (lo..=hi).all(|j| x[j] < x[i] || (x[j] == x[i] && j >= i));
        if is_max {
            out.push(i);
        }
    }
    out
}

fn adaptive_threshold(mwi: &[f64], candidates: &[usize], fs: f64, refractory: usize) -> Vec<usize> {
    let learn = ((2.0 * fs) as usize).min(mwi.len());
    let head = &mwi[..learn];
    let mut spki = 0.25 * head.iter().cloned().fold(0.0, f64::max);
    let mut npki = 0.5 * head.iter().sum::<f64>() / learn.max(1) as f64;
    let threshold = |s: f64, n: f64| n + 0.25 * (s - n);

    let mut peaks: Vec<usize> = Vec::new();
    let mut rr_recent: Vec<usize> = Vec::new();
    // Candidates rejected as noise since the last accepted beat.
    let mut skipped: Vec<usize> = Vec::new();

    for &c in candidates {
        if let Some(&last) = peaks.last() {
            if c - last < refractory {
                continue;
            }
            if rr_recent.len() >= 2 {
                let rr_avg = rr_recent.iter().sum::<usize>() as f64 / rr_recent.len() as f64;
                if (c - last) as f64 > 1.66 * rr_avg {
                    let thr2 = 0.5 * threshold(spki, npki);
                    let best = skipped
                        .iter()
                        .copied()
                        .filter(|&s| s - last >= refractory && c - s >= refractory && mwi[s] > thr2)
                        .max_by(|&a, &b| mwi[a].total_cmp(&mwi[b]));
                    if let Some(b) = best {
                        spki = 0.25 * mwi[b] + 0.75 * spki;
                        push_rr(&mut rr_recent, b - last);
                        peaks.push(b);
                        skipped.clear();
                    }
                }
            }
        }
        let last = peaks.last().copied();
        if last.is_some_and(|l| c - l < refractory) {
            continue;
        }
        if mwi[c] > threshold(spki, npki) {
            spki = 0.125 * mwi[c] + 0.875 * spki;
            if let Some(l) = last {
                push_rr(&mut rr_recent, c - l);
            }
            peaks.push(c);
            skipped.clear();
        } else {
            npki = 0.125 * mwi[c] + 0.875 * npki;
            skipped.push(c);
        }
    }
    peaks
}

fn push_rr(buf: &mut Vec<usize>, rr: usize) {
    buf.push(rr);
    if buf.len() > 8 {
        buf.remove(0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse_train(fs: f64, bpm: f64, seconds: f64, offset: usize) -> (Vec<f64>, Vec<usize>) {
        let n = (fs * seconds) as usize;
        let period = 60.0 / bpm * fs;
        let mut x = vec![0.0; n];
        let mut truth = Vec::new();
        let mut k = 0;
        loop {
            let p = offset + (k as f64 * period).round() as usize;
            if p >= n {
                break;
            }
            x[p] = 1.0;
            truth.push(p);
            k += 1;
        }
        (x, truth)
    }

    #[test]
    fn recovers_60_bpm_impulse_train() {
        let (x, truth) = impulse_train(130.0, 60.0, 10.0, 0);
        let peaks = detect_r_peaks_with(&x, 130.0, &PeakDetectorConfig::default()).unwrap();
        assert_eq!(peaks.len(), 10, "{peaks:?}");
        for (p, t) in peaks.iter().zip(&truth) {
            assert!((*p as i64 - *t as i64).abs() <= 1);
        }
        for w in peaks.windows(2) {
            assert!((w[1] as i64 - w[0] as i64 - 130).abs() <= 1);
        }
    }

    #[test]
    fn flat_line_is_an_error() {
        let x = vec![0.0; 1300];
        assert!(matches!(
            detect_r_peaks_with(&x, 130.0, &PeakDetectorConfig::default()),
            Err(Error::Signal(_))
        ));
    }

    #[test]
    fn too_short_is_an_error() {
        let (x, _) = impulse_train(130.0, 60.0, 4.0, 0);
        assert!(detect_r_peaks_with(&x, 130.0, &PeakDetectorConfig::default()).is_err());
    }

    #[test]
    fn shift_equivariance() {
        let (x, _) = impulse_train(130.0, 72.0, 20.0, 40);
        let base = detect_r_peaks_with(&x, 130.0, &PeakDetectorConfig::default()).unwrap();
        for k in [1usize, 7, 33] {
            let mut shifted = vec![0.0; k];
            shifted.extend_from_slice(&x);
            let p = detect_r_peaks_with(&shifted, 130.0, &PeakDetectorConfig::default()).unwrap();
            let expected: Vec<usize> = base.iter().map(|v| v + k).collect();
            assert_eq!(p, expected, "shift {k}");
        }
    }

    #[test]
    fn amplitude_scale_invariance() {
        let (x, _) = impulse_train(130.0, 90.0, 15.0, 11);
        let base = detect_r_peaks_with(&x, 130.0, &PeakDetectorConfig::default()).unwrap();
        for s in [0.25, 2.0, 1024.0, 3.7] {
            let y: Vec<f64> = x.iter().map(|v| v * s).collect();
            assert_eq!(detect_r_peaks_with(&y, 130.0, &PeakDetectorConfig::default()).unwrap(), base);
        }
    }

    #[test]
    fn peaks_strictly_increasing_and_rate_bounded() {
        let (x, _) = impulse_train(130.0, 200.0, 12.0, 3);
        let peaks = detect_r_peaks_with(&x, 130.0, &PeakDetectorConfig::default()).unwrap();
        let min_gap = (60.0 / 220.0 * 130.0f64).floor() as usize;
        for w in peaks.windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] - w[0] >= min_gap);
        }
    }
}
