//! Spectral HRV indices from a resampled NN tachogram.

use rustfft::{num_complex::Complex, FftPlanner};

use super::features::MIN_SPECTRAL_SPAN_S;
use super::{HrvFeatures, HrvIndex, NnSeries};
use crate::error::{Error, Result};

const RESAMPLE_HZ: f64 = 4.0;
const WELCH_SEGMENT: usize = 256;
const LF_BAND: (f64, f64) = (0.04, 0.15);
const HF_BAND: (f64, f64) = (0.15, 0.40);

/// One-sided power spectral density.
#[derive(Debug, Clone)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub df: f64,
}

impl Psd {
    /// Rectangle-rule power over `[lo, hi)`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, p)| p * self.df)
            .sum()
    }
}

/// Natural cubic spline through `(xs, ys)` evaluated at `at`. `xs` must be
/// strictly increasing; points outside the knot range are clamped to the
/// end knots.
pub fn natural_cubic_spline(xs: &[f64], ys: &[f64], at: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return Err(Error::invalid("spline needs at least 2 matching knots"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("spline knots must be strictly increasing"));
    }
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();

    // Second derivatives; natural boundary m[0] = m[n-1] = 0. Thomas algorithm.
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
        }
    }

    let mut seg = 0;
    Ok(at
        .iter()
        .map(|&t| {
            let t = t.clamp(xs[0], xs[n - 1]);
            // `at` is usually sorted; fall back to a search otherwise.
            if t < xs[seg] {
                seg = xs.partition_point(|x| *x <= t).saturating_sub(1);
            }
            while seg + 1 < n - 1 && t > xs[seg + 1] {
                seg += 1;
            }
            let i = seg.min(n - 2);
            let a = (xs[i + 1] - t) / h[i];
            let b = (t - xs[i]) / h[i];
            a * ys[i]
                + b * ys[i + 1]
                + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h[i] * h[i] / 6.0
        })
        .collect())
}

/// Welch periodogram: periodic Hann window, 50% overlap, per-segment mean
/// removal, one-sided density scaling.
pub fn welch_psd(signal: &[f64], fs: f64, segment: usize) -> Result<Psd> {
    if segment < 2 || signal.len() < segment {
        return Err(Error::Signal(format!(
            "signal of {} samples is shorter than one Welch segment ({segment})",
            signal.len()
        )));
    }
    let step = segment / 2;
    let window: Vec<f64> = (0..segment)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / segment as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment);

    let bins = segment / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut count = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); segment];
    let mut start = 0;
    while start + segment <= signal.len() {
        let chunk = &signal[start..start + segment];
        let mean = chunk.iter().sum::<f64>() / segment as f64;
        for ((slot, x), w) in buf.iter_mut().zip(chunk).zip(&window) {
            *slot = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        count += 1;
        start += step;
    }

    let scale = 1.0 / (fs * window_power * count as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (segment % 2 == 0 && k == segment / 2) { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    let df = fs / segment as f64;
    Ok(Psd {
        freqs: (0..bins).map(|k| k as f64 * df).collect(),
        power,
        df,
    })
}

/// LF power, HF power and LF/HF from the 4 Hz cubic-resampled tachogram.
pub fn hrv_frequency_domain(nn: &NnSeries) -> Result<HrvFeatures> {
    if nn.span_s() < MIN_SPECTRAL_SPAN_S {
        return Err(Error::Signal(format!(
            "NN series spans {:.1} s; spectral indices need {MIN_SPECTRAL_SPAN_S} s",
            nn.span_s()
        )));
    }
    if nn.len() < 2 {
        return Err(Error::Signal("need at least 2 NN intervals".into()));
    }
    let mut t = 0.0;
    let times: Vec<f64> = nn
        .intervals()
        .iter()
        .map(|v| {
            t += v / 1000.0;
            t
        })
        .collect();
    let start = times[0];
    let end = *times.last().unwrap();
    let count = ((end - start) * RESAMPLE_HZ).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| start + i as f64 / RESAMPLE_HZ).collect();
    let mut tach = natural_cubic_spline(&times, nn.intervals(), &grid)?;
    let mean = tach.iter().sum::<f64>() / tach.len() as f64;
    tach.iter_mut().for_each(|v| *v -= mean);

    let flat = tach.iter().all(|v| v.abs() < 1e-9);
    let (lf, hf) = if flat {
        (0.0, 0.0)
    } else {
        let psd = welch_psd(&tach, RESAMPLE_HZ, WELCH_SEGMENT.min(tach.len()))?;
        (psd.band_power(LF_BAND.0, LF_BAND.1), psd.band_power(HF_BAND.0, HF_BAND.1))
    };
    let ratio = if hf > 0.0 { Some(lf / hf) } else { None };
    Ok(HrvFeatures::default()
        .with(HrvIndex::LfPower, Some(lf))
        .with(HrvIndex::HfPower, Some(hf))
        .with(HrvIndex::LfHf, ratio))
}
