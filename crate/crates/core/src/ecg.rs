//! Heartbeat detection and the heart-rate / HRV features.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ChannelSignal;

pub const MIN_DETECTION_S: f64 = 10.0;
pub const REFRACTORY_S: f64 = 0.25;
pub const INTEGRATION_WINDOW_S: f64 = 0.150;
pub const IBI_GATE_MS: (f64, f64) = (300.0, 2000.0);
pub const TACHOGRAM_FS: f64 = 4.0;
pub const WELCH_SEGMENT: usize = 256;
pub const MIN_HRV_SPAN_S: f64 = 60.0;
pub const LF_BAND_HZ: (f64, f64) = (0.04, 0.15);
pub const HF_BAND_HZ: (f64, f64) = (0.15, 0.40);

/// Inter-beat intervals after the physiological gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbiSeries {
    pub intervals_ms: Vec<f64>,
    /// Time of the beat that opens each interval.
    pub beat_times_s: Vec<f64>,
}

impl IbiSeries {
    pub fn len(&self) -> usize {
        self.intervals_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals_ms.is_empty()
    }

    /// Seconds from the first interval's opening beat to the last interval's closing beat.
    pub fn span_s(&self) -> f64 {
        match (self.beat_times_s.first(), self.beat_times_s.last(), self.intervals_ms.last()) {
            (Some(first), Some(last), Some(ibi)) => last + ibi / 1000.0 - first,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcgFeatures {
    pub hr_bpm: f64,
    pub rmssd_ms: f64,
    pub lf_power: f64,
    pub lf_hf_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvBands {
    pub lf_power: f64,
    pub hf_power: f64,
    pub lf_hf_ratio: f64,
}

fn centered_moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let half = width / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + width - half).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Derivative, squaring and moving-window integration of a band-limited ECG.
fn integrated_energy(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let mut energy = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        let d = (-x[i - 2] - 2.0 * x[i - 1] + 2.0 * x[i + 1] + x[i + 2]) * fs / 8.0;
        energy[i] = d * d;
    }
    let width = ((INTEGRATION_WINDOW_S * fs).round() as usize).max(1);
    centered_moving_average(&energy, width)
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > 0.0)
        .collect()
}

/// R-peak indices of a band-limited ECG (positive R polarity).
///
/// Pan–Tompkins style chain: five-point derivative, squaring, 150 ms
/// centred moving-window integration, adaptive signal/noise thresholds with
/// a 250 ms refractory period and RR-based search-back. Each detection on
/// the integrated waveform is refined to the ECG maximum within ±100 ms.
pub fn detect_r_peaks(ecg: &ChannelSignal) -> Result<Vec<usize>> {
    let fs = ecg.fs();
    if ecg.duration_s() < MIN_DETECTION_S {
        return Err(Error::InsufficientData(format!(
            "beat detection needs at least {MIN_DETECTION_S} s, got {:.2} s",
            ecg.duration_s()
        )));
    }
    let x = ecg.samples();
    let mwi = integrated_energy(x, fs);
    let candidates = local_maxima(&mwi);
    if candidates.is_empty() {
        return Err(Error::NoBeatsDetected);
    }
    let refractory = (REFRACTORY_S * fs).round() as usize;

    let learn = ((2.0 * fs) as usize).min(mwi.len());
    let init_max = mwi[..learn].iter().copied().fold(0.0, f64::max);
    let init_mean = mwi[..learn].iter().sum::<f64>() / learn as f64;
    let mut spki = init_max / 3.0;
    let mut npki = init_mean / 2.0;

    let mut beats: Vec<usize> = Vec::new();
    let mut rr_recent: Vec<usize> = Vec::new();
    let mut last_candidate = 0usize;
    for (ci, &c) in candidates.iter().enumerate() {
        let peak = mwi[c];
        let threshold = npki + 0.25 * (spki - npki);

        // Search back for a missed beat when the current gap is too long.
        if let (Some(&prev), false) = (beats.last(), rr_recent.is_empty()) {
            let rr_avg = rr_recent.iter().sum::<usize>() as f64 / rr_recent.len() as f64;
            if (c - prev) as f64 > 1.66 * rr_avg {
                let missed = candidates[last_candidate..ci]
                    .iter()
                    .copied()
                    .filter(|&m| m >= prev + refractory && m + refractory <= c && mwi[m] > threshold / 2.0)
                    .max_by(|a, b| mwi[*a].total_cmp(&mwi[*b]));
                if let Some(m) = missed {
                    spki = 0.25 * mwi[m] + 0.75 * spki;
                    rr_recent.push(m - prev);
                    beats.push(m);
                }
            }
        }

        if peak > threshold {
            match beats.last().copied() {
                Some(prev) if c - prev < refractory => {
                    if peak > mwi[prev] {
                        beats.pop();
                        beats.push(c);
                    }
                }
                prev => {
                    if let Some(prev) = prev {
                        rr_recent.push(c - prev);
                        if rr_recent.len() > 8 {
                            rr_recent.remove(0);
                        }
                    }
                    beats.push(c);
                }
            }
            spki = 0.125 * peak + 0.875 * spki;
            last_candidate = ci + 1;
        } else {
            npki = 0.125 * peak + 0.875 * npki;
        }
    }

    let reach = (0.1 * fs).round() as usize;
    let mut peaks: Vec<usize> = Vec::with_capacity(beats.len());
    for b in beats {
        let lo = b.saturating_sub(reach);
        let hi = (b + reach + 1).min(x.len());
        let r = (lo..hi).max_by(|i, j| x[*i].total_cmp(&x[*j])).unwrap_or(b);
        match peaks.last().copied() {
            Some(prev) if r < prev + refractory => {
                if x[r] > x[prev] {
                    peaks.pop();
                    peaks.push(r);
                }
            }
            _ => peaks.push(r),
        }
    }
    if peaks.is_empty() {
        return Err(Error::NoBeatsDetected);
    }
    Ok(peaks)
}

/// Inter-beat intervals from peak indices, dropping intervals outside [`IBI_GATE_MS`].
pub fn ibi_series(peaks: &[usize], fs: f64) -> Result<IbiSeries> {
    if peaks.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 beats, got {}", peaks.len())));
    }
    let mut intervals_ms = Vec::with_capacity(peaks.len() - 1);
    let mut beat_times_s = Vec::with_capacity(peaks.len() - 1);
    for w in peaks.windows(2) {
        let ms = (w[1] as f64 - w[0] as f64) * 1000.0 / fs;
        if (IBI_GATE_MS.0..=IBI_GATE_MS.1).contains(&ms) {
            intervals_ms.push(ms);
            beat_times_s.push(w[0] as f64 / fs);
        }
    }
    Ok(IbiSeries { intervals_ms, beat_times_s })
}

pub fn hr_mean(ibi: &IbiSeries) -> Result<f64> {
    if ibi.is_empty() {
        return Err(Error::InsufficientData("no inter-beat intervals".into()));
    }
    let mean = ibi.intervals_ms.iter().sum::<f64>() / ibi.len() as f64;
    Ok(60_000.0 / mean)
}

/// Root mean square of successive differences.
pub fn rmssd(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "RMSSD needs at least 2 values, got {}",
            series.len()
        )));
    }
    let sum_sq: f64 = series.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((sum_sq / (series.len() - 1) as f64).sqrt())
}

/// Linear interpolation of the IBI sequence onto a uniform grid.
pub fn tachogram(ibi: &IbiSeries, fs: f64) -> Vec<f64> {
    let t = &ibi.beat_times_s;
    let v = &ibi.intervals_ms;
    if t.len() < 2 {
        return v.clone();
    }
    let t0 = t[0];
    let n = ((t[t.len() - 1] - t0) * fs).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let tk = t0 + k as f64 / fs;
        while j + 2 < t.len() && t[j + 1] < tk {
            j += 1;
        }
        let span = t[j + 1] - t[j];
        let frac = if span > 0.0 { ((tk - t[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(v[j] + (v[j + 1] - v[j]) * frac);
    }
    out
}

/// One-sided Welch PSD with a periodic Hann window, 50 % overlap and
/// per-segment mean removal. Returns `(frequencies, density)`.
pub fn welch_psd(x: &[f64], fs: f64, segment: usize) -> (Vec<f64>, Vec<f64>) {
    let nper = segment.min(x.len());
    if nper < 2 {
        return (vec![0.0], vec![0.0]);
    }
    let step = (nper / 2).max(1);
    let window: Vec<f64> = (0..nper).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nper as f64).cos()).collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let bins = nper / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(nper);
    let mut psd = vec![0.0; bins];
    let mut count = 0usize;
    let mut start = 0;
    while start + nper <= x.len() {
        let seg = &x[start..start + nper];
        let mean = seg.iter().sum::<f64>() / nper as f64;
        let mut buf: Vec<Complex64> =
            seg.iter().zip(&window).map(|(v, w)| Complex64::new((v - mean) * w, 0.0)).collect();
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            let mut val = buf[k].norm_sqr() / (fs * win_power);
            if k != 0 && !(nper.is_multiple_of(2) && k == nper / 2) {
                val *= 2.0;
            }
            *p += val;
        }
        count += 1;
        start += step;
    }
    for p in psd.iter_mut() {
        *p /= count as f64;
    }
    let freqs = (0..bins).map(|k| k as f64 * fs / nper as f64).collect();
    (freqs, psd)
}

fn band_power(freqs: &[f64], psd: &[f64], lo: f64, hi: f64, inclusive_hi: bool) -> f64 {
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 0.0 };
    freqs
        .iter()
        .zip(psd)
        .filter(|(f, _)| **f >= lo && if inclusive_hi { **f <= hi } else { **f < hi })
        .map(|(_, p)| p * df)
        .sum()
}

/// LF (0.04–0.15 Hz) and HF (0.15–0.40 Hz) power of the 4 Hz tachogram, in ms².
pub fn hrv_bands(ibi: &IbiSeries) -> Result<HrvBands> {
    let span = ibi.span_s();
    if ibi.len() < 2 || span < MIN_HRV_SPAN_S {
        return Err(Error::InsufficientData(format!(
            "spectral HRV needs at least {MIN_HRV_SPAN_S} s of beats, got {span:.1} s"
        )));
    }
    let tach = tachogram(ibi, TACHOGRAM_FS);
    let (freqs, psd) = welch_psd(&tach, TACHOGRAM_FS, WELCH_SEGMENT);
    let lf = band_power(&freqs, &psd, LF_BAND_HZ.0, LF_BAND_HZ.1, false);
    let hf = band_power(&freqs, &psd, HF_BAND_HZ.0, HF_BAND_HZ.1, true);
    if !(hf > 0.0) || !hf.is_finite() {
        return Err(Error::DegenerateSpectrum(format!("HF power is {hf}, LF power {lf}")));
    }
    Ok(HrvBands { lf_power: lf, hf_power: hf, lf_hf_ratio: lf / hf })
}

/// All four ECG features from a band-limited ECG segment.
///
/// A perfectly regular rhythm has no spectral power in either band; that
/// case reports `lf_power = 0` and `lf_hf_ratio = 0` instead of failing.
pub fn extract_ecg_features(ecg: &ChannelSignal) -> Result<EcgFeatures> {
    let peaks = detect_r_peaks(ecg)?;
    let ibi = ibi_series(&peaks, ecg.fs())?;
    let hr_bpm = hr_mean(&ibi)?;
    let rmssd_ms = rmssd(&ibi.intervals_ms)?;
    let (lf_power, lf_hf_ratio) = match hrv_bands(&ibi) {
        Ok(b) => (b.lf_power, b.lf_hf_ratio),
        Err(Error::DegenerateSpectrum(_)) if is_flat(&ibi.intervals_ms) => (0.0, 0.0),
        Err(e) => return Err(e),
    };
    Ok(EcgFeatures { hr_bpm, rmssd_ms, lf_power, lf_hf_ratio })
}

fn is_flat(x: &[f64]) -> bool {
    x.iter().all(|v| *v == x[0])
}
