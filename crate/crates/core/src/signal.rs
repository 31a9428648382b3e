//! Channel harmonisation: linear resampling onto a common grid and
//! zero-phase Butterworth band limiting per channel kind.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Common analysis rate every channel is brought to before feature extraction.
pub const TARGET_FS: f64 = 100.0;
pub const DEFAULT_FILTER_ORDER: usize = 4;

pub const ECG_BAND_HZ: (f64, f64) = (3.0, 45.0);
pub const RESP_BAND_HZ: (f64, f64) = (0.1, 0.35);
pub const EDA_LOWPASS_HZ: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChannelKind {
    Ecg,
    Eda,
    Resp,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::Ecg, ChannelKind::Eda, ChannelKind::Resp];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Ecg => "ECG",
            ChannelKind::Eda => "EDA",
            ChannelKind::Resp => "RESP",
        }
    }

    /// The band filter applied after resampling.
    pub fn filter_spec(self) -> FilterSpec {
        match self {
            ChannelKind::Ecg => FilterSpec::bandpass(ECG_BAND_HZ.0, ECG_BAND_HZ.1),
            ChannelKind::Resp => FilterSpec::bandpass(RESP_BAND_HZ.0, RESP_BAND_HZ.1),
            ChannelKind::Eda => FilterSpec::lowpass(EDA_LOWPASS_HZ),
        }
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A uniformly sampled single-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSignal {
    samples: Vec<f64>,
    fs: f64,
    kind: ChannelKind,
    units: String,
}

impl ChannelSignal {
    /// Validates the samples: non-empty, all finite, `fs > 0`.
    pub fn new(samples: Vec<f64>, fs: f64, kind: ChannelKind, units: impl Into<String>) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidSignal(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData(format!("{kind} channel has no samples")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("{kind} sample {i} is not finite")));
        }
        Ok(Self { samples, fs, kind, units: units.into() })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Length in seconds, counting each sample as one sampling period.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same metadata, new samples. Samples produced by this crate are finite by construction.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self { samples, fs: self.fs, kind: self.kind, units: self.units.clone() }
    }

    /// Samples in `[start, end)` (sample indices, clamped).
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        self.with_samples(self.samples[start..end].to_vec())
    }

    pub fn scaled(&self, gain: f64) -> Self {
        self.with_samples(self.samples.iter().map(|v| v * gain).collect())
    }
}

/// Linear interpolation onto a uniform grid `k / target_fs` spanning the
/// nominal duration `n / fs`. Grid points past the last input sample hold
/// its value, so durations survive the rate change.
pub fn resample_linear(signal: &ChannelSignal, target_fs: f64) -> Result<ChannelSignal> {
    if !(target_fs.is_finite() && target_fs > 0.0) {
        return Err(Error::InvalidSignal(format!("target rate must be positive, got {target_fs}")));
    }
    let x = signal.samples();
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("resampling needs at least 2 samples, got {n}")));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSignal(format!("sample {i} is not finite")));
    }
    let m = ((n as f64 * target_fs / signal.fs()).round() as usize).max(1);
    let out = (0..m)
        .map(|k| {
            let pos = (k as f64 * signal.fs()) / target_fs;
            let i = (pos.floor() as usize).min(n - 1);
            let frac = pos - i as f64;
            if i + 1 >= n || frac <= 0.0 {
                x[i]
            } else {
                x[i] + (x[i + 1] - x[i]) * frac
            }
        })
        .collect();
    Ok(ChannelSignal { samples: out, fs: target_fs, kind: signal.kind(), units: signal.units().to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Bandpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// One cutoff for lowpass, `[low, high]` for bandpass.
    pub cutoffs_hz: [f64; 2],
    pub order: usize,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn lowpass(cutoff_hz: f64) -> Self {
        Self {
            kind: FilterKind::Lowpass,
            cutoffs_hz: [cutoff_hz, cutoff_hz],
            order: DEFAULT_FILTER_ORDER,
            zero_phase: true,
        }
    }

    pub fn bandpass(low_hz: f64, high_hz: f64) -> Self {
        Self {
            kind: FilterKind::Bandpass,
            cutoffs_hz: [low_hz, high_hz],
            order: DEFAULT_FILTER_ORDER,
            zero_phase: true,
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    fn validate(&self, fs: f64) -> Result<()> {
        if self.order == 0 || self.order > 12 {
            return Err(Error::InvalidCutoff(format!("filter order {} outside 1..=12", self.order)));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidCutoff(format!("sampling rate must be positive, got {fs}")));
        }
        let nyquist = fs / 2.0;
        let cutoffs: &[f64] = match self.kind {
            FilterKind::Lowpass => &self.cutoffs_hz[..1],
            FilterKind::Bandpass => &self.cutoffs_hz[..],
        };
        for &c in cutoffs {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidCutoff(format!("cutoff {c} Hz must be positive")));
            }
            if c >= nyquist {
                return Err(Error::InvalidCutoff(format!(
                    "cutoff {c} Hz is not below the Nyquist frequency {nyquist} Hz"
                )));
            }
        }
        if self.kind == FilterKind::Bandpass && self.cutoffs_hz[0] >= self.cutoffs_hz[1] {
            return Err(Error::InvalidCutoff(format!(
                "band-pass low cutoff {} Hz must be below high cutoff {} Hz",
                self.cutoffs_hz[0], self.cutoffs_hz[1]
            )));
        }
        Ok(())
    }
}

/// One biquad in transposed direct form II, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2])
    }

    /// State that makes the section's output constant for a unit-step input.
    fn unit_step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[2] * g;
        let z1 = self.b[1] - self.a[1] * g + z2;
        [z1, z2]
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z_inv2 = z_inv * z_inv;
        let num = self.b[0] + self.b[1] * z_inv + self.b[2] * z_inv2;
        let den = 1.0 + self.a[1] * z_inv + self.a[2] * z_inv2;
        num / den
    }
}

/// A Butterworth filter realised as cascaded second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub spec: FilterSpec,
    pub fs: f64,
    pub sections: Vec<Biquad>,
}

impl FilterCoefficients {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    /// Samples of odd-reflection padding added at each end by [`filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * self.spec.order
    }

    fn apply(&self, x: &[f64], x0: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut level = x0;
        for s in &self.sections {
            let [mut z1, mut z2] = s.unit_step_state();
            z1 *= level;
            z2 *= level;
            for v in y.iter_mut() {
                let xi = *v;
                let yi = s.b[0] * xi + z1;
                z1 = s.b[1] * xi - s.a[1] * yi + z2;
                z2 = s.b[2] * xi - s.a[2] * yi;
                *v = yi;
            }
            level *= s.dc_gain();
        }
        y
    }
}

/// Bilinear-transform Butterworth design with frequency prewarping.
pub fn design_butterworth(spec: &FilterSpec, fs: f64) -> Result<FilterCoefficients> {
    spec.validate(fs)?;
    let n = spec.order;
    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (PI * f / fs).tan();

    let prototype: Vec<Complex64> = (1..=n)
        .map(|k| {
            let theta = PI * (2 * k + n - 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    let (analog_poles, analog_zero_count_at_origin, analog_gain, digital_zeros): (Vec<Complex64>, usize, f64, Vec<f64>) =
        match spec.kind {
            FilterKind::Lowpass => {
                let wc = warp(spec.cutoffs_hz[0]);
                let poles = prototype.iter().map(|p| p * wc).collect();
                (poles, 0, wc.powi(n as i32), vec![-1.0; n])
            }
            FilterKind::Bandpass => {
                let wl = warp(spec.cutoffs_hz[0]);
                let wh = warp(spec.cutoffs_hz[1]);
                let bw = wh - wl;
                let w0_sq = wl * wh;
                let mut poles = Vec::with_capacity(2 * n);
                for p in &prototype {
                    let half = p * (bw / 2.0);
                    let root = (half * half - w0_sq).sqrt();
                    poles.push(half + root);
                    poles.push(half - root);
                }
                let zeros = (0..2 * n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
                (poles, n, bw.powi(n as i32), zeros)
            }
        };

    let fs2c = Complex64::new(fs2, 0.0);
    let mut gain_num = Complex64::new(analog_gain, 0.0);
    for _ in 0..analog_zero_count_at_origin {
        gain_num *= fs2c;
    }
    let gain_den: Complex64 = analog_poles.iter().map(|p| fs2c - p).product();
    let gain = (gain_num / gain_den).re;
    let digital_poles: Vec<Complex64> = analog_poles.iter().map(|p| (fs2c + p) / (fs2c - p)).collect();

    let sections = pair_sections(&digital_poles, &digital_zeros, gain);
    Ok(FilterCoefficients { spec: *spec, fs, sections })
}

fn pair_sections(poles: &[Complex64], zeros: &[f64], gain: f64) -> Vec<Biquad> {
    const IM_TOL: f64 = 1e-12;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > IM_TOL).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= IM_TOL).map(|p| p.re).collect();
    // Poles closest to the unit circle last, so the high-Q sections see pre-smoothed input.
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let mut zeros = zeros.iter().copied();
    let mut sections = Vec::new();
    let mut take_b = |count: usize| -> [f64; 3] {
        match count {
            2 => {
                let z1 = zeros.next().unwrap_or(0.0);
                let z2 = zeros.next().unwrap_or(0.0);
                [1.0, -(z1 + z2), z1 * z2]
            }
            _ => {
                let z1 = zeros.next().unwrap_or(0.0);
                [1.0, -z1, 0.0]
            }
        }
    };
    for p in complex {
        let b = take_b(2);
        sections.push(Biquad { b, a: [1.0, -2.0 * p.re, p.norm_sqr()] });
    }
    let mut reals = real.chunks(2);
    for chunk in reals.by_ref() {
        if let [p1, p2] = chunk {
            let b = take_b(2);
            sections.push(Biquad { b, a: [1.0, -(p1 + p2), p1 * p2] });
        } else {
            let b = take_b(1);
            sections.push(Biquad { b, a: [1.0, -chunk[0], 0.0] });
        }
    }
    if let Some(first) = sections.first_mut() {
        for c in first.b.iter_mut() {
            *c *= gain;
        }
    }
    sections
}

fn forward_backward(coeffs: &FilterCoefficients, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let pad = coeffs.pad_len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 0..pad {
        ext.push(2.0 * x[n - 1] - x[n - 2 - i]);
    }
    let mut y = coeffs.apply(&ext, ext[0]);
    y.reverse();
    let mut y = coeffs.apply(&y, y[0]);
    y.reverse();
    y.drain(..pad);
    y.truncate(n);
    y
}

/// Zero-phase filtering of raw samples.
///
/// The forward-backward pass runs on an odd-reflected copy padded by
/// `3 * order` samples at both ends with steady-state initial conditions.
/// The result is the mean of the forward-backward and backward-forward
/// passes, which makes the operation commute exactly with time reversal.
pub fn filtfilt_samples(coeffs: &FilterCoefficients, x: &[f64]) -> Result<Vec<f64>> {
    let pad = coeffs.pad_len();
    if x.len() <= pad {
        return Err(Error::InsufficientData(format!(
            "zero-phase filtering needs more than {pad} samples, got {}",
            x.len()
        )));
    }
    let fb = forward_backward(coeffs, x);
    let reversed: Vec<f64> = x.iter().rev().copied().collect();
    let mut bf = forward_backward(coeffs, &reversed);
    bf.reverse();
    Ok(fb.iter().zip(&bf).map(|(a, b)| 0.5 * (a + b)).collect())
}

pub fn filtfilt(coeffs: &FilterCoefficients, signal: &ChannelSignal) -> Result<ChannelSignal> {
    if (coeffs.fs - signal.fs()).abs() > 1e-9 * coeffs.fs {
        return Err(Error::InvalidSignal(format!(
            "filter designed for {} Hz applied to a {} Hz signal",
            coeffs.fs,
            signal.fs()
        )));
    }
    Ok(signal.with_samples(filtfilt_samples(coeffs, signal.samples())?))
}

/// Resample to [`TARGET_FS`], then apply the kind's band filter.
pub fn preprocess_channel(signal: &ChannelSignal) -> Result<ChannelSignal> {
    let resampled = resample_linear(signal, TARGET_FS)?;
    let coeffs = design_butterworth(&signal.kind().filter_spec(), TARGET_FS)?;
    filtfilt(&coeffs, &resampled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: f64, secs: f64, kind: ChannelKind) -> ChannelSignal {
        let n = (fs * secs).round() as usize;
        let s = (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect();
        ChannelSignal::new(s, fs, kind, "a.u.").unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn rejects_non_finite_samples() {
        let err = ChannelSignal::new(vec![1.0, f64::NAN], 100.0, ChannelKind::Ecg, "mV").unwrap_err();
        assert!(matches!(err, Error::InvalidSignal(_)));
        assert!(ChannelSignal::new(vec![1.0], 0.0, ChannelKind::Ecg, "mV").is_err());
    }

    #[test]
    fn resample_constant() {
        let s = ChannelSignal::new(vec![3.0; 256], 256.0, ChannelKind::Eda, "uS").unwrap();
        let r = resample_linear(&s, 100.0).unwrap();
        assert_eq!(r.len(), 100);
        assert_eq!(r.fs(), 100.0);
        assert!(r.samples().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn resample_ramp_is_exact() {
        let n = 201;
        let s = ChannelSignal::new((0..n).map(|i| i as f64 / 200.0).collect(), 200.0, ChannelKind::Resp, "")
            .unwrap();
        let r = resample_linear(&s, 100.0).unwrap();
        assert_eq!(r.len(), 101);
        for (k, v) in r.samples().iter().enumerate() {
            assert!((v - k as f64 / 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_sine_close_to_analytic() {
        let s = tone(1.0, 256.0, 10.0, ChannelKind::Resp);
        let r = resample_linear(&s, 100.0).unwrap();
        let worst = r
            .samples()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - (2.0 * PI * k as f64 / 100.0).sin()).abs())
            .fold(0.0, f64::max);
        // Linear interpolation error bound: h^2/8 * max|x''| = (1/256)^2/8 * (2π)^2.
        assert!(worst < 1e-3, "max deviation {worst}");
    }

    #[test]
    fn resample_short_input() {
        let s = ChannelSignal::new(vec![1.0], 100.0, ChannelKind::Ecg, "").unwrap();
        assert!(matches!(resample_linear(&s, 100.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn lowpass_dc_gain() {
        let c = design_butterworth(&FilterSpec::lowpass(5.0), 100.0).unwrap();
        assert!((c.magnitude(0.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bandpass_center_gain() {
        let c = design_butterworth(&FilterSpec::bandpass(3.0, 45.0), 100.0).unwrap();
        let center = (3.0f64 * 45.0).sqrt();
        assert!((c.magnitude(center) - 1.0).abs() < 0.05);
        assert_eq!(c.sections.len(), 4);
    }

    #[test]
    fn cutoff_above_nyquist() {
        let err = design_butterworth(&FilterSpec::bandpass(60.0, 70.0), 100.0).unwrap_err();
        assert!(matches!(err, Error::InvalidCutoff(_)));
        let err = design_butterworth(&FilterSpec::bandpass(10.0, 5.0), 100.0).unwrap_err();
        assert!(matches!(err, Error::InvalidCutoff(_)));
    }

    #[test]
    fn odd_order_lowpass() {
        let c = design_butterworth(&FilterSpec::lowpass(10.0).with_order(3), 100.0).unwrap();
        assert_eq!(c.sections.len(), 2);
        assert!((c.magnitude(0.0) - 1.0).abs() < 1e-12);
        // -3 dB at the cutoff.
        assert!((c.magnitude(10.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn filtfilt_zero_lag_in_band() {
        let s = tone(20.0, 100.0, 10.0, ChannelKind::Ecg);
        let c = design_butterworth(&ChannelKind::Ecg.filter_spec(), 100.0).unwrap();
        let y = filtfilt(&c, &s).unwrap();
        let x = s.samples();
        let y = y.samples();
        let xcorr = |lag: i64| -> f64 {
            (0..x.len() as i64)
                .filter_map(|i| {
                    let j = i + lag;
                    (j >= 0 && (j as usize) < y.len()).then(|| x[i as usize] * y[j as usize])
                })
                .sum()
        };
        let best = (-10..=10).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn filtfilt_attenuates_out_of_band() {
        let s = tone(0.5, 100.0, 60.0, ChannelKind::Ecg);
        let c = design_butterworth(&ChannelKind::Ecg.filter_spec(), 100.0).unwrap();
        let y = filtfilt(&c, &s).unwrap();
        assert!(rms(y.samples()) <= 0.1 * rms(s.samples()));
    }

    #[test]
    fn filtfilt_preserves_constant() {
        let s = ChannelSignal::new(vec![2.5; 500], 100.0, ChannelKind::Eda, "uS").unwrap();
        let c = design_butterworth(&FilterSpec::lowpass(5.0), 100.0).unwrap();
        let y = filtfilt(&c, &s).unwrap();
        assert!(y.samples().iter().all(|v| (v - 2.5).abs() < 1e-6));
    }

    #[test]
    fn filtfilt_too_short() {
        let s = ChannelSignal::new(vec![1.0; 12], 100.0, ChannelKind::Eda, "").unwrap();
        let c = design_butterworth(&FilterSpec::lowpass(5.0), 100.0).unwrap();
        assert!(matches!(filtfilt(&c, &s), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn preprocess_rates() {
        let ecg = tone(10.0, 1000.0, 12.0, ChannelKind::Ecg);
        assert_eq!(preprocess_channel(&ecg).unwrap().fs(), 100.0);
        let eda = ChannelSignal::new(vec![2.0; 256 * 20], 256.0, ChannelKind::Eda, "uS").unwrap();
        let out = preprocess_channel(&eda).unwrap();
        assert_eq!(out.fs(), 100.0);
        assert!(out.samples().iter().all(|v| (v - 2.0).abs() < 1e-6));
    }

    #[test]
    fn preprocess_resp_keeps_breathing_tone() {
        let resp = tone(0.25, 100.0, 240.0, ChannelKind::Resp);
        let out = preprocess_channel(&resp).unwrap();
        let ratio = rms(out.samples()) / rms(resp.samples());
        assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
    }
}
