//! Tonic/phasic EDA decomposition and skin-conductance-response features.
//!
//! Units are whatever the recording uses; nothing here converts them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{design_butterworth, filtfilt_samples, ChannelSignal, FilterSpec};

pub const MIN_SEGMENT_S: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdaConfig {
    pub tonic_cutoff_hz: f64,
    pub tonic_order: usize,
    /// Minimum onset-to-peak rise of an SCR, in channel units.
    pub scr_min_amplitude: f64,
    pub scr_min_separation_s: f64,
    /// Longest onset-to-peak rise searched when measuring an SCR amplitude.
    pub scr_max_rise_s: f64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self { tonic_cutoff_hz: 0.05, tonic_order: 4, scr_min_amplitude: 0.01, scr_min_separation_s: 1.0, scr_max_rise_s: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaDecomposition {
    pub tonic: Vec<f64>,
    pub phasic: Vec<f64>,
    pub fs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TonicStats {
    pub std: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrPeak {
    pub index: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdaFeatures {
    pub std_tonic: f64,
    pub mean_tonic: f64,
    pub min_tonic: f64,
    pub max_tonic: f64,
    pub scr_mean_amplitude: f64,
    pub scr_peak_num: usize,
}

/// Tonic = zero-phase low-pass of the signal; phasic = the residual.
pub fn decompose_tonic_phasic(eda: &ChannelSignal, config: &EdaConfig) -> Result<EdaDecomposition> {
    if eda.duration_s() < MIN_SEGMENT_S {
        return Err(Error::InsufficientData(format!(
            "EDA decomposition needs at least {MIN_SEGMENT_S} s, got {:.2} s",
            eda.duration_s()
        )));
    }
    let spec = FilterSpec::lowpass(config.tonic_cutoff_hz).with_order(config.tonic_order);
    let coeffs = design_butterworth(&spec, eda.fs())?;
    let tonic = filtfilt_samples(&coeffs, eda.samples())?;
    let phasic = eda.samples().iter().zip(&tonic).map(|(x, t)| x - t).collect();
    Ok(EdaDecomposition { tonic, phasic, fs: eda.fs() })
}

/// Population SD, mean, minimum and maximum of the tonic component.
pub fn tonic_stats(decomp: &EdaDecomposition) -> Result<TonicStats> {
    let t = &decomp.tonic;
    if t.is_empty() {
        return Err(Error::InsufficientData("empty tonic component".into()));
    }
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Rounding in the mean can nudge it past an extreme on near-constant input.
    Ok(TonicStats { std: var.sqrt(), mean: mean.clamp(min, max), min, max })
}

/// Local maxima of the phasic component whose rise from the preceding local
/// minimum reaches the amplitude threshold. The onset search stops after
/// `scr_max_rise_s`, so slow undulations left by the tonic filter do not
/// count as responses. Peaks closer than the minimum separation keep only
/// the larger one.
pub fn detect_scr_peaks(decomp: &EdaDecomposition, config: &EdaConfig) -> Vec<ScrPeak> {
    let p = &decomp.phasic;
    let min_gap = (config.scr_min_separation_s * decomp.fs).round() as usize;
    let max_rise = (config.scr_max_rise_s * decomp.fs).round() as usize;
    let mut peaks: Vec<ScrPeak> = Vec::new();
    for i in 1..p.len().saturating_sub(1) {
        if !(p[i] > p[i - 1] && p[i] >= p[i + 1]) {
            continue;
        }
        let mut onset = i;
        let earliest = i.saturating_sub(max_rise);
        while onset > earliest && p[onset - 1] <= p[onset] {
            onset -= 1;
        }
        let amplitude = p[i] - p[onset];
        if amplitude < config.scr_min_amplitude {
            continue;
        }
        let candidate = ScrPeak { index: i, amplitude };
        match peaks.last() {
            Some(last) if i - last.index < min_gap => {
                if amplitude > last.amplitude {
                    *peaks.last_mut().unwrap() = candidate;
                }
            }
            _ => peaks.push(candidate),
        }
    }
    peaks
}

pub fn extract_eda_features(eda: &ChannelSignal, config: &EdaConfig) -> Result<EdaFeatures> {
    let decomp = decompose_tonic_phasic(eda, config)?;
    let stats = tonic_stats(&decomp)?;
    let peaks = detect_scr_peaks(&decomp, config);
    let scr_mean_amplitude = if peaks.is_empty() {
        0.0
    } else {
        peaks.iter().map(|p| p.amplitude).sum::<f64>() / peaks.len() as f64
    };
    Ok(EdaFeatures {
        std_tonic: stats.std,
        mean_tonic: stats.mean,
        min_tonic: stats.min,
        max_tonic: stats.max,
        scr_mean_amplitude,
        scr_peak_num: peaks.len(),
    })
}


#[cfg(test)]
mod props {
    use super::tests::scr_shape;
    use super::*;
    use crate::signal::ChannelKind;
    use proptest::prelude::*;

    fn planted(level: f64, amps: &[f64]) -> ChannelSignal {
        let fs = 32.0;
        let s = (0..(90.0 * fs) as usize)
            .map(|i| {
                let t = i as f64 / fs;
                level + 0.1 * (t / 40.0).sin() + amps.iter().enumerate().map(|(k, a)| a * scr_shape(t - 10.0 - 15.0 * k as f64)).sum::<f64>()
            })
            .collect();
        ChannelSignal::new(s, fs, ChannelKind::Eda, "uS").unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn offset_moves_levels_only(amps in prop::collection::vec(0.05f64..0.3, 1..5), k in -3f64..3.0) {
            let cfg = EdaConfig::default();
            let a = extract_eda_features(&planted(2.0, &amps), &cfg).unwrap();
            let b = extract_eda_features(&planted(2.0 + k, &amps), &cfg).unwrap();
            for (u, v) in [(a.mean_tonic, b.mean_tonic), (a.min_tonic, b.min_tonic), (a.max_tonic, b.max_tonic)] {
                prop_assert!((v - u - k).abs() <= 1e-9);
            }
            prop_assert!((a.std_tonic - b.std_tonic).abs() <= 1e-9);
            prop_assert!((a.scr_mean_amplitude - b.scr_mean_amplitude).abs() <= 1e-9);
            prop_assert_eq!(a.scr_peak_num, b.scr_peak_num);
        }

        #[test]
        fn scaling_scales_levels(amps in prop::collection::vec(0.05f64..0.3, 1..5), c in 1.0f64..4.0) {
            let cfg = EdaConfig::default();
            let sig = planted(2.0, &amps);
            let a = extract_eda_features(&sig, &cfg).unwrap();
            let b = extract_eda_features(&sig.scaled(c), &cfg).unwrap();
            let close = |u: f64, v: f64| (v - c * u).abs() <= 1e-9 * (c * u).abs().max(1.0);
            for (u, v) in [(a.std_tonic, b.std_tonic), (a.mean_tonic, b.mean_tonic), (a.min_tonic, b.min_tonic), (a.max_tonic, b.max_tonic)] {
                prop_assert!(close(u, v), "{} vs {}", v, c * u);
            }
            // With the threshold scaled too, detection is exactly homogeneous.
            let scaled_cfg = EdaConfig { scr_min_amplitude: c * cfg.scr_min_amplitude, ..cfg };
            let s = extract_eda_features(&sig.scaled(c), &scaled_cfg).unwrap();
            prop_assert_eq!(s.scr_peak_num, a.scr_peak_num);
            prop_assert!(close(a.scr_mean_amplitude, s.scr_mean_amplitude));
            // With a fixed threshold, only bumps between thr/c and thr can appear.
            let lowered = EdaConfig { scr_min_amplitude: cfg.scr_min_amplitude / c, ..cfg };
            if extract_eda_features(&sig, &lowered).unwrap().scr_peak_num == a.scr_peak_num {
                prop_assert_eq!(b.scr_peak_num, a.scr_peak_num);
                prop_assert!(close(a.scr_mean_amplitude, b.scr_mean_amplitude));
            }
            prop_assert!(a.scr_peak_num >= amps.len());
        }

        #[test]
        fn decomposition_is_additive(x in prop::collection::vec(0f64..20.0, 1000..2000)) {
            let sig = ChannelSignal::new(x, 32.0, ChannelKind::Eda, "uS").unwrap();
            let d = decompose_tonic_phasic(&sig, &EdaConfig::default()).unwrap();
            for ((v, t), p) in sig.samples().iter().zip(&d.tonic).zip(&d.phasic) {
                prop_assert!((t + p - v).abs() <= 1e-9);
            }
        }
    }
}
