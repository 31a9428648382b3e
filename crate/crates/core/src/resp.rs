//! Breath-cycle segmentation and respiratory features.
//!
//! Inspiration runs trough → peak (the sensor reading rises on inhalation).
//! Channels mounted the other way round are flipped at ingestion.

use serde::{Deserialize, Serialize};

use crate::ecg::rmssd;
use crate::error::{Error, Result};
use crate::signal::ChannelSignal;

pub const MIN_SEGMENT_S: f64 = 30.0;
pub const MIN_CYCLE_S: f64 = 1.5;
/// Minimum swing between neighbouring extrema, as a fraction of the segment SD.
pub const PROMINENCE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreathCycle {
    pub trough_start_s: f64,
    pub peak_s: f64,
    pub trough_end_s: f64,
    pub amplitude: f64,
    pub duration_s: f64,
    pub insp_s: f64,
    pub exp_s: f64,
}

impl BreathCycle {
    pub fn from_extrema(trough_start: (f64, f64), peak: (f64, f64), trough_end: (f64, f64)) -> Self {
        let (ts, vs) = trough_start;
        let (tp, vp) = peak;
        let (te, ve) = trough_end;
        BreathCycle {
            trough_start_s: ts,
            peak_s: tp,
            trough_end_s: te,
            amplitude: vp - 0.5 * (vs + ve),
            duration_s: te - ts,
            insp_s: tp - ts,
            exp_s: te - tp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RespFeatures {
    pub rr_bpm: f64,
    pub mean_amplitude: f64,
    pub cycle_rmssd_s: f64,
    pub phase_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Extremum {
    Peak(usize),
    Trough(usize),
}

/// Alternating extrema where each swing exceeds `threshold` (hysteresis zig-zag).
fn zigzag(x: &[f64], threshold: f64) -> Vec<Extremum> {
    #[derive(Clone, Copy)]
    enum Dir {
        Unknown,
        Rising,
        Falling,
    }
    let mut out = Vec::new();
    let mut dir = Dir::Unknown;
    let (mut hi, mut lo) = (0usize, 0usize);
    for i in 0..x.len() {
        match dir {
            Dir::Unknown => {
                if x[i] > x[hi] {
                    hi = i;
                }
                if x[i] < x[lo] {
                    lo = i;
                }
                if x[i] >= x[lo] + threshold && lo < i {
                    out.push(Extremum::Trough(lo));
                    dir = Dir::Rising;
                    hi = i;
                } else if x[i] <= x[hi] - threshold && hi < i {
                    out.push(Extremum::Peak(hi));
                    dir = Dir::Falling;
                    lo = i;
                }
            }
            Dir::Rising => {
                if x[i] > x[hi] {
                    hi = i;
                } else if x[i] <= x[hi] - threshold {
                    out.push(Extremum::Peak(hi));
                    dir = Dir::Falling;
                    lo = i;
                }
            }
            Dir::Falling => {
                if x[i] < x[lo] {
                    lo = i;
                } else if x[i] >= x[lo] + threshold {
                    out.push(Extremum::Trough(lo));
                    dir = Dir::Rising;
                    hi = i;
                }
            }
        }
    }
    // An extremum on the first sample only marks where the recording starts.
    if matches!(out.first(), Some(Extremum::Peak(0) | Extremum::Trough(0))) {
        out.remove(0);
    }
    out
}

/// Complete trough → peak → trough cycles; partial cycles at either edge are dropped.
pub fn detect_breath_cycles(resp: &ChannelSignal) -> Result<Vec<BreathCycle>> {
    if resp.duration_s() < MIN_SEGMENT_S {
        return Err(Error::InsufficientData(format!(
            "breath segmentation needs at least {MIN_SEGMENT_S} s, got {:.2} s",
            resp.duration_s()
        )));
    }
    let x = resp.samples();
    let fs = resp.fs();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::NoCyclesDetected);
    }
    let extrema = zigzag(x, PROMINENCE_FRACTION * sd);
    let at = |i: usize| (i as f64 / fs, x[i]);
    let cycles: Vec<BreathCycle> = extrema
        .windows(3)
        .filter_map(|w| match *w {
            [Extremum::Trough(a), Extremum::Peak(p), Extremum::Trough(b)] => {
                Some(BreathCycle::from_extrema(at(a), at(p), at(b)))
            }
            _ => None,
        })
        .filter(|c| c.duration_s >= MIN_CYCLE_S && c.amplitude > 0.0)
        .collect();
    if cycles.is_empty() {
        return Err(Error::NoCyclesDetected);
    }
    Ok(cycles)
}

fn require_cycles(cycles: &[BreathCycle]) -> Result<()> {
    if cycles.is_empty() {
        Err(Error::InsufficientData("no breath cycles".into()))
    } else {
        Ok(())
    }
}

fn mean_of(cycles: &[BreathCycle], f: impl Fn(&BreathCycle) -> f64) -> f64 {
    cycles.iter().map(f).sum::<f64>() / cycles.len() as f64
}

/// Breaths per minute: 60 / mean cycle duration.
pub fn resp_rate(cycles: &[BreathCycle]) -> Result<f64> {
    require_cycles(cycles)?;
    Ok(60.0 / mean_of(cycles, |c| c.duration_s))
}

pub fn mean_amplitude(cycles: &[BreathCycle]) -> Result<f64> {
    require_cycles(cycles)?;
    Ok(mean_of(cycles, |c| c.amplitude))
}

/// RMSSD of consecutive cycle durations, in seconds.
pub fn cycle_rmssd(cycles: &[BreathCycle]) -> Result<f64> {
    let durations: Vec<f64> = cycles.iter().map(|c| c.duration_s).collect();
    rmssd(&durations)
}

/// Mean inspiratory duration over mean expiratory duration.
pub fn phase_ratio(cycles: &[BreathCycle]) -> Result<f64> {
    require_cycles(cycles)?;
    let exp = mean_of(cycles, |c| c.exp_s);
    if !(exp > 0.0) {
        return Err(Error::DegenerateCycle("mean expiratory duration is zero".into()));
    }
    Ok(mean_of(cycles, |c| c.insp_s) / exp)
}

pub fn extract_resp_features(resp: &ChannelSignal) -> Result<RespFeatures> {
    let cycles = detect_breath_cycles(resp)?;
    Ok(RespFeatures {
        rr_bpm: resp_rate(&cycles)?,
        mean_amplitude: mean_amplitude(&cycles)?,
        cycle_rmssd_s: cycle_rmssd(&cycles)?,
        phase_ratio: phase_ratio(&cycles)?,
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::signal::ChannelKind;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn breathing(rate_hz: f64, skew: f64, phase: f64) -> Vec<f64> {
        let fs = 100.0;
        (0..(60.0 * fs) as usize)
            .map(|i| {
                let t = i as f64 / fs;
                let p = 2.0 * PI * rate_hz * t + phase;
                p.sin() + skew * (2.0 * p).sin() + 0.2 * (2.0 * PI * 0.05 * t).sin()
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn scaling_only_scales_amplitude(rate in 0.15f64..0.4, skew in 0.0f64..0.2, phase in 0.0f64..std::f64::consts::TAU, c in 0.1f64..10.0) {
            let x = breathing(rate, skew, phase);
            let sig = ChannelSignal::new(x, 100.0, ChannelKind::Resp, "a.u.").unwrap();
            let a = extract_resp_features(&sig).unwrap();
            let b = extract_resp_features(&sig.scaled(c)).unwrap();
            let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1e-12);
            prop_assert!(close(b.mean_amplitude, c * a.mean_amplitude));
            prop_assert!(close(b.rr_bpm, a.rr_bpm));
            prop_assert!(close(b.cycle_rmssd_s, a.cycle_rmssd_s));
            prop_assert!(close(b.phase_ratio, a.phase_ratio));
            prop_assert!(a.phase_ratio.is_finite() && a.phase_ratio > 0.0);
        }
    }
}
