//! The fourteen per-segment physiological features.

use serde::{Deserialize, Serialize};

use crate::dataset::Segment;
use crate::ecg::extract_ecg_features;
use crate::eda::{extract_eda_features, EdaConfig};
use crate::error::{Error, Result};
use crate::resp::extract_resp_features;
use crate::signal::ChannelKind;

pub const FEATURE_COUNT: usize = 14;

/// Column names, in output order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "ECG-HR",
    "ECG-RMSSD",
    "ECG-LF",
    "ECG-LF_HF",
    "RESP-RR",
    "RESP-MeanAmplitude",
    "RESP-RMSSD",
    "RESP-PhaseDurationRatio",
    "EDA-StdTonic",
    "EDA-MeanTonic",
    "EDA-MinTonic",
    "EDA-MaxTonic",
    "EDA-SCRMeanAmplitude",
    "EDA-SCRPeakNum",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub ecg_hr: f64,
    pub ecg_rmssd: f64,
    pub ecg_lf: f64,
    pub ecg_lf_hf: f64,
    pub resp_rr: f64,
    pub resp_mean_amplitude: f64,
    pub resp_rmssd: f64,
    pub resp_phase_ratio: f64,
    pub eda_std_tonic: f64,
    pub eda_mean_tonic: f64,
    pub eda_min_tonic: f64,
    pub eda_max_tonic: f64,
    pub eda_scr_mean_amplitude: f64,
    pub eda_scr_peak_num: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.ecg_hr,
            self.ecg_rmssd,
            self.ecg_lf,
            self.ecg_lf_hf,
            self.resp_rr,
            self.resp_mean_amplitude,
            self.resp_rmssd,
            self.resp_phase_ratio,
            self.eda_std_tonic,
            self.eda_mean_tonic,
            self.eda_min_tonic,
            self.eda_max_tonic,
            self.eda_scr_mean_amplitude,
            self.eda_scr_peak_num,
        ]
    }

    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        Self {
            ecg_hr: v[0],
            ecg_rmssd: v[1],
            ecg_lf: v[2],
            ecg_lf_hf: v[3],
            resp_rr: v[4],
            resp_mean_amplitude: v[5],
            resp_rmssd: v[6],
            resp_phase_ratio: v[7],
            eda_std_tonic: v[8],
            eda_mean_tonic: v[9],
            eda_min_tonic: v[10],
            eda_max_tonic: v[11],
            eda_scr_mean_amplitude: v[12],
            eda_scr_peak_num: v[13],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.to_array()[i])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub eda: EdaConfig,
}

/// Runs the three channel extractors on one preprocessed segment.
pub fn extract_features(segment: &Segment, config: &FeatureConfig) -> Result<FeatureVector> {
    let channel = |kind: ChannelKind| {
        segment
            .channels
            .get(&kind)
            .ok_or_else(|| Error::InsufficientData(format!("segment has no {kind} channel")))
    };
    let ecg = extract_ecg_features(channel(ChannelKind::Ecg)?)?;
    let resp = extract_resp_features(channel(ChannelKind::Resp)?)?;
    let eda = extract_eda_features(channel(ChannelKind::Eda)?, &config.eda)?;
    let fv = FeatureVector {
        ecg_hr: ecg.hr_bpm,
        ecg_rmssd: ecg.rmssd_ms,
        ecg_lf: ecg.lf_power,
        ecg_lf_hf: ecg.lf_hf_ratio,
        resp_rr: resp.rr_bpm,
        resp_mean_amplitude: resp.mean_amplitude,
        resp_rmssd: resp.cycle_rmssd_s,
        resp_phase_ratio: resp.phase_ratio,
        eda_std_tonic: eda.std_tonic,
        eda_mean_tonic: eda.mean_tonic,
        eda_min_tonic: eda.min_tonic,
        eda_max_tonic: eda.max_tonic,
        eda_scr_mean_amplitude: eda.scr_mean_amplitude,
        eda_scr_peak_num: eda.scr_peak_num as f64,
    };
    if !fv.is_finite() {
        return Err(Error::InvalidSignal("non-finite feature value".into()));
    }
    Ok(fv)
}
