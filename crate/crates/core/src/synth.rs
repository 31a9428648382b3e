//! Seeded synthetic studies with planted drowsy-state effects, used as
//! fixtures for the extraction and modelling pipeline.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{Assessment, DrowsyType};
use crate::io::{write_json, write_labels_csv, write_signal_csv, ChannelEntry, LabelRow, Manifest, PipelineError, PipelineResult, RecordingEntry, Windowing};
use crate::signal::ChannelKind;

/// Samples are rounded to multiples of this step so files stay compact.
pub const QUANTUM: f64 = 1.0 / 4096.0;

/// Drowsy-minus-awake shifts applied to every drowsy window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedEffects {
    pub hr_bpm: f64,
    /// Relative change of the breathing amplitude (−0.25 = 25 % smaller).
    pub resp_amplitude_fraction: f64,
    /// Drop of the tonic EDA minimum, µS (negative lowers it). Half of it is a
    /// level shift, the other half a dip in the middle of each drowsy window.
    pub eda_tonic_drop_us: f64,
}

impl Default for PlantedEffects {
    fn default() -> Self {
        Self { hr_bpm: 4.0, resp_amplitude_fraction: -0.12, eda_tonic_drop_us: -0.5 }
    }
}

impl PlantedEffects {
    pub fn none() -> Self {
        Self { hr_bpm: 0.0, resp_amplitude_fraction: 0.0, eda_tonic_drop_us: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthStudyConfig {
    pub dataset_id: String,
    pub drowsy_type: DrowsyType,
    /// Approximate share of drowsy windows per participant.
    pub drowsy_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub studies: Vec<SynthStudyConfig>,
    pub participants_per_study: usize,
    pub windows_per_participant: usize,
    pub window_s: f64,
    pub effects: PlantedEffects,
    /// Chance that an awake window is rated KSS 6 (and so excluded).
    pub kss_undecided_fraction: f64,
    pub ecg_fs: f64,
    pub eda_fs: f64,
    pub resp_fs: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            studies: vec![SynthStudyConfig {
                dataset_id: "synth".into(),
                drowsy_type: DrowsyType::SleepDeprivation,
                drowsy_fraction: 0.5,
            }],
            participants_per_study: 24,
            windows_per_participant: 10,
            window_s: 120.0,
            effects: PlantedEffects::default(),
            kss_undecided_fraction: 0.05,
            ecg_fs: 128.0,
            eda_fs: 32.0,
            resp_fs: 32.0,
        }
    }
}

impl SynthConfig {
    /// One study per inducer, with different drowsy shares.
    pub fn pooled() -> Self {
        let studies = [
            ("fatigue", DrowsyType::PhysicalFatigue, 0.3),
            ("arousal", DrowsyType::LowArousal, 0.45),
            ("sleepdep", DrowsyType::SleepDeprivation, 0.6),
            ("mental", DrowsyType::MentalFatigue, 0.75),
        ]
        .into_iter()
        .map(|(id, t, f)| SynthStudyConfig { dataset_id: id.into(), drowsy_type: t, drowsy_fraction: f })
        .collect();
        Self { studies, participants_per_study: 8, ..Self::default() }
    }

    pub fn session_s(&self) -> f64 {
        self.windows_per_participant as f64 * self.window_s
    }
}

/// Per-participant ground truth, recorded in the sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedParticipant {
    pub participant_id: String,
    pub baseline_hr_bpm: f64,
    pub resp_rate_bpm: f64,
    pub resp_amplitude: f64,
    pub eda_level_us: f64,
    pub scr_rate_per_min: f64,
    pub drowsy_windows: Vec<bool>,
    /// Heart rate used for each window, after the planted shift and jitter.
    pub window_hr_bpm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRecord {
    pub seed: u64,
    pub dataset_id: String,
    pub effects: PlantedEffects,
    pub participants: Vec<PlantedParticipant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub participant_id: String,
    pub channels: BTreeMap<ChannelKind, Vec<f64>>,
}

/// A generated study held in memory; `manifest` paths are relative.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthStudy {
    pub manifest: Manifest,
    pub labels: Vec<LabelRow>,
    pub recordings: Vec<SynthRecording>,
    pub planted: PlantedRecord,
}

fn quantize(v: f64) -> f64 {
    (v / QUANTUM).round() * QUANTUM
}

/// Skin-conductance response with unit peak height.
pub fn scr_shape(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (rise, decay) = (0.75, 2.0);
    let raw = |t: f64| (-t / decay).exp() - (-t / rise).exp();
    let t_peak = (rise * decay / (decay - rise)) * (decay / rise).ln();
    raw(t) / raw(t_peak)
}

fn gauss(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("valid normal").sample(rng)
}

/// Awake windows first, then drowsy ones; both classes always present.
fn window_states(rng: &mut ChaCha8Rng, n: usize, drowsy_fraction: f64) -> Vec<bool> {
    let target = (n as f64 * (1.0 - drowsy_fraction)).round() as i64 + rng.random_range(-1..=1);
    let switch = target.clamp(1, n as i64 - 1) as usize;
    (0..n).map(|k| k >= switch).collect()
}

struct Participant {
    planted: PlantedParticipant,
    resp_amp_windows: Vec<f64>,
}

fn draw_participant(rng: &mut ChaCha8Rng, pid: String, cfg: &SynthConfig, study: &SynthStudyConfig) -> Participant {
    let n = cfg.windows_per_participant;
    let states = window_states(rng, n, study.drowsy_fraction);
    let baseline_hr_bpm = gauss(rng, 70.0, 2.0).clamp(55.0, 90.0);
    let resp_rate_bpm = gauss(rng, 14.0, 1.2).clamp(11.0, 17.0);
    let resp_amplitude = gauss(rng, 1.0, 0.06).max(0.5);
    let eda_level_us = gauss(rng, 5.0, 0.25).max(2.0);
    let scr_rate_per_min = gauss(rng, 3.0, 0.5).max(1.0);
    let e = cfg.effects;
    let window_hr_bpm = states
        .iter()
        .map(|&d| baseline_hr_bpm + if d { e.hr_bpm } else { 0.0 } + gauss(rng, 0.0, 3.0))
        .collect();
    let resp_amp_windows = states
        .iter()
        .map(|&d| resp_amplitude * (1.0 + if d { e.resp_amplitude_fraction } else { 0.0 }) * (1.0 + gauss(rng, 0.0, 0.1)))
        .collect();
    Participant {
        planted: PlantedParticipant {
            participant_id: pid,
            baseline_hr_bpm,
            resp_rate_bpm,
            resp_amplitude,
            eda_level_us,
            scr_rate_per_min,
            drowsy_windows: states,
            window_hr_bpm,
        },
        resp_amp_windows,
    }
}

fn synth_ecg(rng: &mut ChaCha8Rng, p: &PlantedParticipant, cfg: &SynthConfig) -> Vec<f64> {
    let total = cfg.session_s();
    let n = (total * cfg.ecg_fs).round() as usize;
    let (rsa_phase, lf_phase, wander_phase) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let f_resp = p.resp_rate_bpm / 60.0;
    let mut beats = Vec::new();
    let mut t = rng.random_range(0.1..0.6);
    while t < total + 1.0 {
        beats.push(t);
        let k = ((t / cfg.window_s) as usize).min(p.window_hr_bpm.len() - 1);
        let rr = 60.0 / p.window_hr_bpm[k]
            + 0.025 * (2.0 * PI * f_resp * t + rsa_phase).sin()
            + 0.02 * (2.0 * PI * 0.1 * t + lf_phase).sin()
            + gauss(rng, 0.0, 0.01);
        t += rr.max(0.35);
    }
    // (offset s, width s, amplitude mV) of the P, Q, R, S and T waves.
    const WAVES: [(f64, f64, f64); 5] = [(-0.18, 0.025, 0.12), (-0.03, 0.008, -0.12), (0.0, 0.01, 1.0), (0.03, 0.008, -0.25), (0.25, 0.04, 0.3)];
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / cfg.ecg_fs;
            0.15 * (2.0 * PI * 0.15 * t + wander_phase).sin() + gauss(rng, 0.0, 0.02)
        })
        .collect();
    for &b in &beats {
        let lo = (((b - 0.4) * cfg.ecg_fs).floor().max(0.0)) as usize;
        let hi = (((b + 0.5) * cfg.ecg_fs).ceil() as usize).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / cfg.ecg_fs - b;
            *v += WAVES.iter().map(|(o, w, a)| a * (-0.5 * ((t - o) / w).powi(2)).exp()).sum::<f64>();
        }
    }
    x
}

fn synth_resp(rng: &mut ChaCha8Rng, p: &PlantedParticipant, amps: &[f64], cfg: &SynthConfig) -> Vec<f64> {
    let n = (cfg.session_s() * cfg.resp_fs).round() as usize;
    let dt = 1.0 / cfg.resp_fs;
    let (mut phase, drift_phase) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let f0 = p.resp_rate_bpm / 60.0;
    (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let k = ((t / cfg.window_s) as usize).min(amps.len() - 1);
            phase += 2.0 * PI * f0 * (1.0 + 0.05 * (2.0 * PI * 0.02 * t).sin()) * dt;
            amps[k] * (phase.sin() + 0.1 * (2.0 * phase).sin())
                + 0.3 * (2.0 * PI * 0.01 * t + drift_phase).sin()
                + gauss(rng, 0.0, 0.02)
        })
        .collect()
}

fn synth_eda(rng: &mut ChaCha8Rng, p: &PlantedParticipant, cfg: &SynthConfig) -> Vec<f64> {
    let total = cfg.session_s();
    let n = (total * cfg.eda_fs).round() as usize;
    let phases: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
    let count = Poisson::new(p.scr_rate_per_min * total / 60.0).expect("positive rate").sample(rng) as usize;
    let amp_dist = Exp::new(5.0).expect("positive rate");
    let scrs: Vec<(f64, f64)> = (0..count)
        .map(|_| (rng.random_range(0.0..total), 0.05 + amp_dist.sample(rng)))
        .collect();
    // Per-window level offsets, interpolated between window centres.
    let offsets: Vec<f64> = (0..p.drowsy_windows.len()).map(|_| gauss(rng, 0.0, 0.25)).collect();
    let offset_at = |t: f64| {
        let u = (t / cfg.window_s - 0.5).clamp(0.0, (offsets.len() - 1) as f64);
        let k = (u.floor() as usize).min(offsets.len().saturating_sub(2));
        let f = u - k as f64;
        offsets[k] * (1.0 - f) + offsets.get(k + 1).map_or(0.0, |o| o * f)
    };
    let drop = cfg.effects.eda_tonic_drop_us;
    let ramp_s = 15.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / cfg.eda_fs;
            let k = ((t / cfg.window_s) as usize).min(p.drowsy_windows.len() - 1);
            let mut v = p.eda_level_us
                + offset_at(t)
                + 0.15 * (2.0 * PI * t / 700.0 + phases[0]).sin()
                + 0.1 * (2.0 * PI * t / 300.0 + phases[1]).sin()
                + 0.08 * (2.0 * PI * t / 90.0 + phases[2]).sin();
            if p.drowsy_windows[k] {
                let into = t - k as f64 * cfg.window_s;
                // Ease into the lower level after an awake window.
                let level = if k > 0 && !p.drowsy_windows[k - 1] && into < ramp_s {
                    0.5 - 0.5 * (PI * into / ramp_s).cos()
                } else {
                    1.0
                };
                let dip = (PI * into / cfg.window_s).sin().powi(2);
                v += 0.5 * drop * (level + dip);
            }
            v + scrs.iter().filter(|(t0, _)| (t - t0) < 40.0).map(|(t0, a)| a * scr_shape(t - t0)).sum::<f64>() + gauss(rng, 0.0, 0.005)
        })
        .collect()
}

fn label_rows(rng: &mut ChaCha8Rng, p: &PlantedParticipant, assessment: Assessment, cfg: &SynthConfig) -> Vec<LabelRow> {
    p.drowsy_windows
        .iter()
        .enumerate()
        .map(|(k, &drowsy)| {
            let start_s = k as f64 * cfg.window_s;
            let participant_id = p.participant_id.clone();
            match assessment {
                Assessment::Subjective => {
                    let value = if drowsy {
                        rng.random_range(7..=9)
                    } else if rng.random::<f64>() < cfg.kss_undecided_fraction {
                        6
                    } else {
                        rng.random_range(1..=5)
                    };
                    LabelRow::Kss { participant_id, start_s, end_s: None, value }
                }
                Assessment::Objective => LabelRow::Rater { participant_id, start_s, end_s: start_s + cfg.window_s, drowsy },
            }
        })
        .collect()
}

fn channel_file(pid: &str, kind: ChannelKind) -> PathBuf {
    PathBuf::from("signals").join(format!("{pid}_{}.csv", kind.as_str().to_ascii_lowercase()))
}

/// Generates every configured study from one seed.
pub fn synthesize(cfg: &SynthConfig, seed: u64) -> Vec<SynthStudy> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    cfg.studies
        .iter()
        .map(|study| {
            let assessment = study.drowsy_type.assessment();
            let mut recordings = Vec::new();
            let mut labels = Vec::new();
            let mut planted = Vec::new();
            let mut entries = Vec::new();
            for i in 0..cfg.participants_per_study {
                let mut rng = ChaCha8Rng::seed_from_u64(master.random());
                let pid = format!("p{:02}", i + 1);
                let part = draw_participant(&mut rng, pid.clone(), cfg, study);
                let p = &part.planted;
                let mut channels = BTreeMap::new();
                channels.insert(ChannelKind::Ecg, synth_ecg(&mut rng, p, cfg));
                channels.insert(ChannelKind::Resp, synth_resp(&mut rng, p, &part.resp_amp_windows, cfg));
                channels.insert(ChannelKind::Eda, synth_eda(&mut rng, p, cfg));
                for v in channels.values_mut() {
                    v.iter_mut().for_each(|x| *x = quantize(*x));
                }
                labels.extend(label_rows(&mut rng, p, assessment, cfg));
                let spec = [(ChannelKind::Ecg, cfg.ecg_fs, "mV"), (ChannelKind::Eda, cfg.eda_fs, "uS"), (ChannelKind::Resp, cfg.resp_fs, "a.u.")];
                entries.push(RecordingEntry {
                    participant_id: pid.clone(),
                    channels: spec
                        .into_iter()
                        .map(|(kind, fs, units)| {
                            (kind, ChannelEntry { path: channel_file(&pid, kind), fs, units: units.into(), inverted: false })
                        })
                        .collect(),
                });
                recordings.push(SynthRecording { participant_id: pid, channels });
                planted.push(part.planted);
            }
            SynthStudy {
                manifest: Manifest {
                    dataset_id: study.dataset_id.clone(),
                    drowsy_type: study.drowsy_type,
                    assessment,
                    windowing: Windowing { window_s: cfg.window_s, hop_s: cfg.window_s },
                    labels: PathBuf::from("labels.csv"),
                    recordings: entries,
                },
                labels,
                recordings,
                planted: PlantedRecord { seed, dataset_id: study.dataset_id.clone(), effects: cfg.effects, participants: planted },
            }
        })
        .collect()
}

/// Writes one study below `dir`; returns the manifest path.
pub fn write_study(study: &SynthStudy, dir: &Path) -> PipelineResult<PathBuf> {
    let signals = dir.join("signals");
    std::fs::create_dir_all(&signals).map_err(|e| PipelineError::io(&signals, e))?;
    for (rec, entry) in study.recordings.iter().zip(&study.manifest.recordings) {
        for (kind, ch) in &entry.channels {
            write_signal_csv(&dir.join(&ch.path), ch.fs, &rec.channels[kind])?;
        }
    }
    write_labels_csv(&dir.join(&study.manifest.labels), &study.labels)?;
    write_json(&dir.join("planted.json"), &study.planted)?;
    let manifest = dir.join("manifest.json");
    write_json(&manifest, &study.manifest)?;
    Ok(manifest)
}
