//! Study metadata, windowing of recordings and label binarisation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::signal::{ChannelKind, ChannelSignal};

/// What induced the drowsiness in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DrowsyType {
    PhysicalFatigue,
    LowArousal,
    SleepDeprivation,
    MentalFatigue,
}

impl DrowsyType {
    pub const ALL: [DrowsyType; 4] = [
        DrowsyType::PhysicalFatigue,
        DrowsyType::LowArousal,
        DrowsyType::SleepDeprivation,
        DrowsyType::MentalFatigue,
    ];

    /// How each inducer was assessed in the source studies.
    pub fn assessment(self) -> Assessment {
        match self {
            DrowsyType::PhysicalFatigue | DrowsyType::LowArousal => Assessment::Objective,
            DrowsyType::SleepDeprivation | DrowsyType::MentalFatigue => Assessment::Subjective,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DrowsyType::PhysicalFatigue => "PhysicalFatigue",
            DrowsyType::LowArousal => "LowArousal",
            DrowsyType::SleepDeprivation => "SleepDeprivation",
            DrowsyType::MentalFatigue => "MentalFatigue",
        }
    }
}

impl fmt::Display for DrowsyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DrowsyType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DrowsyType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidMeta(format!("unknown drowsy type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Assessment {
    Subjective,
    Objective,
}

impl Assessment {
    pub fn as_str(self) -> &'static str {
        match self {
            Assessment::Subjective => "Subjective",
            Assessment::Objective => "Objective",
        }
    }
}

impl fmt::Display for Assessment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Assessment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Subjective" => Ok(Assessment::Subjective),
            "Objective" => Ok(Assessment::Objective),
            _ => Err(Error::InvalidMeta(format!("unknown assessment {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StudyMeta {
    pub dataset_id: String,
    pub drowsy_type: DrowsyType,
    pub assessment: Assessment,
}

impl StudyMeta {
    /// Rejects inducer/assessment pairs that do not occur in the source studies.
    pub fn new(dataset_id: impl Into<String>, drowsy_type: DrowsyType, assessment: Assessment) -> Result<Self> {
        let dataset_id = dataset_id.into();
        if dataset_id.trim().is_empty() {
            return Err(Error::InvalidMeta("dataset_id is empty".into()));
        }
        if drowsy_type.assessment() != assessment {
            return Err(Error::InvalidMeta(format!(
                "{drowsy_type} studies are assessed {}, not {assessment}",
                drowsy_type.assessment()
            )));
        }
        Ok(Self { dataset_id, drowsy_type, assessment })
    }

    /// Metadata of the four reference datasets, by lower-case id.
    pub fn known(dataset_id: &str) -> Option<Self> {
        let drowsy_type = match dataset_id.to_ascii_lowercase().as_str() {
            "fatigueset" => DrowsyType::PhysicalFatigue,
            "ayas" => DrowsyType::LowArousal,
            "advitam" => DrowsyType::SleepDeprivation,
            "mcdd" => DrowsyType::MentalFatigue,
            _ => return None,
        };
        Some(Self { dataset_id: dataset_id.to_string(), drowsy_type, assessment: drowsy_type.assessment() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Awake,
    Drowsy,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSource {
    Kss(u8),
    RaterBinary,
}

/// KSS ≥ 7 is drowsy, KSS < 6 is awake, 6 falls between the two rules.
pub fn binarize_kss(kss: i64) -> Result<Label> {
    match kss {
        1..=5 => Ok(Label::Awake),
        6 => Ok(Label::Excluded),
        7..=9 => Ok(Label::Drowsy),
        _ => Err(Error::InvalidLabel(format!("KSS rating {kss} outside 1..=9"))),
    }
}

/// A label valid over `[start_s, end_s)` for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLabel {
    pub participant_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: Label,
    pub source: LabelSource,
}

impl SegmentLabel {
    pub fn rater(participant_id: impl Into<String>, start_s: f64, end_s: f64, drowsy: bool) -> Result<Self> {
        if !(end_s > start_s) {
            return Err(Error::InvalidLabel(format!("label window [{start_s}, {end_s}) is empty")));
        }
        Ok(Self {
            participant_id: participant_id.into(),
            start_s,
            end_s,
            label: if drowsy { Label::Drowsy } else { Label::Awake },
            source: LabelSource::RaterBinary,
        })
    }

    fn overlaps(&self, start: f64, end: f64) -> bool {
        self.start_s < end && start < self.end_s
    }

    fn contains(&self, start: f64, end: f64) -> bool {
        const EPS: f64 = 1e-9;
        self.start_s <= start + EPS && end <= self.end_s + EPS
    }
}

/// Turns timestamped KSS ratings into label windows: each rating holds
/// until the participant's next rating, the last one indefinitely.
pub fn kss_label_windows(participant_id: &str, ratings: &[(f64, i64)]) -> Result<Vec<SegmentLabel>> {
    let mut sorted = ratings.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidLabel(format!("participant {participant_id} has two KSS ratings at the same time")));
    }
    sorted
        .iter()
        .enumerate()
        .map(|(i, &(t, kss))| {
            let label = binarize_kss(kss)?;
            let end = sorted.get(i + 1).map_or(f64::INFINITY, |next| next.0);
            Ok(SegmentLabel {
                participant_id: participant_id.to_string(),
                start_s: t,
                end_s: end,
                label,
                source: LabelSource::Kss(kss as u8),
            })
        })
        .collect()
}

/// All preprocessed channels of one participant's session.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub participant_id: String,
    pub channels: BTreeMap<ChannelKind, ChannelSignal>,
}

impl Recording {
    /// Duration of the shortest channel.
    pub fn duration_s(&self) -> f64 {
        self.channels.values().map(|c| c.duration_s()).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub participant_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub channels: BTreeMap<ChannelKind, ChannelSignal>,
}

/// Windows `[k·hop, k·hop + window)` that lie entirely inside the recording.
pub fn segment_recording(recording: &Recording, window_s: f64, hop_s: f64) -> Result<Vec<Segment>> {
    if !(window_s > 0.0 && hop_s > 0.0) {
        return Err(Error::InvalidMeta(format!("window {window_s} s and hop {hop_s} s must be positive")));
    }
    if recording.channels.is_empty() {
        return Err(Error::InsufficientData(format!("recording of {} has no channels", recording.participant_id)));
    }
    let duration = recording.duration_s();
    if duration + 1e-9 < window_s {
        return Err(Error::InsufficientData(format!(
            "recording of {} lasts {duration:.2} s, shorter than the {window_s} s window",
            recording.participant_id
        )));
    }
    let count = ((duration - window_s) / hop_s + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let start_s = k as f64 * hop_s;
            let end_s = start_s + window_s;
            let channels = recording
                .channels
                .iter()
                .map(|(kind, sig)| {
                    let a = (start_s * sig.fs()).round() as usize;
                    let b = a + (window_s * sig.fs()).round() as usize;
                    (*kind, sig.slice(a, b))
                })
                .collect();
            Segment { participant_id: recording.participant_id.clone(), start_s, end_s, channels }
        })
        .collect())
}

/// A segment ready for modelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub drowsy: bool,
    pub participant_id: String,
    pub segment_start_s: f64,
    pub study: StudyMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSegment {
    pub participant_id: String,
    pub segment_start_s: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub samples: Vec<LabeledSample>,
    pub dropped: Vec<DroppedSegment>,
}

impl BuildOutcome {
    pub fn extend(&mut self, other: BuildOutcome) {
        self.samples.extend(other.samples);
        self.dropped.extend(other.dropped);
    }

    /// Orders by participant, then window start.
    pub fn sort(&mut self) {
        self.samples.sort_by(|a, b| {
            (&a.study.dataset_id, &a.participant_id)
                .cmp(&(&b.study.dataset_id, &b.participant_id))
                .then(a.segment_start_s.total_cmp(&b.segment_start_s))
        });
        self.dropped.sort_by(|a, b| {
            a.participant_id.cmp(&b.participant_id).then(a.segment_start_s.total_cmp(&b.segment_start_s))
        });
    }
}

/// Pairs each segment with the single label window that contains it and
/// extracts its features. Unlabelled, excluded and failed segments are
/// dropped with a reason; a segment touching two label windows is an error.
pub fn build_samples<F>(segments: &[Segment], labels: &[SegmentLabel], meta: &StudyMeta, extract: F) -> Result<BuildOutcome>
where
    F: Fn(&Segment) -> Result<FeatureVector>,
{
    let mut out = BuildOutcome::default();
    for seg in segments {
        let overlapping: Vec<&SegmentLabel> = labels
            .iter()
            .filter(|l| l.participant_id == seg.participant_id && l.overlaps(seg.start_s, seg.end_s))
            .collect();
        let drop = |reason: String| DroppedSegment {
            participant_id: seg.participant_id.clone(),
            segment_start_s: seg.start_s,
            reason,
        };
        let label = match overlapping.as_slice() {
            [] => {
                out.dropped.push(drop("no label".into()));
                continue;
            }
            [one] if !one.contains(seg.start_s, seg.end_s) => {
                out.dropped.push(drop("label window does not cover the whole segment".into()));
                continue;
            }
            [one] => one.label,
            _ => {
                return Err(Error::AmbiguousLabel {
                    participant: seg.participant_id.clone(),
                    start_s: seg.start_s,
                })
            }
        };
        let drowsy = match label {
            Label::Excluded => {
                out.dropped.push(drop("excluded label (KSS 6)".into()));
                continue;
            }
            Label::Drowsy => true,
            Label::Awake => false,
        };
        match extract(seg) {
            Ok(features) if features.is_finite() => out.samples.push(LabeledSample {
                features,
                drowsy,
                participant_id: seg.participant_id.clone(),
                segment_start_s: seg.start_s,
                study: meta.clone(),
            }),
            Ok(_) => out.dropped.push(drop("non-finite feature".into())),
            Err(e) => {
                debug!("dropping segment {}@{}: {e}", seg.participant_id, seg.start_s);
                out.dropped.push(drop(format!("feature extraction failed: {e}")));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEATURE_COUNT;

    fn recording(secs: f64) -> Recording {
        let mut channels = BTreeMap::new();
        for kind in ChannelKind::ALL {
            let n = (secs * 100.0) as usize;
            channels.insert(kind, ChannelSignal::new(vec![0.0; n], 100.0, kind, "").unwrap());
        }
        Recording { participant_id: "p1".into(), channels }
    }

    fn dummy(_: &Segment) -> Result<FeatureVector> {
        Ok(FeatureVector::from_array([1.0; FEATURE_COUNT]))
    }

    #[test]
    fn kss_rule_is_exhaustive() {
        let labels: Vec<Label> = (1..=9).map(|k| binarize_kss(k).unwrap()).collect();
        assert_eq!(labels.iter().filter(|l| **l == Label::Drowsy).count(), 3);
        assert_eq!(labels.iter().filter(|l| **l == Label::Awake).count(), 5);
        assert_eq!(labels[5], Label::Excluded);
        assert_eq!(binarize_kss(7).unwrap(), Label::Drowsy);
        assert_eq!(binarize_kss(5).unwrap(), Label::Awake);
        assert!(matches!(binarize_kss(0), Err(Error::InvalidLabel(_))));
        assert!(matches!(binarize_kss(10), Err(Error::InvalidLabel(_))));
    }

    #[test]
    fn study_mapping() {
        assert!(StudyMeta::new("x", DrowsyType::LowArousal, Assessment::Objective).is_ok());
        assert!(StudyMeta::new("x", DrowsyType::MentalFatigue, Assessment::Objective).is_err());
        let fs = StudyMeta::known("Fatigueset").unwrap();
        assert_eq!((fs.drowsy_type, fs.assessment), (DrowsyType::PhysicalFatigue, Assessment::Objective));
        assert_eq!(StudyMeta::known("advitam").unwrap().assessment, Assessment::Subjective);
        assert_eq!("SleepDeprivation".parse::<DrowsyType>().unwrap(), DrowsyType::SleepDeprivation);
    }

    #[test]
    fn windowing() {
        let segs = segment_recording(&recording(600.0), 120.0, 120.0).unwrap();
        assert_eq!(segs.len(), 5);
        assert!(segs.iter().all(|s| s.channels[&ChannelKind::Ecg].len() == 12_000));
        assert!(segs.windows(2).all(|w| w[1].start_s - w[0].start_s == 120.0));
        assert_eq!(segment_recording(&recording(120.0), 120.0, 60.0).unwrap().len(), 1);
        assert!(matches!(segment_recording(&recording(60.0), 120.0, 120.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn kss_samples() {
        let segs = segment_recording(&recording(360.0), 120.0, 120.0).unwrap();
        let labels = kss_label_windows("p1", &[(0.0, 5), (120.0, 6), (240.0, 8)]).unwrap();
        let meta = StudyMeta::known("mcdd").unwrap();
        let out = build_samples(&segs, &labels, &meta, dummy).unwrap();
        assert_eq!(out.samples.len(), 2);
        assert!(!out.samples[0].drowsy && out.samples[1].drowsy);
        assert_eq!(out.dropped.len(), 1);
    }

    #[test]
    fn unlabelled_and_ambiguous() {
        let segs = segment_recording(&recording(240.0), 120.0, 120.0).unwrap();
        let meta = StudyMeta::known("ayas").unwrap();
        let labels = vec![SegmentLabel::rater("p1", 0.0, 120.0, true).unwrap()];
        let out = build_samples(&segs, &labels, &meta, dummy).unwrap();
        assert_eq!((out.samples.len(), out.dropped.len()), (1, 1));

        let labels = vec![
            SegmentLabel::rater("p1", 0.0, 60.0, true).unwrap(),
            SegmentLabel::rater("p1", 60.0, 240.0, false).unwrap(),
        ];
        assert!(matches!(build_samples(&segs, &labels, &meta, dummy), Err(Error::AmbiguousLabel { .. })));
    }

    #[test]
    fn failed_extraction_is_dropped() {
        let segs = segment_recording(&recording(120.0), 120.0, 120.0).unwrap();
        let labels = vec![SegmentLabel::rater("p1", 0.0, 120.0, false).unwrap()];
        let meta = StudyMeta::known("ayas").unwrap();
        let out = build_samples(&segs, &labels, &meta, |_| Err(Error::NoBeatsDetected)).unwrap();
        assert!(out.samples.is_empty());
        assert!(out.dropped[0].reason.contains("no heartbeats"));
    }
}
