//! Extraction and model fitting from manifests or in-memory studies, as run by the CLI.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::dataset::{build_samples, segment_recording, Assessment, BuildOutcome, Recording, SegmentLabel, StudyMeta};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureConfig, FEATURE_NAMES};
use crate::io::{
    load_manifest, read_features_csv, read_labels_csv, read_signal_csv, segment_labels, write_features_csv, write_json, write_text,
    FeatureRow, PipelineError, PipelineResult, Windowing,
};
use crate::signal::{preprocess_channel, ChannelKind, ChannelSignal};
use crate::stats::{
    backward_stepwise, gee_fit, group_contrast, posthoc_contrasts, prune_collinear, report::term_rows, GeeFit, GeeOptions, ModelReport,
    PosthocSection, PruneDecision, PruneOptions, SampleTable, StepRecord, WorkingCorrelation,
};
use crate::synth::SynthStudy;

pub const DROWSY_TYPE_TERM: &str = "Drowsy Type";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub r_threshold: f64,
    pub alpha: f64,
    pub working: WorkingCorrelation,
    pub stepwise: bool,
    pub features: FeatureConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { r_threshold: 0.8, alpha: 0.05, working: WorkingCorrelation::Independence, stepwise: false, features: FeatureConfig::default() }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_threshold > 0.0 && self.r_threshold <= 1.0) {
            return Err(Error::InvalidMeta(format!("r_threshold {} outside (0, 1]", self.r_threshold)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidMeta(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }

    fn gee(&self) -> GeeOptions {
        GeeOptions::with_working(self.working)
    }
}

/// One participant's raw (not yet preprocessed) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub participant_id: String,
    pub channels: BTreeMap<ChannelKind, ChannelSignal>,
}

/// Preprocess, window, label and extract features for one study.
pub fn extract_study(
    meta: &StudyMeta,
    windowing: Windowing,
    recordings: &[RawRecording],
    labels: &[SegmentLabel],
    config: &FeatureConfig,
) -> Result<BuildOutcome> {
    let mut out = BuildOutcome::default();
    for raw in recordings {
        let channels = raw
            .channels
            .iter()
            .map(|(kind, sig)| Ok((*kind, preprocess_channel(sig)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let rec = Recording { participant_id: raw.participant_id.clone(), channels };
        let segments = segment_recording(&rec, windowing.window_s, windowing.hop_s)?;
        out.extend(build_samples(&segments, labels, meta, |s| extract_features(s, config))?);
    }
    out.sort();
    Ok(out)
}

/// Reads the signals and labels a manifest points at and extracts its features.
pub fn extract_manifest(path: &Path, config: &FeatureConfig) -> PipelineResult<BuildOutcome> {
    let manifest = load_manifest(path)?;
    let meta = manifest.meta()?;
    let labels = read_labels_csv(&manifest.labels)?;
    let mut recordings = Vec::new();
    for entry in &manifest.recordings {
        let mut channels = BTreeMap::new();
        for (kind, ch) in &entry.channels {
            let mut values = read_signal_csv(&ch.path)?;
            if ch.inverted {
                values.iter_mut().for_each(|v| *v = -*v);
            }
            let sig = ChannelSignal::new(values, ch.fs, *kind, ch.units.clone())
                .map_err(|e| PipelineError::schema(&ch.path, 0, e.to_string()))?;
            channels.insert(*kind, sig);
        }
        recordings.push(RawRecording { participant_id: entry.participant_id.clone(), channels });
    }
    Ok(extract_study(&meta, manifest.windowing, &recordings, &labels, config)?)
}

/// Same as [`extract_manifest`] for a study that never touched the disk.
pub fn extract_synth_study(study: &SynthStudy, config: &FeatureConfig) -> Result<BuildOutcome> {
    let meta = study.manifest.meta()?;
    let labels = segment_labels(&study.labels)?;
    let recordings = study
        .recordings
        .iter()
        .zip(&study.manifest.recordings)
        .map(|(rec, entry)| {
            let channels = entry
                .channels
                .iter()
                .map(|(kind, ch)| Ok((*kind, ChannelSignal::new(rec.channels[kind].clone(), ch.fs, *kind, ch.units.clone())?)))
                .collect::<Result<_>>()?;
            Ok(RawRecording { participant_id: rec.participant_id.clone(), channels })
        })
        .collect::<Result<Vec<_>>>()?;
    extract_study(&meta, study.manifest.windowing, &recordings, &labels, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub rows: usize,
    pub dropped: BTreeMap<String, usize>,
    pub output: PathBuf,
}

pub fn cmd_extract(manifests: &[PathBuf], out_dir: &Path, config: &FeatureConfig) -> PipelineResult<ExtractSummary> {
    let mut all = BuildOutcome::default();
    for m in manifests {
        info!("extracting {}", m.display());
        all.extend(extract_manifest(m, config)?);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let rows: Vec<FeatureRow> = all.samples.iter().map(FeatureRow::from).collect();
    let output = out_dir.join("features.csv");
    write_features_csv(&output, &rows)?;
    let mut dropped = BTreeMap::new();
    for d in &all.dropped {
        let reason = d.reason.split(':').next().unwrap_or(&d.reason).to_string();
        *dropped.entry(reason).or_insert(0) += 1;
    }
    if rows.is_empty() {
        warn!("no labelled segments were extracted");
    }
    Ok(ExtractSummary { rows: rows.len(), dropped, output })
}

/// Rows to a modelling table; adds the inducer term when several are pooled.
pub fn sample_table(rows: &[FeatureRow]) -> Result<SampleTable> {
    let clusters: Vec<String> = rows.iter().map(FeatureRow::cluster_id).collect();
    let n_clusters = clusters.iter().collect::<BTreeSet<_>>().len();
    if n_clusters < 2 {
        return Err(Error::InsufficientData(format!(
            "robust covariance needs at least 2 clusters (participants), found {n_clusters}"
        )));
    }
    let drowsy = rows.iter().filter(|r| r.drowsy).count();
    if drowsy == 0 || drowsy == rows.len() {
        return Err(Error::InsufficientData(format!(
            "both label classes are required, found {drowsy} drowsy of {} segments",
            rows.len()
        )));
    }
    let features = (0..FEATURE_NAMES.len()).map(|j| rows.iter().map(|r| r.features.to_array()[j]).collect()).collect();
    let y = rows.iter().map(|r| if r.drowsy { 1.0 } else { 0.0 }).collect();
    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let table = SampleTable::new(names, features, y, clusters)?;
    let types: Vec<String> = rows.iter().map(|r| r.drowsy_type.to_string()).collect();
    if types.iter().collect::<BTreeSet<_>>().len() > 1 {
        return table.with_grouping(DROWSY_TYPE_TERM, types);
    }
    Ok(table)
}

/// What is known about a fit that failed numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub stage: String,
    pub error: String,
    pub terms: Vec<String>,
    pub pruning_log: Vec<PruneDecision>,
    pub n_iter: Option<usize>,
    pub last_beta: Option<Vec<f64>>,
}

#[derive(Debug)]
pub struct FitFailure {
    pub error: Error,
    pub trace: Option<FitTrace>,
}

impl From<Error> for FitFailure {
    fn from(error: Error) -> Self {
        FitFailure { error, trace: None }
    }
}

fn fit_title(rows: &[FeatureRow]) -> (String, Vec<String>) {
    let datasets: Vec<String> = rows.iter().map(|r| r.dataset_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let title = match datasets.as_slice() {
        [one] => format!("Model: {one}"),
        many => format!("Model: combined ({} datasets)", many.len()),
    };
    (title, datasets)
}

/// Prune, optionally select, fit and summarise.
pub fn fit_rows(rows: &[FeatureRow], config: &RunConfig) -> std::result::Result<ModelReport, FitFailure> {
    config.validate()?;
    let table = sample_table(rows)?;
    let opts = config.gee();
    let prune_opts = PruneOptions { r_threshold: config.r_threshold, alpha: config.alpha, gee: opts };
    let pruned = prune_collinear(&table, &prune_opts)?;
    let design = table.design(&pruned.retained, true)?;
    let fail = |stage: &str, error: Error, terms: Vec<String>| {
        let (n_iter, last_beta) = match &error {
            Error::NotConverged { fit } => (Some(fit.n_iter), Some(fit.beta.iter().copied().collect())),
            _ => (None, None),
        };
        let trace = FitTrace { stage: stage.into(), error: error.to_string(), terms, pruning_log: pruned.log.clone(), n_iter, last_beta };
        FitFailure { error, trace: Some(trace) }
    };
    let term_names = |d: &crate::stats::DesignMatrix| d.terms().iter().map(|t| t.name.clone()).collect::<Vec<_>>();
    let (fit, trace): (GeeFit, Option<Vec<StepRecord>>) = if config.stepwise {
        match backward_stepwise(&design, &opts) {
            Ok(r) => (r.fit, Some(r.trace)),
            Err(e) if e.is_numerical() => return Err(fail("stepwise", e, term_names(&design))),
            Err(e) => return Err(e.into()),
        }
    } else {
        match gee_fit(&design, &opts) {
            Ok(f) => (f, None),
            Err(e) if e.is_numerical() => return Err(fail("fit", e, term_names(&design))),
            Err(e) => return Err(e.into()),
        }
    };

    let (posthoc, posthoc_note) = match fit.term(DROWSY_TYPE_TERM) {
        None => (None, None),
        Some(_) => match posthoc_contrasts(&fit, DROWSY_TYPE_TERM, config.alpha) {
            Ok(contrasts) => {
                let mut extra = Vec::new();
                let by_assessment = |a: Assessment| -> Vec<&str> {
                    rows.iter()
                        .filter(|r| r.assessment == a)
                        .map(|r| r.drowsy_type.as_str())
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect()
                };
                let (obj, subj) = (by_assessment(Assessment::Objective), by_assessment(Assessment::Subjective));
                if !obj.is_empty() && !subj.is_empty() {
                    extra.push(group_contrast(&fit, DROWSY_TYPE_TERM, "Objective vs Subjective", &obj, &subj)?);
                }
                let joint = crate::stats::wald_test(&fit, fit.term(DROWSY_TYPE_TERM).expect("term present"))?;
                (Some(PosthocSection { term: DROWSY_TYPE_TERM.into(), joint_p: joint.p_value, contrasts, extra }), None)
            }
            Err(Error::ContrastNotApplicable(msg)) => (None, Some(format!("No post-hoc comparisons: {msg}."))),
            Err(e) => return Err(e.into()),
        },
    };

    let (title, datasets) = fit_title(rows);
    Ok(ModelReport {
        title,
        datasets,
        n_rows: fit.n_obs,
        n_clusters: fit.n_clusters,
        n_drowsy: rows.iter().filter(|r| r.drowsy).count(),
        working_correlation: fit.working_corr,
        exchangeable_alpha: (fit.working_corr == WorkingCorrelation::Exchangeable).then_some(fit.alpha),
        n_iter: fit.n_iter,
        converged: fit.converged,
        qic: fit.qic,
        terms: term_rows(&fit)?,
        posthoc,
        posthoc_note,
        pruning_log: pruned.log,
        stepwise_trace: trace,
    })
}

pub fn read_feature_files(paths: &[PathBuf]) -> PipelineResult<Vec<FeatureRow>> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_features_csv(p)?);
    }
    Ok(rows)
}

pub fn write_report(out_dir: &Path, report: &ModelReport) -> PipelineResult<()> {
    write_json(&out_dir.join("report.json"), report)?;
    write_text(&out_dir.join("report.md"), &report.render_markdown())
}

pub fn cmd_fit(features: &[PathBuf], out_dir: &Path, config: &RunConfig) -> PipelineResult<ModelReport> {
    config.validate().map_err(|e| PipelineError::schema(Path::new("<config>"), 0, e.to_string()))?;
    let rows = read_feature_files(features)?;
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    match fit_rows(&rows, config) {
        Ok(report) => {
            write_report(out_dir, &report)?;
            Ok(report)
        }
        Err(FitFailure { error, trace: Some(trace) }) => {
            let path = out_dir.join("fit_trace.json");
            write_json(&path, &trace)?;
            Err(PipelineError::Numerical { source: error, trace: path })
        }
        Err(FitFailure { error, trace: None }) => Err(error.into()),
    }
}

/// Re-renders `report.md` from a `report.json`.
pub fn render_report_file(json: &Path) -> PipelineResult<String> {
    let report: ModelReport = crate::io::read_json(json)?;
    Ok(report.render_markdown())
}

/// Writes each synthetic study to `out_dir/<dataset_id>/`; returns the manifest paths.
pub fn cmd_synth(seed: u64, out_dir: &Path, config: &crate::synth::SynthConfig) -> PipelineResult<Vec<PathBuf>> {
    crate::synth::synthesize(config, seed)
        .iter()
        .map(|study| crate::synth::write_study(study, &out_dir.join(&study.manifest.dataset_id)))
        .collect()
}
