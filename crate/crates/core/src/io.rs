//! On-disk formats: signal and label CSVs, study manifests and the features table.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{binarize_kss, kss_label_windows, Assessment, DrowsyType, LabelSource, LabeledSample, SegmentLabel, StudyMeta};
use crate::error::Error;
use crate::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::signal::ChannelKind;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Schema { path: PathBuf, line: u64, msg: String },
    #[error("{0}")]
    InsufficientData(String),
    #[error("{source}; fit trace written to {}", trace.display())]
    Numerical { source: Error, trace: PathBuf },
    #[error(transparent)]
    Core(#[from] Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. } => 2,
            PipelineError::Schema { .. } => 3,
            PipelineError::InsufficientData(_) => 4,
            PipelineError::Numerical { .. } => 5,
            PipelineError::Core(e) if e.is_numerical() => 5,
            PipelineError::Core(Error::InsufficientData(_)) => 4,
            PipelineError::Core(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn schema(path: &Path, line: u64, msg: impl Into<String>) -> Self {
        PipelineError::Schema { path: path.to_path_buf(), line, msg: msg.into() }
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

/// Shortest text of `printf("%.17g")`: 17 significant digits, trailing zeros dropped.
pub fn fmt_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp) as usize;
    trim_fraction(&format!("{v:.decimals$}")).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn create(path: &Path) -> PipelineResult<File> {
    File::create(path).map_err(|e| PipelineError::io(path, e))
}

fn open(path: &Path) -> PipelineResult<File> {
    File::open(path).map_err(|e| PipelineError::io(path, e))
}

fn csv_writer(path: &Path) -> PipelineResult<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?))
}

fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PipelineError::io(path, io),
        kind => PipelineError::schema(path, line, format!("{kind:?}")),
    }
}

fn write_records<I>(path: &Path, header: &[&str], rows: I) -> PipelineResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Reads a CSV whose header must equal `header`; yields (line, fields).
fn read_records(path: &Path, header: &[&str]) -> PipelineResult<Vec<(u64, csv::StringRecord)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(open(path)?);
    let found = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(PipelineError::schema(
            path,
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            Ok((rec.position().map_or(0, |p| p.line()), rec))
        })
        .collect()
}

fn parse_f64(path: &Path, line: u64, field: &str, what: &str) -> PipelineResult<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(PipelineError::schema(path, line, format!("{what}: {field:?} is not a finite number"))),
    }
}

pub const SIGNAL_HEADER: [&str; 2] = ["t_s", "value"];

pub fn write_signal_csv(path: &Path, fs: f64, values: &[f64]) -> PipelineResult<()> {
    let rows = values.iter().enumerate().map(|(i, v)| vec![fmt_g17(i as f64 / fs), fmt_g17(*v)]);
    write_records(path, &SIGNAL_HEADER, rows)
}

/// Sample values of a `t_s,value` file; timestamps must increase strictly.
pub fn read_signal_csv(path: &Path) -> PipelineResult<Vec<f64>> {
    let mut values = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (line, rec) in read_records(path, &SIGNAL_HEADER)? {
        let t = parse_f64(path, line, &rec[0], "t_s")?;
        if !(t > last_t) {
            return Err(PipelineError::schema(path, line, "timestamps must increase"));
        }
        last_t = t;
        values.push(parse_f64(path, line, &rec[1], "value")?);
    }
    Ok(values)
}

pub const LABEL_HEADER: [&str; 5] = ["participant_id", "source", "start_s", "end_s", "value"];

/// One row of a labels file. KSS rows may leave `end_s` empty: the rating
/// then holds until the participant's next rating.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelRow {
    Kss { participant_id: String, start_s: f64, end_s: Option<f64>, value: i64 },
    Rater { participant_id: String, start_s: f64, end_s: f64, drowsy: bool },
}

pub fn write_labels_csv(path: &Path, rows: &[LabelRow]) -> PipelineResult<()> {
    let records = rows.iter().map(|r| match r {
        LabelRow::Kss { participant_id, start_s, end_s, value } => vec![
            participant_id.clone(),
            "kss".into(),
            fmt_g17(*start_s),
            end_s.map(fmt_g17).unwrap_or_default(),
            value.to_string(),
        ],
        LabelRow::Rater { participant_id, start_s, end_s, drowsy } => vec![
            participant_id.clone(),
            "rater".into(),
            fmt_g17(*start_s),
            fmt_g17(*end_s),
            (*drowsy as u8).to_string(),
        ],
    });
    write_records(path, &LABEL_HEADER, records)
}

pub fn read_label_rows(path: &Path) -> PipelineResult<Vec<LabelRow>> {
    read_records(path, &LABEL_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let schema = |msg: String| PipelineError::schema(path, line, msg);
            let participant_id = rec[0].trim().to_string();
            if participant_id.is_empty() {
                return Err(schema("empty participant_id".into()));
            }
            let start_s = parse_f64(path, line, &rec[2], "start_s")?;
            let end_s = if rec[3].trim().is_empty() { None } else { Some(parse_f64(path, line, &rec[3], "end_s")?) };
            let value: i64 = rec[4].trim().parse().map_err(|_| schema(format!("value {:?} is not an integer", &rec[4])))?;
            if end_s.is_some_and(|e| !(e > start_s)) {
                return Err(schema("end_s must exceed start_s".into()));
            }
            match (rec[1].trim(), end_s) {
                ("kss", _) => {
                    binarize_kss(value).map_err(|e| schema(e.to_string()))?;
                    Ok(LabelRow::Kss { participant_id, start_s, end_s, value })
                }
                ("rater", Some(end_s)) if value == 0 || value == 1 => {
                    Ok(LabelRow::Rater { participant_id, start_s, end_s, drowsy: value == 1 })
                }
                ("rater", Some(_)) => Err(schema("rater value must be 0 or 1".into())),
                ("rater", None) => Err(schema("rater rows need end_s".into())),
                (other, _) => Err(schema(format!("unknown label source {other:?}"))),
            }
        })
        .collect()
}

/// Label windows of a labels file's rows.
pub fn segment_labels(rows: &[LabelRow]) -> crate::error::Result<Vec<SegmentLabel>> {
    let mut open_ratings: BTreeMap<&str, Vec<(f64, i64)>> = BTreeMap::new();
    let mut labels = Vec::new();
    for row in rows {
        match row {
            LabelRow::Kss { participant_id, start_s, end_s: None, value } => {
                open_ratings.entry(participant_id).or_default().push((*start_s, *value));
            }
            LabelRow::Kss { participant_id, start_s, end_s: Some(end_s), value } => labels.push(SegmentLabel {
                participant_id: participant_id.clone(),
                start_s: *start_s,
                end_s: *end_s,
                label: binarize_kss(*value)?,
                source: LabelSource::Kss(*value as u8),
            }),
            LabelRow::Rater { participant_id, start_s, end_s, drowsy } => {
                labels.push(SegmentLabel::rater(participant_id.clone(), *start_s, *end_s, *drowsy)?)
            }
        }
    }
    for (pid, ratings) in open_ratings {
        labels.extend(kss_label_windows(pid, &ratings)?);
    }
    Ok(labels)
}

pub fn read_labels_csv(path: &Path) -> PipelineResult<Vec<SegmentLabel>> {
    segment_labels(&read_label_rows(path)?).map_err(|e| PipelineError::schema(path, 0, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub path: PathBuf,
    pub fs: f64,
    pub units: String,
    /// Flip the sign on load, for sensors mounted the other way round.
    #[serde(default)]
    pub inverted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    pub participant_id: String,
    pub channels: BTreeMap<ChannelKind, ChannelEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Windowing {
    pub window_s: f64,
    pub hop_s: f64,
}

impl Default for Windowing {
    fn default() -> Self {
        Self { window_s: 120.0, hop_s: 120.0 }
    }
}

/// A study description; file paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset_id: String,
    pub drowsy_type: DrowsyType,
    pub assessment: Assessment,
    pub windowing: Windowing,
    pub labels: PathBuf,
    pub recordings: Vec<RecordingEntry>,
}

impl Manifest {
    pub fn meta(&self) -> crate::error::Result<StudyMeta> {
        StudyMeta::new(self.dataset_id.clone(), self.drowsy_type, self.assessment)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> PipelineResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> PipelineError {
    if e.is_io() {
        PipelineError::io(path, e.into())
    } else {
        PipelineError::schema(path, e.line() as u64, e.to_string())
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> PipelineResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_error(path, e))
}

/// Parses and validates a manifest, resolving every path against its directory.
pub fn load_manifest(path: &Path) -> PipelineResult<Manifest> {
    let mut m: Manifest = read_json(path)?;
    m.meta().map_err(|e| PipelineError::schema(path, 0, e.to_string()))?;
    if !(m.windowing.window_s > 0.0 && m.windowing.hop_s > 0.0) {
        return Err(PipelineError::schema(path, 0, "window_s and hop_s must be positive"));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| -> PipelineResult<PathBuf> {
        let full = base.join(p);
        if full.is_file() {
            Ok(full)
        } else {
            Err(PipelineError::io(&full, std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file not found")))
        }
    };
    m.labels = resolve(&m.labels)?;
    for rec in &mut m.recordings {
        for kind in ChannelKind::ALL {
            if !rec.channels.contains_key(&kind) {
                return Err(PipelineError::schema(path, 0, format!("participant {} has no {kind} channel", rec.participant_id)));
            }
        }
        for ch in rec.channels.values_mut() {
            if !(ch.fs > 0.0 && ch.fs.is_finite()) {
                return Err(PipelineError::schema(path, 0, format!("fs {} of participant {} is not positive", ch.fs, rec.participant_id)));
            }
            ch.path = resolve(&ch.path)?;
        }
    }
    Ok(m)
}

pub const ID_COLUMNS: [&str; 6] = ["dataset_id", "participant_id", "segment_start_s", "label", "drowsy_type", "assessment"];

pub fn features_header() -> Vec<&'static str> {
    ID_COLUMNS.iter().chain(FEATURE_NAMES.iter()).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub dataset_id: String,
    pub participant_id: String,
    pub segment_start_s: f64,
    pub drowsy: bool,
    pub drowsy_type: DrowsyType,
    pub assessment: Assessment,
    pub features: FeatureVector,
}

impl FeatureRow {
    /// Participants are only unique within a dataset.
    pub fn cluster_id(&self) -> String {
        format!("{}/{}", self.dataset_id, self.participant_id)
    }
}

impl From<&LabeledSample> for FeatureRow {
    fn from(s: &LabeledSample) -> Self {
        FeatureRow {
            dataset_id: s.study.dataset_id.clone(),
            participant_id: s.participant_id.clone(),
            segment_start_s: s.segment_start_s,
            drowsy: s.drowsy,
            drowsy_type: s.study.drowsy_type,
            assessment: s.study.assessment,
            features: s.features,
        }
    }
}

pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> PipelineResult<()> {
    let records = rows.iter().map(|r| {
        let mut rec = vec![
            r.dataset_id.clone(),
            r.participant_id.clone(),
            fmt_g17(r.segment_start_s),
            (r.drowsy as u8).to_string(),
            r.drowsy_type.to_string(),
            r.assessment.to_string(),
        ];
        rec.extend(r.features.to_array().iter().map(|v| fmt_g17(*v)));
        rec
    });
    write_records(path, &features_header(), records)
}

pub fn read_features_csv(path: &Path) -> PipelineResult<Vec<FeatureRow>> {
    read_records(path, &features_header())?
        .into_iter()
        .map(|(line, rec)| {
            let schema = |msg: String| PipelineError::schema(path, line, msg);
            let drowsy = match rec[3].trim() {
                "0" => false,
                "1" => true,
                other => return Err(schema(format!("label {other:?} is not 0 or 1"))),
            };
            let drowsy_type: DrowsyType = rec[4].trim().parse().map_err(|e: Error| schema(e.to_string()))?;
            let assessment: Assessment = rec[5].trim().parse().map_err(|e: Error| schema(e.to_string()))?;
            StudyMeta::new(rec[0].to_string(), drowsy_type, assessment).map_err(|e| schema(e.to_string()))?;
            let mut values = [0.0; FEATURE_COUNT];
            for (k, v) in values.iter_mut().enumerate() {
                *v = parse_f64(path, line, &rec[ID_COLUMNS.len() + k], FEATURE_NAMES[k])?;
            }
            Ok(FeatureRow {
                dataset_id: rec[0].to_string(),
                participant_id: rec[1].to_string(),
                segment_start_s: parse_f64(path, line, &rec[2], "segment_start_s")?,
                drowsy,
                drowsy_type,
                assessment,
                features: FeatureVector::from_array(values),
            })
        })
        .collect()
}

/// Writes text verbatim; callers supply LF line endings.
pub fn write_text(path: &Path, text: &str) -> PipelineResult<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|e| PipelineError::io(path, e))
}
