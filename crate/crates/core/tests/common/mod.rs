#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drowsemark::dataset::{Assessment, DrowsyType};
use drowsemark::features::{FeatureVector, FEATURE_COUNT};
use drowsemark::io::{write_json, FeatureRow};
use drowsemark::synth::SynthConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drowsemark"))
        .args(args)
        .env("DROWSEMARK_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// A few participants and windows; every non-drowsy window gets a clear KSS.
pub fn small_config(participants: usize, windows: usize) -> SynthConfig {
    SynthConfig { participants_per_study: participants, windows_per_participant: windows, kss_undecided_fraction: 0.0, ..SynthConfig::default() }
}

pub fn write_config(dir: &Path, cfg: &SynthConfig) -> PathBuf {
    let path = dir.join("synth_config.json");
    write_json(&path, cfg).unwrap();
    path
}

/// Runs `synth` and returns the manifest paths it printed.
pub fn synth(seed: u64, out: &Path, config: Option<&Path>) -> Vec<PathBuf> {
    let seed = seed.to_string();
    let mut args = vec!["synth", "--seed", &seed, "--out", p(out)];
    if let Some(c) = config {
        args.extend(["--config", p(c)]);
    }
    let o = run(&args);
    assert_eq!(code(&o), 0, "synth failed: {}", stderr(&o));
    String::from_utf8(o.stdout).unwrap().lines().map(PathBuf::from).collect()
}

pub fn extract(manifests: &[PathBuf], out: &Path) -> Output {
    let mut args = vec!["extract", "--manifest"];
    args.extend(manifests.iter().map(|m| p(m)));
    args.extend(["--out", p(out)]);
    run(&args)
}

pub fn fit(features: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["fit", "--features", p(features), "--out", p(out)];
    args.extend_from_slice(extra);
    run(&args)
}

/// Every file under `dir`, keyed by relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Feature rows where ECG-HR alone splits the classes perfectly.
pub fn separable_rows(seed: u64) -> Vec<FeatureRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for pid in 0..6 {
        for k in 0..10 {
            let drowsy = k % 2 == 1;
            let mut f: [f64; FEATURE_COUNT] = std::array::from_fn(|_| rng.random_range(1.0..2.0));
            f[0] = if drowsy { 90.0 } else { 60.0 } + rng.random_range(-5.0..5.0);
            rows.push(FeatureRow {
                dataset_id: "sep".into(),
                participant_id: format!("p{pid}"),
                segment_start_s: 120.0 * k as f64,
                drowsy,
                drowsy_type: DrowsyType::SleepDeprivation,
                assessment: Assessment::Subjective,
                features: FeatureVector::from_array(f),
            });
        }
    }
    rows
}
