mod common;

use std::time::Instant;

use common::*;
use drowsemark::io::{read_label_rows, write_features_csv, write_labels_csv, LabelRow};
use drowsemark::pipeline::render_report_file;
use drowsemark::synth::SynthConfig;
use tempfile::tempdir;

#[test]
fn two_by_four_fixture_extracts_eight_rows() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(2, 4));
    let manifests = synth(3, &dir.path().join("syn"), Some(&cfg));
    assert_eq!(manifests.len(), 1);
    let out = extract(&manifests, &dir.path().join("feat"));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("feat/features.csv")).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    assert!(lines.iter().all(|l| l.split(',').count() == 20));
    assert!(lines[0].starts_with("dataset_id,participant_id,segment_start_s,label,"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempdir().unwrap();
    let out = fit(&dir.path().join("nope.csv"), &dir.path().join("fit"), &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = extract(&[dir.path().join("nope.json")], &dir.path().join("feat"));
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn malformed_inputs_are_schema_errors() {
    let dir = tempdir().unwrap();
    let manifests = synth(4, &dir.path().join("syn"), Some(&write_config(dir.path(), &small_config(2, 4))));

    let text = std::fs::read_to_string(&manifests[0]).unwrap();
    std::fs::write(&manifests[0], text.replacen("\"labels\"", "\"colour\": 1,\n  \"labels\"", 1)).unwrap();
    let out = extract(&manifests, &dir.path().join("feat"));
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "dataset_id,participant_id\nx,y\n").unwrap();
    let out = fit(&bad, &dir.path().join("fit"), &[]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("bad.csv"));
}

#[test]
fn too_little_data_is_reported() {
    let dir = tempdir().unwrap();
    let one = synth(5, &dir.path().join("one"), Some(&write_config(dir.path(), &small_config(1, 4))));
    assert_eq!(code(&extract(&one, &dir.path().join("f1"))), 0);
    let out = fit(&dir.path().join("f1/features.csv"), &dir.path().join("fit1"), &[]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));

    let two = synth(5, &dir.path().join("two"), Some(&write_config(dir.path(), &small_config(2, 4))));
    assert_eq!(code(&extract(&two, &dir.path().join("f2"))), 0);
    let path = dir.path().join("f2/features.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let awake: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let mut f: Vec<&str> = l.split(',').collect();
            if i > 0 {
                f[3] = "0";
            }
            f.join(",") + "\n"
        })
        .collect();
    std::fs::write(&path, awake).unwrap();
    let out = fit(&path, &dir.path().join("fit2"), &[]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn separation_exits_numerical_with_trace() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("features.csv");
    write_features_csv(&path, &separable_rows(1)).unwrap();
    let out = fit(&path, &dir.path().join("fit"), &[]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
    assert!(stderr(&out).contains("separation"));
    let trace: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit/fit_trace.json")).unwrap()).unwrap();
    assert_eq!(trace["stage"], "fit");
    assert!(trace["terms"].as_array().unwrap().iter().any(|t| t == "ECG-HR"));
    assert!(!dir.path().join("fit/report.json").exists());
}

#[test]
fn all_undecided_ratings_give_empty_table() {
    let dir = tempdir().unwrap();
    let manifests = synth(6, &dir.path().join("syn"), Some(&write_config(dir.path(), &small_config(2, 4))));
    let labels = manifests[0].parent().unwrap().join("labels.csv");
    let rows: Vec<LabelRow> = read_label_rows(&labels)
        .unwrap()
        .into_iter()
        .map(|r| match r {
            LabelRow::Kss { participant_id, start_s, end_s, .. } => LabelRow::Kss { participant_id, start_s, end_s, value: 6 },
            other => other,
        })
        .collect();
    write_labels_csv(&labels, &rows).unwrap();
    let out = extract(&manifests, &dir.path().join("feat"));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"));
    assert!(stderr(&out).contains("dropped 8 segment(s)"));
    let text = std::fs::read_to_string(dir.path().join("feat/features.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn default_round_trip_is_fast_and_repeatable() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    let manifests = synth(11, &a.join("syn"), None);
    assert_eq!(code(&extract(&manifests, &a.join("feat"))), 0);
    let out = fit(&a.join("feat/features.csv"), &a.join("fit"), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "round trip took {elapsed:?}");

    let md = std::fs::read_to_string(a.join("fit/report.md")).unwrap();
    assert!(!md.contains("Drowsy Type"), "single study must not model the inducer");
    assert!(md.contains("| ECG-HR |"));

    let manifests_b = synth(11, &b.join("syn"), None);
    assert_eq!(code(&extract(&manifests_b, &b.join("feat"))), 0);
    assert_eq!(code(&fit(&b.join("feat/features.csv"), &b.join("fit"), &[])), 0);
    for dir in [&a, &b] {
        let o = fit(&dir.join("feat/features.csv"), &dir.join("fit_sx"), &["--stepwise", "--working", "exchangeable"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{} differs between runs", k.display());
    }

    for sub in ["fit", "fit_sx"] {
        let rendered = render_report_file(&a.join(sub).join("report.json")).unwrap();
        assert_eq!(rendered, std::fs::read_to_string(a.join(sub).join("report.md")).unwrap());
    }
}

#[test]
fn pooled_inducers_get_joint_test_and_odds_ratios() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), &SynthConfig::pooled());
    let manifests = synth(7, &dir.path().join("syn"), Some(&cfg));
    assert_eq!(manifests.len(), 4);
    assert_eq!(code(&extract(&manifests, &dir.path().join("feat"))), 0);
    let out = fit(&dir.path().join("feat/features.csv"), &dir.path().join("fit"), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let md = std::fs::read_to_string(dir.path().join("fit/report.md")).unwrap();
    assert!(md.contains("| Drowsy Type | - | χ²(3) = "), "{md}");
    assert!(md.contains("## Post-hoc comparisons: Drowsy Type"));
    assert!(md.contains("Objective vs Subjective: OR = "));
    let pairs = md.lines().filter(|l| l.starts_with("- ") && l.contains(" vs ") && l.contains("95%CI: [")).count();
    assert_eq!(pairs, 6 + 1);
}
