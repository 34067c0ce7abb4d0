mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anticipation"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str) -> String {
    common::fixture_dir().join(name).display().to_string()
}

fn annotations() -> Vec<String> {
    common::annotation_fixtures()
        .iter()
        .map(|p| p.display().to_string())
        .collect()
}

#[test]
fn prepare_reproduces_the_shipped_clip_file() {
    let files = annotations();
    let mut args = vec!["prepare", "--split", "test", "--annotations"];
    args.extend(files.iter().map(String::as_str));
    let out = ok(&args);
    let shipped = std::fs::read_to_string(fixture("eval_clips_ta5.json")).unwrap();
    assert_eq!(out, shipped);
}

#[test]
fn prepare_honours_window_flags() {
    let files = annotations();
    let out = ok(&["prepare", "--ta", "2", "--annotations", &files[1]]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["format"], "anticipation-eval-clips/1");
    assert_eq!(v["anticipation_ms"], 2000);
    let clips = v["clips"].as_array().unwrap();
    assert!(clips
        .iter()
        .all(|c| c["anticipation_end_ms"].as_u64().unwrap() - c["anticipation_start_ms"].as_u64().unwrap() == 2000));
}

#[test]
fn evaluate_formats() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.json");
    let gt = fixture("eval_clips_ta5.json");
    ok(&[
        "baseline",
        "--gt",
        &gt,
        "--kind",
        "oracle",
        "--out",
        pred.to_str().unwrap(),
    ]);

    let md = ok(&[
        "evaluate",
        "--gt",
        &gt,
        "--pred",
        pred.to_str().unwrap(),
        "--format",
        "md",
    ]);
    assert!(md.starts_with("| Action | δ=1 | 2 | 3 | 4 | 5 | ∞ | Avg. |"));
    assert!(md.contains("| **mAP** | 100.00 | 100.00 | 100.00 | 100.00 | 100.00 | 100.00 | 100.00 |"));

    let csv = ok(&[
        "evaluate",
        "--gt",
        &gt,
        "--pred",
        pred.to_str().unwrap(),
        "--format",
        "csv",
        "--deltas",
        "1,inf",
    ]);
    assert!(csv.starts_with("label,delta,ap,tp,fp,gt\n"));
    assert!(csv.contains("mAP,avg,1,,,"));

    let json_out = ok(&["evaluate", "--gt", &gt, "--pred", pred.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&json_out).unwrap();
    assert_eq!(v["average"], 1.0);
    assert_eq!(v["tolerances"], json!(["1", "2", "3", "4", "5", "inf"]));
}

#[test]
fn evaluate_rejects_out_of_window_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.json");
    let doc =
        json!({"predictions": [{"clip_id": "synthetic-b|1|0", "label": "Pass", "time_s": 6.0, "confidence": 0.5}]});
    std::fs::write(&pred, doc.to_string()).unwrap();
    let out = run(&[
        "evaluate",
        "--gt",
        &fixture("eval_clips_ta5.json"),
        "--pred",
        pred.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"));
}

#[test]
fn prior_baseline_reads_counts_file_or_training_games() {
    let gt = fixture("eval_clips_ta5.json");
    let from_table = ok(&[
        "baseline",
        "--gt",
        &gt,
        "--kind",
        "prior",
        "--class-counts",
        &fixture("class_counts_table.json"),
    ]);
    let v: Value = serde_json::from_str(&from_table).unwrap();
    let preds = v["predictions"].as_array().unwrap();
    let pass = preds.iter().find(|p| p["label"] == "Pass").unwrap();
    assert_eq!(pass["confidence"], 1.0);
    let tackle = preds.iter().find(|p| p["label"] == "Successful Tackle").unwrap();
    assert_eq!(tackle["confidence"].as_f64().unwrap(), 34.0 / 2679.0);

    let files = annotations();
    ok(&["baseline", "--gt", &gt, "--kind", "prior", "--train", &files[0]]);
    let missing = run(&["baseline", "--gt", &gt, "--kind", "prior"]);
    assert!(!missing.status.success());
}

#[test]
fn stats_reports_weights() {
    let files = annotations();
    let v: Value = serde_json::from_str(&ok(&["stats", "--annotations", &files[0], &files[1]])).unwrap();
    assert!(v["splits"]["train"]["Pass"].as_u64().unwrap() > 0);
    assert!(v["splits"]["test"].get("Goal").is_none());
    assert!(v["weights"]["Successful Tackle"].as_f64().unwrap() > v["weights"]["Pass"].as_f64().unwrap());
}

#[test]
fn targets_need_outputs_for_hungarian_heads() {
    let files = annotations();
    let v: Value = serde_json::from_str(&ok(&["targets", "--variant", "q-bckg", "--annotations", &files[0]])).unwrap();
    assert_eq!(v["format"], "anticipation-targets/1");
    let clip = &v["clips"][0];
    assert_eq!(clip["slots"].as_array().unwrap().len(), 8);
    assert_eq!(clip["segmentation"].as_array().unwrap().len(), 32);

    let out = run(&["targets", "--variant", "q-hung-t", "--annotations", &files[0]]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("q-hung-t"));
}

#[test]
fn loss_check_reports_components() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("loss.json");
    let slot = json!({"actionness": 0.5, "class_probs": vec![0.1; 10], "time": (0.4f64 + 1e-6).ln()});
    let doc = json!({
        "variant": "q-act",
        "samples": [{
            "future_actions": [{"class": "Pass", "offset_ms": 2000}],
            "outputs": vec![slot; 8],
        }],
    });
    std::fs::write(&input, doc.to_string()).unwrap();
    let v: Value = serde_json::from_str(&ok(&["loss-check", "--input", input.to_str().unwrap()])).unwrap();
    let s = &v["samples"][0];
    assert!((s["detection"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((s["class"].as_f64().unwrap() - std::f64::consts::LN_10).abs() < 1e-15);
    assert_eq!(s["time"].as_f64().unwrap(), 0.0);
    assert_eq!(s["segmentation"].as_f64().unwrap(), 0.0);
}

#[test]
fn decode_emits_one_prediction_per_class_and_slot() {
    let dir = tempfile::tempdir().unwrap();
    let outputs = dir.path().join("outputs.json");
    let mut probs = vec![0.0; 11];
    probs[2] = 1.0;
    let eos = {
        let mut p = vec![0.0; 11];
        p[10] = 1.0;
        p
    };
    let doc = json!({"outputs": {"g|1|0": [
        {"class_probs": probs, "time": (0.5f64 + 1e-6).ln()},
        {"class_probs": eos, "time": 0.0},
    ]}});
    std::fs::write(&outputs, doc.to_string()).unwrap();
    let v: Value = serde_json::from_str(&ok(&[
        "decode",
        "--outputs",
        outputs.to_str().unwrap(),
        "--variant",
        "q-eos",
        "--queries",
        "2",
    ]))
    .unwrap();
    let preds = v["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 10);
    let best = preds.iter().find(|p| p["confidence"] == 1.0).unwrap();
    assert_eq!(best["label"], "High Pass");
    assert!((best["time_s"].as_f64().unwrap() - 2.5).abs() < 1e-9);
}

#[test]
fn synth_writes_parseable_games() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().display().to_string();
    ok(&[
        "synth",
        "--out-dir",
        &d,
        "--game",
        "one:train",
        "two:valid",
        "--seed",
        "2",
        "--raw",
    ]);
    for name in ["one.json", "two.json"] {
        let g = anticipation_bench::parse_annotations(Path::new(&d).join(name)).unwrap();
        assert!(!g.actions.is_empty());
    }
}

#[test]
fn unknown_variant_is_an_error() {
    let files = annotations();
    let out = run(&["targets", "--variant", "q-magic", "--annotations", &files[0]]);
    assert!(!out.status.success());
}
