use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn laganom(args: &[&str], dir: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_laganom"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "laganom {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SPEC: &str = r#"{
  "n": 3, "h": 3000, "w_true": 4, "noise_sigma": 1.0,
  "anomaly_rate": 0.004, "anomaly_magnitude": 9.0, "seed": 12,
  "support": [
    {"target": 0, "source": 1, "lag": 2, "weight": 0.6},
    {"target": 1, "source": 2, "lag": 3, "weight": -0.5},
    {"target": 2, "source": 0, "lag": 1, "weight": 0.4}
  ]
}"#;

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("spec.json"), SPEC).unwrap();

    laganom(&["generate", "--spec", "spec.json", "--out", "panel.csv"], dir);
    let header = fs::read_to_string(dir.join("panel.csv")).unwrap();
    assert!(header.starts_with("series_0,series_1,series_2,label_0"));

    laganom(
        &["train", "--panel", "panel.csv", "--window", "5", "--lambda", "200", "--out", "models"],
        dir,
    );
    for i in 0..3 {
        assert!(dir.join(format!("models/{i}.json")).exists());
    }

    laganom(
        &["detect", "--panel", "panel.csv", "--models", "models", "--threshold", "1e-5", "--d", "1", "--out", "verdicts.jsonl"],
        dir,
    );
    let verdicts = fs::read_to_string(dir.join("verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 3 * (3000 - 5));
    let first: serde_json::Value = serde_json::from_str(verdicts.lines().next().unwrap()).unwrap();
    assert_eq!(first["t"], 5);
    assert!(verdicts.contains("\"is_anomaly\":true"));

    let mi = laganom(&["mi", "--panel", "panel.csv", "--series", "0..2", "--resolution", "32"], dir);
    assert_eq!(String::from_utf8(mi.stdout).unwrap().lines().count(), 4);

    laganom(
        &["bayes-fit", "--panel", "panel.csv", "--model", "models/0.json", "--horizon", "0", "--out", "calib_0.json"],
        dir,
    );
    let calib: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("calib_0.json")).unwrap()).unwrap();
    assert_eq!(calib["horizon"], "detect");
    assert!(calib["alpha"].as_f64().unwrap() > 0.0);

    laganom(&["baseline-gaussian", "--panel", "panel.csv", "--out", "gauss.jsonl"], dir);
    assert_eq!(fs::read_to_string(dir.join("gauss.jsonl")).unwrap().lines().count(), 900);

    let bench = laganom(&["bench", "--panel", "panel.csv", "--models", "models", "--repetitions", "1"], dir);
    let report: serde_json::Value = serde_json::from_slice(&bench.stdout).unwrap();
    assert_eq!(report["warmup_steps"], 5);

    fs::write(
        dir.join("experiment.json"),
        r#"{"panel": {"path": "panel.csv"}, "window": 5, "lambda": 200.0, "threshold": 1e-5, "bench_repetitions": 1}"#,
    )
    .unwrap();
    laganom(&["run", "--config", "experiment.json", "--out", "report.json"], dir);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["methods"]["lagreg"]["f1"].as_f64().unwrap() > 0.5);
}

#[test]
fn stream_reads_points_from_stdin() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::create_dir(dir.join("models")).unwrap();
    fs::write(
        dir.join("models/0.json"),
        r#"{"series_id": 0, "w": 2, "lambda": 0.0, "intercept": 0.0, "sigma": 1.0, "m": 1,
            "coeffs": [{"j": 0, "k": 1, "beta": 0.5}]}"#,
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_laganom"))
        .args(["stream", "--models", "models"])
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let input = "[1.0]\n{\"t\": 1, \"values\": [2.0]}\n[1.0]\n\n[30.0]\n";
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["prediction"], 1.0);
    assert_eq!(lines[0]["is_anomaly"], false);
    assert_eq!(lines[1]["is_anomaly"], true);
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_laganom"))
        .args(["train", "--panel", "missing.csv", "--window", "3", "--lambda", "1", "--out", "m"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}
