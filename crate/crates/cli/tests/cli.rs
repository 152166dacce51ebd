use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn groundkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = groundkit(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn missing_manifest_exits_with_io_code() {
    let out = groundkit(&["eval", "--manifest", "/nonexistent/m.jsonl", "--predictions", "/nonexistent/p.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/"));
}

#[test]
fn schema_error_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let m = path(dir.path(), "m.jsonl");
    fs::write(&m, "{\"sample_id\": \"a\"}\n").unwrap();
    let out = groundkit(&["split", "--manifest", &m]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn pipeline_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let m = path(dir.path(), "m.jsonl");
    ok(&["synth", "--off-grid", "--output", &m]);
    for cmd in [
        &["split", "--manifest", &m][..],
        &["render", "--manifest", &m],
        &["mock-predict", "--manifest", &m, "--profile", "jitter:5"],
    ] {
        assert_eq!(ok(cmd), ok(cmd), "{cmd:?}");
    }
    let p = path(dir.path(), "p.jsonl");
    ok(&["mock-predict", "--manifest", &m, "--profile", "jitter:5", "--output", &p]);
    let eval = ["eval", "--manifest", &m, "--predictions", &p];
    assert_eq!(ok(&eval), ok(&eval));
}

#[test]
fn markdown_report_with_comparison_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (m, p, r) = (path(dir.path(), "m.jsonl"), path(dir.path(), "p.jsonl"), path(dir.path(), "r.md"));
    ok(&["synth", "--output", &m]);
    ok(&["mock-predict", "--manifest", &m, "--output", &p]);
    ok(&["--format", "md", "eval", "--manifest", &m, "--predictions", &p, "--compare", "--output", &r]);
    let report = fs::read_to_string(&r).unwrap();
    assert!(report.contains("### IoU") && report.contains("### Dice"));
    assert!(report.contains("| MSLL | 0.425 |"));
    assert!(report.contains("| this run | 1.000 |"));
}

#[test]
fn parse_reads_argument_and_reports_failures() {
    let v: serde_json::Value = serde_json::from_str(&ok(&["parse", "at {<12><30><45><80>} here"])).unwrap();
    assert_eq!(v["bbox"], serde_json::json!([12, 30, 45, 80]));
    assert_eq!(v["span"], serde_json::json!([3, 21]));
    let v: serde_json::Value = serde_json::from_str(&ok(&["parse", "{<45><80><12><30>}"])).unwrap();
    assert_eq!(v["failure"], "corner_order");
}

#[test]
fn overlay_writes_one_svg_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let (m, p) = (path(dir.path(), "m.jsonl"), path(dir.path(), "p.jsonl"));
    let out = dir.path().join("svg");
    ok(&["synth", "--per-category", "1", "--output", &m]);
    ok(&["mock-predict", "--manifest", &m, "--category-profile", "edema=malformed:no-box", "--output", &p]);
    ok(&["overlay", "--manifest", &m, "--predictions", &p, "--output-dir", &out.to_string_lossy()]);
    let files: Vec<_> = fs::read_dir(&out).unwrap().collect();
    assert_eq!(files.len(), 8);
    for e in files {
        let svg = fs::read_to_string(e.unwrap().path()).unwrap();
        let rects = svg.matches("<rect").count();
        assert!(rects == 1 || rects == 2);
    }
}

#[test]
fn bad_profile_is_rejected() {
    let out = groundkit(&["mock-predict", "--manifest", "x", "--profile", "sloppy"]);
    assert_eq!(out.status.code(), Some(2));
    let out = groundkit(&["mock-predict", "--manifest", "x", "--category-profile", "Nope=perfect"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn adapter_demo_passes() {
    let out = ok(&["demo-adapter"]);
    assert!(!out.contains("FAIL"));
    assert_eq!(out.matches("PASS").count(), 7);
}
