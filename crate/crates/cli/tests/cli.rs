//! End-to-end checks of the binary: exit codes, artifacts, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn flowsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workflows_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../workflows")
}

#[test]
fn validate_accepts_builtins_and_sample_documents() {
    let out = flowsim(&["validate", "wc"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out), "0 findings\n");

    for doc in ["wc4.flow", "chain3.flow", "switch3.flow"] {
        let path = workflows_dir().join(doc);
        let out = flowsim(&["validate", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{doc}: {}", stderr(&out));
        assert_eq!(stdout(&out), "0 findings\n", "{doc}");
    }
}

#[test]
fn unknown_workflow_is_a_workload_failure() {
    let out = flowsim(&["validate", "warp"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown workflow"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_two() {
    let out = flowsim(&["run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--workflow"), "{}", stderr(&out));
    let out = flowsim(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "run".to_string(),
            "--workflow".into(),
            "pipe".into(),
            "--pattern".into(),
            "closed:1:2s".into(),
            "--input".into(),
            "1KiB".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    for out_dir in [&a, &b] {
        let argv: Vec<String> = args(out_dir);
        let refs: Vec<&str> = argv.iter().map(|s| s.as_str()).collect();
        let out = flowsim(&refs);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    for name in ["dataflow_summary.csv", "dataflow_requests.csv", "dataflow_events.log"] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert!(!left.is_empty(), "{name} is empty");
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn compare_exit_code_tracks_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("cmp");
    let base = [
        "compare",
        "--workflow",
        "chain:2:262144",
        "--pattern",
        "closed:1:5s",
        "--input",
        "1KiB",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    let out = flowsim(&base);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("verdict: PASS"), "{}", stdout(&out));
    assert!(out_dir.join("comparison.json").exists());
    assert!(out_dir.join("controlflow_summary.csv").exists());

    let mut strict: Vec<&str> = base.to_vec();
    strict.extend_from_slice(&["--min-ratio", "1000000"]);
    let out = flowsim(&strict);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("verdict: FAIL"), "{}", stdout(&out));
    assert!(stderr(&out).contains("below the required"), "{}", stderr(&out));
}

#[test]
fn report_renders_a_saved_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("cmp");
    let out = flowsim(&[
        "compare",
        "--workflow",
        "pipe",
        "--pattern",
        "closed:1:2s",
        "--input",
        "1KiB",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = flowsim(&["report", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("verdict:"), "{}", stdout(&out));

    let empty = dir.path().join("nothing");
    let out = flowsim(&["report", "--out", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no report"), "{}", stderr(&out));
}

#[test]
fn cluster_and_placement_files_are_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cluster = dir.path().join("one.toml");
    std::fs::write(
        &cluster,
        "[[nodes]]\nname = \"solo\"\ncores = 16.0\nmemory_mb = 65536\n",
    )
    .unwrap();
    let placement = dir.path().join("place.json");
    std::fs::write(&placement, "{\"only\": \"solo\"}").unwrap();
    let out_dir = dir.path().join("run");
    let place_arg = format!("file:{}", placement.display());
    let out = flowsim(&[
        "run",
        "--workflow",
        "pipe",
        "--cluster",
        cluster.to_str().unwrap(),
        "--placement",
        &place_arg,
        "--pattern",
        "closed:1:1s",
        "--input",
        "1KiB",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let log = std::fs::read_to_string(out_dir.join("dataflow_events.log")).unwrap();
    assert!(log.contains(" solo "), "events should come from the configured node");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"only\": \"ghost\"}").unwrap();
    let bad_arg = format!("file:{}", bad.display());
    let out = flowsim(&[
        "run",
        "--workflow",
        "pipe",
        "--cluster",
        cluster.to_str().unwrap(),
        "--placement",
        &bad_arg,
        "--pattern",
        "closed:1:1s",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ghost"), "{}", stderr(&out));
}
