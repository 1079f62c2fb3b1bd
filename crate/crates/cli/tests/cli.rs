use std::path::Path;
use std::process::{Command, Output};

fn lal(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lal"));
    if let Some(text) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.arg("--output")
        .arg(dir.join("out"))
        .args(args)
        .env("LAL_THREADS", "2");
    cmd.output().unwrap()
}

const SMALL: &str = r#"{"grid": {"n": 8, "k_max": 1}, "time": {"steps": 100}}"#;

fn manifest(dir: &Path) -> lal_core::io::RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_a_verifiable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = lal(dir.path(), Some(SMALL), &["simulate"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = manifest(dir.path());
    assert_eq!(m.command, "simulate");
    assert_eq!(m.threads, Some(2));
    assert!(m.files.iter().any(|f| f.path == "energy_report.json"));
    assert!(lal_core::io::verify_manifest(&dir.path().join("out"), &m).is_empty());
}

#[test]
fn control_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = lal(d.path(), Some(SMALL), &["control"]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert!(ma.files.iter().any(|f| f.path == "control.csv"));
    for (x, y) in ma.files.iter().zip(&mb.files) {
        assert_eq!((&x.path, &x.sha256), (&y.path, &y.sha256));
    }
}

#[test]
fn zero_initial_state_needs_no_control() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"n": 8, "k_max": 1}, "time": {"steps": 50}, "initial_condition": {"kind": "zero"}}"#;
    let out = lal(dir.path(), Some(cfg), &["control"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let record: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/run_record.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(record["control_linf_l2"], 0.0);
    assert_eq!(record["iters"], 1);
}

#[test]
fn oversized_sweep_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"n": 8, "k_max": 1}, "time": {"steps": 50},
                  "initial_condition": {"kind": "two_mode", "amplitude": 7.08},
                  "sweep": {"alphas": [0.1, 0]}}"#;
    let out = lal(dir.path(), Some(cfg), &["sweep"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("smallness"), "{stderr}");
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",false,")), "{csv}");
}

#[test]
fn config_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = lal(
        dir.path(),
        Some(r#"{"phisics": {"alpha": 0.1}}"#),
        &["simulate"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did you mean `physics`"));

    let out = lal(
        dir.path(),
        Some(r#"{"physics": {"alpha": -1}}"#),
        &["simulate"],
    );
    assert_eq!(out.status.code(), Some(1));

    let out = lal(dir.path(), Some("{"), &["simulate"]);
    assert_eq!(out.status.code(), Some(5));

    let out = Command::new(env!("CARGO_BIN_EXE_lal"))
        .args(["--config", "/nonexistent/lal.json", "simulate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn verify_runs_only_the_selected_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let out = lal(dir.path(), None, &["verify", "--tag", "spectral"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = stdout.lines().filter(|l| l.starts_with('[')).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("[PASS]") && rows[0].contains("spectral"));
    assert!(dir.path().join("out/acceptance.json").exists());
}
