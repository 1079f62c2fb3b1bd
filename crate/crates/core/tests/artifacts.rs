use lal_core::dynamics::{simulate_leray, ControlSignal};
use lal_core::io::{
    load_config, trajectory_binary, trajectory_csv, verify_manifest, write_run_artifacts,
    ArtifactWriter, RunConfig, RunManifest,
};
use lal_core::Error;

fn small_config(dir: &std::path::Path) -> RunConfig {
    let mut cfg =
        RunConfig::from_json(r#"{"grid": {"n": 8, "k_max": 1}, "time": {"steps": 50}}"#).unwrap();
    cfg.output.directory = dir.to_path_buf();
    cfg
}

fn run(cfg: &RunConfig) -> RunManifest {
    let b = cfg.basis().unwrap();
    let g = cfg.time_grid().unwrap();
    let mask = cfg.mask().unwrap();
    let y0 = cfg.initial_condition.build(&b).unwrap();
    let tr = simulate_leray(
        &y0,
        &ControlSignal::zeros(g, &mask),
        cfg.filter().unwrap(),
        g,
    )
    .unwrap();
    let mut w = ArtifactWriter::new(&cfg.output.directory).unwrap();
    write_run_artifacts(&mut w, cfg, "", &tr, Some(&ControlSignal::zeros(g, &mask))).unwrap();
    w.record(serde_json::json!({"terminal_norm": tr.terminal().norm()}))
        .unwrap();
    w.finish("simulate", cfg, Some(1)).unwrap()
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let m = run(&cfg);
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for n in [
        "trajectory.csv",
        "control.csv",
        "trajectory.bin",
        "trajectory.bin.json",
        "control.bin",
        "control.bin.json",
    ] {
        assert!(names.contains(&n), "{n}");
    }
    assert!(verify_manifest(dir.path(), &m).is_empty());
    let on_disk: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk, m);
    assert_eq!(
        serde_json::from_value::<RunConfig>(m.config.clone()).unwrap(),
        cfg
    );

    std::fs::write(dir.path().join("control.csv"), "tampered").unwrap();
    assert_eq!(
        verify_manifest(dir.path(), &m),
        vec!["control.csv".to_string()]
    );
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run(&small_config(a.path()));
    let mb = run(&small_config(b.path()));
    for (x, y) in ma.files.iter().zip(&mb.files) {
        assert_eq!(x.path, y.path);
        assert_eq!(x.sha256, y.sha256, "{}", x.path);
    }
}

#[test]
fn csv_and_binary_layouts() {
    let cfg =
        RunConfig::from_json(r#"{"grid": {"n": 8, "k_max": 1}, "time": {"steps": 20}}"#).unwrap();
    let b = cfg.basis().unwrap();
    let g = cfg.time_grid().unwrap();
    let mask = cfg.mask().unwrap();
    let y0 = cfg.initial_condition.build(&b).unwrap();
    let tr = simulate_leray(
        &y0,
        &ControlSignal::zeros(g, &mask),
        cfg.filter().unwrap(),
        g,
    )
    .unwrap();

    let csv = trajectory_csv(&tr, None, cfg.filter().unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,l2_norm,v_norm,da_norm,energy_residual");
    assert_eq!(lines.len(), g.len() + 1);
    let first: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(first[1], y0.norm());
    assert!(lines.last().unwrap().ends_with("NaN"));

    let (bytes, sidecar) = trajectory_binary(&tr);
    assert_eq!(bytes.len(), 8 * g.len() * b.len());
    assert_eq!(sidecar["shape"], serde_json::json!([g.len(), b.len()]));
    let back: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(&back[..b.len()], y0.coeffs());
}

#[test]
fn formats_select_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.output.formats = vec!["json".into()];
    let m = run(&cfg);
    assert!(m.files.is_empty());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn config_loading_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = load_config(&dir.path().join("nope.json")).unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));
    assert_eq!(missing.exit_code(), 4);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(load_config(&bad).unwrap_err().exit_code(), 5);

    std::fs::write(&bad, r#"{"time": {"steps": 1}}"#).unwrap();
    let e = load_config(&bad).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    assert!(e.to_string().contains("time.steps"), "{e}");

    std::fs::write(&bad, r#"{"grid": {"n": 12}}"#).unwrap();
    assert_eq!(load_config(&bad).unwrap_err().exit_code(), 1);

    std::fs::write(
        &bad,
        r#"{"initial_condition": {"kind": "single_mode", "k": [9, 9], "amplitude": 1}}"#,
    )
    .unwrap();
    let e = load_config(&bad).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    assert!(e.to_string().contains("initial_condition.k"), "{e}");
}
