use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn qptsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qptsim")).args(args).output().unwrap()
}

fn error_category(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    v["error"]["category"].as_str().unwrap().to_string()
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "schema = \"qptsim-run/1\"\nsystem = \"{}\"\nhistogram = \"{}\"\nseed = 5\n{extra}",
        data("alanine.toml").display(),
        data("rf_histogram.toml").display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn all_toggles_off_records_unit_correlation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let r = qptsim(&["run-qpt", "--config", s(&data("configs/ideal.toml")), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = manifest(&out.join("manifest.json"));
    let corr = m["metrics"]["correlation_with_theory"].as_f64().unwrap();
    assert!((corr - 1.0).abs() < 1e-12, "{corr}");
    assert_eq!(m["schema"], "qptsim-manifest/1");
    assert_eq!(m["seed"], 1);
    assert!(m["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn same_seed_same_bytes_other_seed_other_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(tmp.path(), "noise_sigma = 0.05\n[toggles]\nnoise = true\n");
    let read = |name: &str| std::fs::read(tmp.path().join(name).join("m_obs.qmat")).unwrap();
    for (name, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let out = tmp.path().join(name);
        let r = qptsim(&["run-qpt", "--config", s(&cfg), "--seed", seed, "--out", s(&out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn analyze_refuses_tampered_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(tmp.path(), "noise_sigma = 0.01\n[toggles]\nnoise = true\n");
    let run = tmp.path().join("run");
    assert!(qptsim(&["run-qpt", "--config", s(&cfg), "--out", s(&run)]).status.success());
    let ok = qptsim(&["analyze", "--run", s(&run), "--out", s(&tmp.path().join("ok"))]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    for name in ["report.json", "report.txt", "spectra.csv", "rotation_fit.json", "manifest.json"] {
        assert!(tmp.path().join("ok").join(name).exists(), "{name}");
    }

    let m_obs = run.join("m_obs.qmat");
    let mut bytes = std::fs::read(&m_obs).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&m_obs, bytes).unwrap();
    let bad = qptsim(&["analyze", "--run", s(&run), "--out", s(&tmp.path().join("bad"))]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(error_category(&bad), "integrity");
}

#[test]
fn exit_codes_follow_error_categories() {
    let tmp = tempfile::tempdir().unwrap();

    let cfg = run_config(tmp.path(), "colour = \"blue\"\n");
    let r = qptsim(&["run-qpt", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(error_category(&r), "config");

    let cfg = run_config(tmp.path(), "condition_bound = 0.5\n");
    let r = qptsim(&["run-qpt", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(error_category(&r), "numerical");

    let missing = tmp.path().join("missing.qmat");
    let r = qptsim(&["project-cptp", "--input", s(&missing), "--out", s(&tmp.path().join("p.qmat"))]);
    assert_eq!(r.status.code(), Some(4));
    assert_eq!(error_category(&r), "io");

    let r = qptsim(&["design-pulse", "--target", "z90:1", "--system", s(&data("alanine.toml")), "--histogram", s(&data("rf_histogram.toml")), "--out", s(&tmp.path().join("d.toml"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn shipped_non_cp_example_converges_monotonically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("projected.txt");
    let r = qptsim(&["project-cptp", "--input", s(&data("non_cp_channel.txt")), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = manifest(&tmp.path().join("projected.txt.manifest.json"));
    let metrics = &m["metrics"];
    assert!(metrics["positivity_before"].as_f64().unwrap() < 1.0);
    assert_eq!(metrics["converged"], true);
    assert!(metrics["min_eigenvalue"].as_f64().unwrap() >= -1e-9);
    assert!(metrics["tp_defect"].as_f64().unwrap() < 1e-6);

    let log = std::fs::read_to_string(tmp.path().join("projected.txt.log.csv")).unwrap();
    let rows: Vec<Vec<f64>> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 2);
    for w in rows.windows(2) {
        assert!(w[1][2] <= w[0][2], "TP defect grew: {:?} -> {:?}", w[0], w[1]);
        assert!(w[1][3] >= w[0][3] - 1e-12, "distance shrank: {:?} -> {:?}", w[0], w[1]);
    }
}

#[test]
fn spectrum_writes_one_row_per_eigenvalue() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("spectra.csv");
    let r = qptsim(&[
        "spectrum",
        "--input",
        s(&data("non_cp_channel.txt")),
        "--label",
        "fixture",
        "--out",
        s(&out),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 16);
    assert!(text.lines().nth(1).unwrap().starts_with("fixture,0,"));
}
