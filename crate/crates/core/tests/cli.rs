use std::process::Command;

fn rbmh() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rbmh"))
}

#[test]
fn missing_config_names_the_path() {
    let out = rbmh().args(["run", "--config", "/nonexistent/exp.toml", "--seed", "1"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/exp.toml"), "{err}");
}

#[test]
fn seed_is_required() {
    let out = rbmh().args(["run", "--model", "gaussian_rw", "--scales", "1"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn selftest_passes() {
    let out = rbmh().arg("selftest").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
}

#[test]
fn config_file_run_then_tables_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cauchy.toml");
    std::fs::write(
        &config,
        "name = \"cauchy\"\nmodel = \"cauchy_independence\"\nscales = [0.25, 1.0]\niterations = 50\nreplications = 20\nk = [\"inf\"]\nh = [\"x\", \"x>0\"]\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = rbmh().arg("run").arg("--config").arg(&config).args(["--seed", "9", "--out-dir"]).arg(&run).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "timing.json", "table_cauchy.csv", "envelope_delta.csv", "envelope_delta_kinf.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let rendered = dir.path().join("rendered");
    let report = run.join("report.json");
    let out = rbmh().args(["tables", "--report"]).arg(&report).arg("--out-dir").arg(&rendered).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("tau=0.25"));
    assert_eq!(
        std::fs::read(rendered.join("table_cauchy.csv")).unwrap(),
        std::fs::read(run.join("table_cauchy.csv")).unwrap()
    );
    let out = rbmh().args(["figures", "--report"]).arg(&report).arg("--out-dir").arg(&rendered).output().unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(rendered.join("envelope_delta.csv")).unwrap(),
        std::fs::read(run.join("envelope_delta.csv")).unwrap()
    );
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbmh()
        .args(["run", "--model", "geometric_rw", "--scales", "0.5", "--iterations", "20", "--replications", "3", "--seed", "2"])
        .env("RBMH_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("report.json").exists());
}
