use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn opm(args: &[&str], env_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_opm"));
    cmd.args(args).env_remove("OPM_OUTPUT_ROOT");
    if let Some(root) = env_root {
        cmd.env("OPM_OUTPUT_ROOT", root);
    }
    cmd.output().expect("binary runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn small_tipping(out: &Path, extra: &[&str]) -> Output {
    let out = out.display().to_string();
    let cfg = config("cessi-tipping.toml");
    let mut args = vec!["run", cfg.as_str(), "--set", "tipping.n_realizations=10", "--out", out.as_str()];
    args.extend_from_slice(extra);
    opm(&args, None)
}

fn read_json(p: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn tipping_smoke_run_writes_one_row_per_model_and_realization() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tip");
    let o = small_tipping(&out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hist = std::fs::read_to_string(out.join("histogram.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("model,realization,f_transition"));
    for model in ["full", "reduced", "slow"] {
        let rows = hist.lines().filter(|l| l.starts_with(&format!("{model},"))).count();
        assert_eq!(rows, 10, "{model}");
    }
    let summary = read_json(out.join("summary.json"));
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["results"]["ensemble"]["n"], 10);
    // The resolved config sits next to the results.
    let echoed = read_json(out.join("config.json"));
    assert_eq!(echoed["tipping"]["n_realizations"], 10);
    assert_eq!(echoed["experiment"], "cessi-tipping");
    assert!(out.join("metadata.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical_and_seeds_matter() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(small_tipping(&a, &[]).status.success());
    assert!(small_tipping(&b, &[]).status.success());
    assert!(small_tipping(&c, &["--seed", "8"]).status.success());
    let bytes = |p: &Path| std::fs::read(p.join("summary.json")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    assert_eq!(
        std::fs::read(a.join("histogram.csv")).unwrap(),
        std::fs::read(b.join("histogram.csv")).unwrap()
    );
}

#[test]
fn malformed_config_exits_one_without_creating_results() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"cessi-closure\"\n[cessi\nmu = ").unwrap();
    let out = dir.path().join("never");
    let o = opm(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "experiment = \"cessi-closure\"\n[cessi]\nmoo = 1.0\n").unwrap();
    let o = opm(&["run", unknown.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    let cfg = config("cessi-closure.toml");
    let o = opm(&["run", &cfg, "--set", "cessi.nope=2", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn divergence_exits_two_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("unstable");
    // Explicit Euler with this step is unstable for the fast mode.
    let cfg = config("cessi-closure.toml");
    let o = opm(&["run", &cfg, "--set", "cessi.dt=0.2", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let summary = read_json(out.join("summary.json"));
    assert_eq!(summary["status"], "error");
    assert_eq!(summary["error"]["code"], "diverged");
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("model-info.toml");
    let o = opm(&["run", &cfg], Some(dir.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("model-info");
    assert!(out.join("summary.json").exists());
    assert!(out.join("branch.csv").exists());
}

#[test]
fn verify_suites_report_and_set_the_exit_code() {
    let o = opm(&["verify", "reference-values"], None);
    assert!(o.status.success());
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("0 failed"), "{table}");
    let o = opm(&["verify", "no-such-suite"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn binary_format_switches_trajectory_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bin");
    let o = small_tipping(&out, &["--format", "binary"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("tipping_f_full_reduced_slow.bin").exists());
    assert!(!out.join("tipping_f_full_reduced_slow.csv").exists());
}
