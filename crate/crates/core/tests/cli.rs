use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn presets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets")
}

fn trotterq(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trotterq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn preset(name: &str) -> String {
    presets().join(name).display().to_string()
}

#[test]
fn trotter_check_passes_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = trotterq(dir.path(), &["trotter-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn out_of_domain_gamma_exits_with_a_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = trotterq(dir.path(), &["trotter-check", "--set", "gamma=1.4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let ghz = preset("ghz4.toml");
    let o = trotterq(dir.path(), &["grape", "--config", &ghz, "--set", "grape.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grape.bogus"), "{}", stderr(&o));

    let o = trotterq(dir.path(), &["grape", "--config", &ghz, "--set", "grape.stop_fidelity=1.1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = trotterq(dir.path(), &["grape"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn order_three_is_refused_for_the_ansatz() {
    let dir = tempfile::tempdir().unwrap();
    let vqa = preset("heisenberg-vqa.toml");
    let o = trotterq(dir.path(), &["vqa", "--config", &vqa, "--set", "orders=[3]"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn small_grape_run_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let ghz = preset("ghz4.toml");
    let o = trotterq(
        dir.path(),
        &[
            "grape",
            "--config",
            &ghz,
            "--set",
            "modes=[\"direct\", \"trotter2\"]",
            "--set",
            "seeds=[0]",
            "--set",
            "pulse.slices=[20]",
            "--set",
            "grape.max_iters=5",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["config.json", "runs.csv", "summary.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 3, "{runs}");
    assert!(runs.lines().next().unwrap().contains("true_fidelity"));
    assert_eq!(std::fs::read_dir(dir.path().join("traces")).unwrap().count(), 2);
    assert_eq!(std::fs::read_dir(dir.path().join("pulses")).unwrap().count(), 2);
}

#[test]
fn small_bench_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = preset("bench-qubits.toml");
    let o = trotterq(
        dir.path(),
        &["bench", "--config", &sweep, "--set", "values=[2, 3]", "--set", "repeats=2", "--set", "amortized=false"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.starts_with("variable,value,order,repeat,seed,wall_time_s,infidelity"), "{csv}");
    // 2 sizes x 5 modes x 2 repeats
    assert_eq!(csv.lines().count(), 1 + 20);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(json["spec"]["repeats"], 2);
    assert!(json["fingerprint"]["os"].is_string());
}
