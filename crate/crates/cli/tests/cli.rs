use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_PAIR: &str = r#"
mode = "pair"

[model]
epsilon = 0.4
confinement = "quadratic"

[grid]
n_x = 32
n_v = 128

[run]
horizon = 0.05
samples = 4
snapshot_every = 2
"#;

fn overdamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_overdamp")).args(args).output().unwrap()
}

fn run_config(dir: &Path, text: &str, out: &Path) -> Output {
    let cfg = dir.join("config.toml");
    fs::write(&cfg, text).unwrap();
    overdamp(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn pair_run_writes_schema_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run_config(tmp.path(), SMALL_PAIR, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let names = listing(&a);
    assert_eq!(names, listing(&b));
    assert!(names.contains(&"pair.csv".to_string()));
    assert!(names.contains(&"snapshot_000.txt".to_string()));
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
    }

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["mode"], "pair");
    assert_eq!(summary["completed"], true);
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["grid"]["n_v"], 128);
    for key in ["mass_drift", "min_gap", "identity_residual", "l1_excess", "hminus1_excess"] {
        assert!(summary["audit"][key].is_number(), "missing audit.{key}");
    }

    let csv = fs::read_to_string(a.join("pair.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(row.split(',').count(), header.len());
    }
}

#[test]
fn audit_reads_a_written_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run_config(tmp.path(), SMALL_PAIR, &out).status.success());
    let snap = out.join("snapshot_001.txt");
    let o = overdamp(&["audit", "--snapshot", snap.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 3);
    assert!(report["values"]["mass"].as_f64().unwrap() > 0.0);
}

#[test]
fn corrupt_snapshot_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.txt");
    fs::write(&p, "overdamp-snapshot 1\nt zero\n").unwrap();
    let o = overdamp(&["audit", "--snapshot", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn unwritable_output_aborts_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("sub");
    let o = run_config(tmp.path(), SMALL_PAIR, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn config_errors_exit_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "mode = \"pair\"\n[model]\nepsilon = 1.5\nconfinement = \"cubic\"\n";
    let out = tmp.path().join("out");
    let o = run_config(tmp.path(), text, &out);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("line 4"), "{err}");
    assert!(!out.exists());
}

#[test]
fn sweep_subcommand_requires_sweep_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, SMALL_PAIR).unwrap();
    let o = overdamp(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_reported() {
    let o = overdamp(&["run", "--config", "/nonexistent/overdamp.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}
