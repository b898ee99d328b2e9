use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bgkin"))
}

fn write_config(dir: &Path, body: serde_json::Value) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body.to_string()).unwrap();
    p
}

fn md_config() -> serde_json::Value {
    serde_json::json!({
        "schema_version": 1,
        "experiment": "md",
        "seed": 11,
        "output_dir": "unused",
        "units": {"length": "L_o", "velocity": "v_th", "time": "L_o/v_th"},
        "model": {"n": 10, "sigma": 0.1},
        "md": {"events": 300, "snapshot_dt": 0.25}
    })
}

#[test]
fn md_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), md_config());
    for out in ["a", "b"] {
        let status = bin()
            .args(["md", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .args(["--threads", "1"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for f in ["events_0.csv", "snapshots_0.csv", "histogram.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 11);
    assert!(manifest["files"].as_array().unwrap().iter().any(|f| f == "events_0.csv"));
    assert!(!dir.path().join("unused").exists());
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), md_config());
    for (out, seed) in [("a", "1"), ("b", "2")] {
        assert!(bin()
            .args(["md", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .args(["--seed", seed])
            .status()
            .unwrap()
            .success());
    }
    let a = std::fs::read(dir.path().join("a/events_0.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/events_0.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn invalid_config_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = md_config();
    body["model"]["sigma"] = serde_json::json!(-0.2);
    let cfg = write_config(dir.path(), body);
    let out = bin().args(["validate-config", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.sigma"), "{err}");
}

#[test]
fn subcommand_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), md_config());
    let out = bin().args(["relax", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn bg_sweep_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        serde_json::json!({
            "schema_version": 1,
            "experiment": "bg-sweep",
            "seed": 5,
            "output_dir": dir.path().join("sweep"),
            "units": {"length": "L_o", "velocity": "v_th", "time": "L_o/v_th"},
            "sequence": {"c": 0.05, "ns": [4, 8, 16, 32]},
            "pdf": {"family": "uniform_maxwellian"},
            "mc": {"samples": 20000, "max_iterations": 20},
            "grid_nodes": 3,
            "k1_tol": 0.05
        }),
    );
    let out = bin().args(["bg-sweep", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["k1_sweep.csv", "report.json", "manifest.json"] {
        assert!(dir.path().join("sweep").join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("sweep/k1_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
