use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hubsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hubsim"))
        .args(args)
        .output()
        .expect("spawn hubsim")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn ssd_sweep_gives_one_row_per_core_count_plus_fpga() {
    let dir = tempfile::tempdir().unwrap();
    let o = hubsim(&[
        "run",
        "ssd_cores",
        "--mode",
        "read",
        "--sweep",
        "cores=1..8",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("ssd_cores.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows.iter().filter(|r| r.contains(",cpu,")).count(), 8);
    assert_eq!(rows.iter().filter(|r| r.contains(",fpga,")).count(), 1);
    assert!(dir.path().join("ssd_cores.manifest").exists());
}

#[test]
fn unknown_scenario_fails_with_usage() {
    let o = hubsim(&["run", "no_such_thing"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert!(err.contains("gpu_offload"), "{err}");
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = hubsim(&[
            "run",
            "inaggr",
            "--mode",
            "fpga",
            "--seed",
            "7",
            "--trace",
            "--out",
            &out_arg(d.path()),
        ]);
        assert!(o.status.success());
    }
    for f in ["inaggr.csv", "inaggr.trace", "inaggr.manifest"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = hubsim(&[
        "run",
        "gpu_offload",
        "--seed",
        "11",
        "--mode",
        "with",
        "--out",
        &out_arg(a.path()),
    ]);
    assert!(o.status.success());
    let manifest = a.path().join("gpu_offload.manifest");
    let o = hubsim(&[
        "run",
        "gpu_offload",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        &out_arg(b.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(a.path().join("gpu_offload.csv")).unwrap(),
        fs::read(b.path().join("gpu_offload.csv")).unwrap()
    );
}

#[test]
fn validate_reports_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[nvme]\nqueue_depth = -1\n").unwrap();
    let o = hubsim(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("error[config]") && err.contains("line 2") && err.contains("queue_depth"),
        "{err}"
    );

    fs::write(&bad, "[nvme]\nqueue_dept = 8\n").unwrap();
    let o = hubsim(&["validate", "--config", bad.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));

    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    assert!(hubsim(&["validate", "--config", empty.to_str().unwrap()])
        .status
        .success());
}

#[test]
fn list_names_every_scenario() {
    let o = hubsim(&["list"]);
    assert!(o.status.success());
    let s = String::from_utf8_lossy(&o.stdout);
    for name in [
        "gpu_offload",
        "inaggr",
        "ssd_cores",
        "middletier",
        "interference",
    ] {
        assert!(s.contains(name));
    }
}

#[test]
fn bad_mode_and_sweep_are_config_errors() {
    let o = hubsim(&["run", "inaggr", "--mode", "gpu"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hubsim(&["run", "interference", "--mode", "fpga"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hubsim(&["run", "ssd_cores", "--sweep", "cores=5..2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hubsim(&["run", "inaggr", "--sweep", "slots=1..4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_scenario_runs_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "[scenario]\nrepetitions = 30\nwarmup = 3\n").unwrap();
    for name in [
        "gpu_offload",
        "inaggr",
        "ssd_cores",
        "middletier",
        "interference",
    ] {
        let o = hubsim(&[
            "run",
            name,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            &out_arg(dir.path()),
        ]);
        assert!(
            o.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let csv = fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        assert!(csv.lines().count() >= 2, "{name}");
        assert!(!csv.contains("NaN") && !csv.contains("inf"), "{name}");
    }
}
