//! End-to-end runs of the installed binary: artifact layout, resolved-config
//! embedding, exit-code contract, and byte-level determinism of re-runs.

use std::path::Path;
use std::process::Command;

fn gmppi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmppi"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn track_writes_metrics_with_resolved_config() {
    let out = tempfile::tempdir().unwrap();
    let status = gmppi()
        .args(["track", "--traj", "hover", "--out"])
        .arg(out.path())
        .args(["--set", "trajectory.duration=0.5", "--set", "run.settle_time=0.2"])
        .status()
        .unwrap();
    assert!(status.success());

    let metrics: serde_json::Value = serde_json::from_slice(&read(
        &out.path().join("track_hover_gmppi_seed0.metrics.json"),
    ))
    .unwrap();
    assert!(metrics["metrics"]["pos_rmse"].is_number());
    assert_eq!(metrics["label"], "gmppi");
    // The embedded config is the fully resolved one, overrides included.
    assert_eq!(metrics["config"]["trajectory"]["duration"], 0.5);
    assert_eq!(metrics["config"]["controller"]["k_rollouts"], 768);

    let aggregate = String::from_utf8(read(&out.path().join("track_aggregate.csv"))).unwrap();
    let mut lines = aggregate.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,speed,success,pos_rmse,heading_rmse,max_v,max_a"
    );
    assert_eq!(lines.count(), 1);
}

#[test]
fn ablations_add_aggregate_rows() {
    let out = tempfile::tempdir().unwrap();
    let status = gmppi()
        .args(["track", "--traj", "hover", "--ablate", "no_se3,const_dt,const_noise"])
        .args(["--out"])
        .arg(out.path())
        .args(["--set", "trajectory.duration=0.3", "--set", "run.settle_time=0.1"])
        .status()
        .unwrap();
    assert!(status.success());

    let aggregate = String::from_utf8(read(&out.path().join("track_aggregate.csv"))).unwrap();
    assert_eq!(aggregate.lines().count(), 1 + 4);
    for label in ["gmppi", "no_se3", "const_dt", "const_noise"] {
        assert!(
            out.path()
                .join(format!("track_hover_{label}_seed0.csv"))
                .exists(),
            "missing log for {label}"
        );
    }
}

#[test]
fn invalid_config_exits_nonzero_with_diagnostics() {
    let out = tempfile::tempdir().unwrap();
    let result = gmppi()
        .args(["track", "--set", "controller.lambda=-1.0", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("lambda"), "stderr was: {stderr}");

    let result = gmppi()
        .args(["track", "--set", "controller.lambdda=1.0", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(!result.status.success(), "typo in key must be rejected");
}

#[test]
fn forest_rerun_reproduces_artifacts_byte_identically() {
    let run = |dir: &Path| {
        let status = gmppi()
            .args(["forest", "--speeds", "3", "--seeds", "0", "--out"])
            .arg(dir)
            .args([
                "--set",
                r#"trajectory.kind="line""#,
                "--set",
                "trajectory.start={x=0.0,y=0.0,z=1.5}",
                "--set",
                "trajectory.end={x=6.0,y=0.0,z=1.5}",
                "--set",
                "run.settle_time=0.5",
            ])
            .status()
            .unwrap();
        // Failed flights are results, not errors: exit must be 0 either way.
        assert!(status.success());
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path());
    run(b.path());

    for name in [
        "forest_aggregate.csv",
        "forest_v3_seed0.csv",
        "forest_seed0.json",
        "forest_summary.json",
    ] {
        assert_eq!(
            read(&a.path().join(name)),
            read(&b.path().join(name)),
            "{name} differs between identical runs"
        );
    }
}
