use std::path::Path;
use std::process::{Command, Output};

use dualgrasp_core::{Config, Mode};

fn dualgrasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualgrasp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, config: &Config) -> String {
    let path = dir.join(name);
    std::fs::write(&path, config.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn default_config_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualgrasp(&["config", "default", "--out", &path(dir.path(), "c.toml")]);
    assert!(out.status.success());
    let loaded = Config::load(dir.path().join("c.toml")).unwrap();
    assert_eq!(loaded, Config::default());
}

#[test]
fn field_samples_cover_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "field.csv");
    let out = dualgrasp(&[
        "fields", "sample", "--step", "0.1", "--extent", "0.3", "0.2", "--out", &csv,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("robot,x,y,vx,vy,singular"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').take(5).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2 * 7 * 5);
    // A blend of two fields of speed `v_imp` is never faster; at the box
    // centre and far out it is exactly `v_imp`.
    let v_imp = Config::default().fields.impact_speed;
    for r in &rows {
        let speed = r[3].hypot(r[4]);
        assert!(speed <= v_imp + 1e-12 && speed > 0.0, "{r:?}");
        if r[1].hypot(r[2]) < 1e-12 || r[1].abs() > 0.29 {
            assert!((speed - v_imp).abs() < 1e-9, "{r:?}");
        }
    }
}

#[test]
fn fitted_model_drives_a_rigid_episode() {
    let dir = tempfile::tempdir().unwrap();
    let model = path(dir.path(), "model.txt");
    let out = dualgrasp(&["predictor", "fit", "--out", &model]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = path(dir.path(), "run");
    let out = dualgrasp(&[
        "sim",
        "run",
        "--variant",
        "proposed",
        "--mode",
        "rigid",
        "--model",
        &model,
        "--out",
        &run_dir,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("success"));
    for f in [
        "episode.csv",
        "episode.meta.toml",
        "figures/velocities.svg",
        "figures/contact_forces.csv",
    ] {
        assert!(dir.path().join("run").join(f).is_file(), "{f}");
    }
}

#[test]
fn fault_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::default();
    config.scenario.mode = Mode::Rigid;
    // No torque within the bounds can hold this normal force.
    config.controller.min_normal_force = 1e4;
    let cfg = write_config(dir.path(), "c.toml", &config);
    let run_dir = path(dir.path(), "run");
    let out = dualgrasp(&[
        "sim",
        "run",
        "--config",
        &cfg,
        "--variant",
        "no-impact-map",
        "--out",
        &run_dir,
    ]);
    assert_eq!(out.status.code(), Some(2));
    let meta = std::fs::read_to_string(dir.path().join("run/episode.meta.toml")).unwrap();
    assert!(meta.contains("outcome = \"fault\""), "{meta}");
}

#[test]
fn short_suite_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::default();
    config.sim.horizon = 0.2;
    let cfg = write_config(dir.path(), "c.toml", &config);
    let out_dir = path(dir.path(), "suite");
    let out = dualgrasp(&["suite", "run", "--config", &cfg, "--out", &out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("suite/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.lines().skip(1).all(|l| l.contains(",horizon,")));
}

#[test]
fn bad_arguments_are_rejected() {
    let out = dualgrasp(&["sim", "run", "--variant", "bogus", "--out", "/tmp/unused"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let missing = dualgrasp(&["sim", "run", "--config", "/nonexistent.toml", "--out", "/tmp/unused"]);
    assert_eq!(missing.status.code(), Some(1));
}
