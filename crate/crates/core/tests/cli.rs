use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use riskq::experiment::{ExperimentConfig, ExperimentKind};

fn riskq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskq"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn quick_grid(dir: &Path) -> String {
    let cfg = dir.join("quick.toml");
    fs::write(&cfg, "experiment = \"gridworld\"\n[xi]\nxi_max = 0.1\n[adapt]\neval_episodes = 200\n[eval]\nepisodes = 300\n").unwrap();
    path(&cfg).to_string()
}

#[test]
fn grid_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_grid(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = riskq(&[
            "gridworld",
            "--config",
            &cfg,
            "--episodes",
            "5000",
            "--omega",
            "0.5",
            "--seed",
            "3",
            "--out",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "sweep.csv",
        "policy.txt",
        "cells.csv",
        "oracle_check.csv",
        "report.txt",
        "config.toml",
        "model.json",
    ] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = dir.path().join("c");
    let archived = a.join("config.toml");
    assert!(riskq(&["sweep", "--config", path(&archived), "--out", path(&c)])
        .status
        .success());
    for name in ["sweep.csv", "policy.txt", "model.json", "config.toml"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(c.join(name)).unwrap(),
            "{name}"
        );
    }
    let sweep = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let archived = ExperimentConfig::from_file(&a.join("config.toml"), None).unwrap();
    assert_eq!(
        sweep.lines().next().unwrap(),
        format!("# config-hash: {}", archived.hash().unwrap())
    );
    assert_eq!(archived.learning.episodes_per_xi, 5000);
    assert_eq!(archived.seed, 3);
}

#[test]
fn every_text_artifact_carries_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_grid(dir.path());
    let out = dir.path().join("o");
    assert!(riskq(&[
        "gridworld",
        "--config",
        &cfg,
        "--episodes",
        "2000",
        "--omega",
        "0.5",
        "--out",
        path(&out)
    ])
    .status
    .success());
    for entry in fs::read_dir(&out).unwrap() {
        let p = entry.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        if p.extension().unwrap() == "json" {
            assert!(text.contains("\"config_hash\""));
        } else {
            assert!(text.starts_with("# config-hash: "), "{}", p.display());
        }
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_grid(dir.path());
    let out = dir.path().join("o");
    let o = riskq(&[
        "gridworld",
        "--config",
        &cfg,
        "--episodes",
        "1000",
        "--xi-step",
        "0.05",
        "--omega",
        "0.2",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success());
    let archived = ExperimentConfig::from_file(&out.join("config.toml"), None).unwrap();
    assert_eq!(archived.xi.xi_step, 0.05);
    assert_eq!(archived.xi.omega, 0.2);
    assert_eq!(archived.xi.xi_max, 0.1);
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[learning]\ngamma = 2.0\n").unwrap();
    let o = riskq(&[
        "gridworld",
        "--config",
        path(&cfg),
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning.gamma"));

    fs::write(&cfg, "[xi]\nxi_stepp = 0.1\n").unwrap();
    let o = riskq(&["gridworld", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("xi_stepp"));
}

#[test]
fn infeasible_bound_has_its_own_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_grid(dir.path());
    let o = riskq(&[
        "gridworld",
        "--config",
        &cfg,
        "--episodes",
        "2000",
        "--omega",
        "0.001",
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("minimum risk estimate"));
}

#[test]
fn oracle_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = riskq(&[
        "oracle-check",
        "--policy",
        "max-value",
        "--episodes",
        "2000",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.contains("offenders at omega 0.13: [(4,2) (5,2) (2,4) (2,5)]"),
        "{stdout}"
    );
    let o = riskq(&[
        "oracle-check",
        "--episodes",
        "50",
        "--tolerance",
        "0.0001",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let o = riskq(&["oracle-check", "--policy", "learned"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn saved_policy_evaluates_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_grid(dir.path());
    let out = dir.path().join("o");
    assert!(riskq(&[
        "gridworld",
        "--config",
        &cfg,
        "--episodes",
        "5000",
        "--omega",
        "0.5",
        "--out",
        path(&out)
    ])
    .status
    .success());
    let model = out.join("model.json");
    let o = riskq(&["evaluate", "--model", path(&model), "--episodes", "100"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with('(')).count(), 25);
    let o = riskq(&[
        "oracle-check",
        "--policy",
        "learned",
        "--model",
        path(&model),
        "--episodes",
        "10000",
        "--out",
        path(&dir.path().join("c")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn tank_history_writes_weighted_difference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tank.toml");
    fs::write(
        &cfg,
        "[xi]\nxi_max = 1.5\n[adapt]\neval_episodes = 50\n[eval]\nepisodes = 50\n[rbf]\nlevel_centers = 5\n",
    )
    .unwrap();
    let out = dir.path().join("t");
    let o = riskq(&[
        "tank-y-clc",
        "--config",
        path(&cfg),
        "--episodes",
        "100",
        "--omega",
        "1",
        "--history",
        "2",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let diff = fs::read_to_string(out.join("weighted_diff.csv")).unwrap();
    assert_eq!(
        diff.lines().nth(1).unwrap(),
        "xi,weighted_history,weighted_base,difference"
    );
    assert_eq!(diff.lines().count(), 2 + 3);
    assert!(out.join("run0/episode.csv").exists());
    let table = fs::read_to_string(out.join("table.txt")).unwrap();
    assert!(table.contains("RL-Y-CLC"));
}

#[test]
fn sweep_needs_an_experiment() {
    let o = riskq(&["sweep"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::preset(ExperimentKind::TankYOlc);
    let file = dir.path().join("olc.toml");
    let text = cfg.to_toml().unwrap();
    fs::write(
        &file,
        text.replace("episodes_per_xi = 20000", "episodes_per_xi = 50"),
    )
    .unwrap();
    let o = riskq(&[
        "sweep",
        "--config",
        path(&file),
        "--episodes",
        "50",
        "--xi-step",
        "50",
        "--omega",
        "1",
        "--out",
        path(&dir.path().join("s")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("experiment: tank-y-olc"));
}

#[test]
fn plot_data_converts_booleans() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "# config-hash: abc\nxi,feasible\n0,true\n0.5,false\n").unwrap();
    let out = dir.path().join("out.dat");
    assert!(
        riskq(&["plot-data", "--input", path(&input), "--out", path(&out)])
            .status
            .success()
    );
    assert_eq!(fs::read_to_string(out).unwrap(), "# xi feasible\n0 1\n0.5 0\n");
}
