//! Drives the binary the way a user would.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn geolayer(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geolayer"));
    cmd.args(args);
    if let Some(o) = out {
        cmd.env("GEOLAYER_OUT", o);
    }
    cmd.output().unwrap()
}

#[test]
fn run_honours_env_out_dir_and_debug_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("toy3dc.cfg");
    let o = geolayer(&["run", cfg.to_str().unwrap(), "--dump-layers", "--dump-heat"], Some(dir.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["cost.csv", "latency.csv", "wan.csv", "migration.csv", "hitrate.csv", "layers.txt", "heat.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn out_flag_beats_env() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("toy3dc.cfg");
    let o = geolayer(&["run", cfg.to_str().unwrap(), "--out", flag_dir.path().to_str().unwrap()], Some(env_dir.path()));
    assert!(o.status.success());
    assert!(flag_dir.path().join("cost.csv").is_file());
    assert!(!env_dir.path().join("cost.csv").exists());
}

#[test]
fn missing_wan_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\n[wan]\nfile = \"gone.wan\"\n[graph]\nvertices = 10\n").unwrap();
    let o = geolayer(&["run", cfg.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gone.wan"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\nspeed = 2\n[wan]\nprofile = \"geo-6dc\"\n[graph]\nvertices = 10\n").unwrap();
    let o = geolayer(&["run", cfg.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));
}

#[test]
fn compare_strategies_and_schema() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("toy3dc.cfg");
    let cfg = cfg.to_str().unwrap();
    assert!(geolayer(&["run", cfg], Some(a.path())).status.success());
    assert!(geolayer(&["run", cfg, "--strategy", "random3"], Some(b.path())).status.success());

    let same = geolayer(&["compare", a.path().to_str().unwrap(), a.path().to_str().unwrap()], None);
    let text = String::from_utf8(same.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")), "{text}");

    let diff = geolayer(&["compare", a.path().to_str().unwrap(), b.path().to_str().unwrap()], None);
    let text = String::from_utf8(diff.stdout).unwrap();
    let total: f64 = text.lines().find(|l| l.starts_with("total,")).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(total > 1.0);

    let bogus = a.path().join("bogus.csv");
    std::fs::write(&bogus, "metric,value\nonly,1\n").unwrap();
    let o = geolayer(&["compare", a.path().to_str().unwrap(), bogus.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn oracle_subcommand_prints_gap() {
    let cfg = scenarios().join("tiny3dc.cfg");
    let o = geolayer(&["oracle", cfg.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert!(row[2] >= 0.0 && row[1] > 0.0);
}

#[test]
fn oracle_refuses_large_scenario() {
    let cfg = scenarios().join("toy3dc.cfg");
    let o = geolayer(&["oracle", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle"));
}
