use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hedwel(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hedwel"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HEDONIC_WELFARE_OUT")
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn replicate_paper_succeeds_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = hedwel(&["replicate-paper"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max |residual|"));
    for f in ["replication.json", "replication.txt", "cv_table.csv", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn corrupted_constants_exit_with_replication_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/paper_constants.json"))
        .unwrap()
        .replacen("14.0606", "14.0607", 1);
    fs::write(dir.path().join("constants.json"), text).unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "seed": 0, "replicate": {"constants": "constants.json"}}"#);
    let out_dir = dir.path().join("out");
    let out = hedwel(&["replicate-paper", "--config", cfg.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn invalid_tau_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "seed": 0, "estimate": {"taus": [0.0, 0.5]}}"#);
    let out_dir = dir.path().join("out");
    let out = hedwel(&["estimate", "--config", cfg.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists() || fs::read_dir(&out_dir).unwrap().count() == 0);
}

#[test]
fn staged_commands_produce_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("direct_demand.json");
    let cfg = cfg.to_str().unwrap();
    for cmd in ["simulate", "estimate", "welfare", "plot"] {
        let out = hedwel(&[cmd, "--config", cfg], dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["households.csv", "markets.csv", "demand_fits.csv", "cv_table.csv", "frontier.svg", "cv_by_tau.svg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let svg = fs::read_to_string(dir.path().join("frontier.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn env_var_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (flag, env) = (dir.path().join("flag"), dir.path().join("env"));
    let out = Command::new(env!("CARGO_BIN_EXE_hedwel"))
        .args(["check", "--out"])
        .arg(&flag)
        .env("HEDONIC_WELFARE_OUT", &env)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env.join("check_report.json").is_file());
    assert!(!flag.exists());
}
