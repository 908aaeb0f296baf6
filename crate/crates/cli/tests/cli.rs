use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nakagami(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nakagami"))
        .args(args)
        .env("NAKAGAMI_THREADS", "1")
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
seed = 3

[phantom]
count = 2
width = 32
height = 32

[estimators]
moment = [7]
mle_exact = []
wmc = [5, 7]
"#;

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn compare_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = nakagami(&["compare", "--config", &cfg, "--output", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("moment-7"));
    assert!(stdout.contains("score"));
    assert!(out.join("evaluation/table.csv").exists());
    assert!(out.join("manifest.json").exists());
    assert!(out.join("maps/img000/wmc-5-7.pfm").exists());
}

#[test]
fn stages_run_separately_and_match_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for stage in ["simulate", "estimate", "evaluate"] {
        let o = nakagami(&[stage, "-c", &cfg, "-o", a.to_str().unwrap()]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(nakagami(&["compare", "-c", &cfg, "-o", b.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(nakagami(&["simulate", "-c", &cfg, "-o", a.to_str().unwrap()]).status.success());
    assert!(nakagami(&["simulate", "-c", &cfg, "-o", b.to_str().unwrap(), "--seed", "4"]).status.success());
    assert_ne!(
        fs::read(a.join("envelopes/img000.pfm")).unwrap(),
        fs::read(b.join("envelopes/img000.pfm")).unwrap()
    );
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write_config(dir.path(), "[phantom]\nomega = -1.0\n");
    assert_eq!(nakagami(&["simulate", "-c", &bad, "-o", out.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(nakagami(&["simulate", "-c", missing.to_str().unwrap(), "-o", out.to_str().unwrap()]).status.code(), Some(2));
    // no output directory anywhere
    assert_eq!(nakagami(&["simulate"]).status.code(), Some(2));
}

#[test]
fn missing_artifacts_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert!(nakagami(&["simulate", "-c", &cfg, "-o", out.to_str().unwrap()]).status.success());
    let o = nakagami(&["evaluate", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("moment-7"));
}

#[test]
fn corrupt_envelope_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert!(nakagami(&["simulate", "-c", &cfg, "-o", out.to_str().unwrap()]).status.success());
    fs::write(out.join("envelopes/img001.pfm"), b"P5\n").unwrap();
    assert_eq!(nakagami(&["estimate", "-c", &cfg, "-o", out.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["example.toml", "digits.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = root.join(name);
        // parses, then evaluate finds an empty output directory
        let o = nakagami(&["evaluate", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
