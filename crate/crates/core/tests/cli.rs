use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trustfed"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("trustfed-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn list_scenarios_names_all_fixtures() {
    let out = bin().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in trustfed::scenario::bundled_names() {
        assert!(text.lines().any(|l| l == name), "{name} missing");
    }
}

#[test]
fn passing_run_exits_zero_and_writes_files() {
    let report = scratch("report.txt");
    let log = scratch("events.log");
    let status = bin()
        .args(["run", "crossborder_auth", "s4h_options_1_to_4", "--jobs", "2", "--report"])
        .arg(&report)
        .arg("--log")
        .arg(&log)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    assert!(fs::read_to_string(&report).unwrap().contains("result PASS"));
    assert!(fs::read_to_string(&log).unwrap().contains("grant_access"));
}

#[test]
fn strict_recognition_turns_fixture_red() {
    // PT and others published less than a year before the clock.
    let out = bin().args(["run", "crossborder_auth", "--strict-recognition"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_assertion_exits_one() {
    let path = scratch("fail.scn");
    fs::write(&path, "scenario clock=2019-06-01\nrecognition state=NL at=2019-06-01 expect=true\n").unwrap();
    let status = bin().arg("run").arg(&path).output().unwrap().status;
    assert_eq!(status.code(), Some(1));
}

#[test]
fn parse_and_config_errors_exit_two() {
    let path = scratch("bad.scn");
    fs::write(&path, "scenario\nauth sp=nobody citizen=nobody\n").unwrap();
    assert_eq!(bin().arg("run").arg(&path).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["run", "no-such-scenario"]).output().unwrap().status.code(), Some(2));
    let reg = scratch("bad-registry.txt");
    fs::write(&reg, "this is not a registry line\n").unwrap();
    assert_eq!(bin().arg("validate-registry").arg(&reg).output().unwrap().status.code(), Some(2));
    assert_eq!(
        bin().args(["run", "crossborder_auth", "--registry"]).arg(&reg).output().unwrap().status.code(),
        Some(2)
    );
}

#[test]
fn seed_override_changes_digest() {
    let digest = |seed: &str| {
        let out = bin().args(["run", "edelivery_lossy", "--seed", seed]).output().unwrap();
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        text.lines().find(|l| l.contains("digest=")).unwrap().to_string()
    };
    assert_eq!(digest("1"), digest("1"));
    assert_ne!(digest("1"), digest("2"));
}
