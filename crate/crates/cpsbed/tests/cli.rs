use std::fs;
use std::path::Path;
use std::process::Command;

use cpsbed::config::{emit, parse_str};
use cpsbed::manifest::{data_files, MANIFEST};
use cpsbed::pipeline::run_scenario;
use cpsbed::validate::validate_dir;
use cpsbed_core::scenario::ScenarioConfig;

const THREE_ATTACKS: &str = r#"
duration = 30.0
seed = 7

[[attack]]
id = 1
kind = "INTEGRITY_SCA"
injection_point = "SENSOR_TO_CONTROLLER"
action = "MODIFY"
waveform = { kind = "STEP", magnitude = 0.05 }
window = { start = 3.0, end = 5.0 }

[[attack]]
id = 2
kind = "INTEGRITY_SCA"
injection_point = "ACTUATOR_CMD"
action = "MODIFY"
waveform = { kind = "PULSE", magnitude = 0.2, duration = 0.5 }
window = { start = 10.0, end = 12.0 }

[[attack]]
id = 3
kind = "ZERO_DAY_VARIANT"
injection_point = "SENSOR_TO_CONTROLLER"
action = "REPLAY"
waveform = { kind = "STEP" }
window = { start = 25.0, end = 27.0 }
zero_day = true
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpsbed"))
}

fn ids_in(dir: &Path, view: &str) -> std::collections::BTreeSet<u32> {
    let text = fs::read_to_string(dir.join(view).join("physical.csv")).unwrap();
    text.lines().skip(1).map(|l| l.split(',').nth(5).unwrap().parse().unwrap()).filter(|id| *id != 0).collect()
}

#[test]
fn baseline_layout_and_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("base");
    let m = run_scenario(&ScenarioConfig::minimal(10.0), &out).unwrap();
    assert!(m.attacks.is_empty());
    assert_eq!(m.balance.all.attack_fraction, 0.0);
    for f in data_files().iter().map(String::as_str).chain([MANIFEST]) {
        assert!(out.join(f).is_file(), "{} missing", f);
    }
    let rep = validate_dir(&out).unwrap();
    assert!(rep.ok(), "{}", rep.render());
    assert!(!tmp.path().join("base.partial").exists());
}

#[test]
fn zero_day_goes_to_test_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_str(THREE_ATTACKS).unwrap();
    let m = run_scenario(&cfg, tmp.path()).unwrap();
    assert_eq!(m.zero_day_ids, vec![3]);
    assert_eq!(ids_in(tmp.path(), "train"), [1, 2].into());
    assert_eq!(ids_in(tmp.path(), "test"), [3].into());
    assert!(m.balance.test.per_label.keys().any(|k| k.starts_with("3/")));
    let rep = validate_dir(tmp.path()).unwrap();
    assert!(rep.ok(), "{}", rep.render());
}

#[test]
fn one_minute_of_attack_is_a_tenth() {
    let mut cfg = ScenarioConfig::minimal(10.0);
    cfg.attacks = parse_str(THREE_ATTACKS).unwrap().attacks[..1].to_vec();
    cfg.attacks[0].window = cpsbed_core::attack::Window::new(4.0, 5.0);
    let tmp = tempfile::tempdir().unwrap();
    let m = run_scenario(&cfg, tmp.path()).unwrap();
    assert!((m.balance.all.attack_fraction - 0.1).abs() <= 1.0 / 100.0 + 1e-12, "{}", m.balance.all.attack_fraction);
}

#[test]
fn rerun_gives_identical_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_str(THREE_ATTACKS).unwrap();
    let a = run_scenario(&cfg, &tmp.path().join("a")).unwrap();
    let b = run_scenario(&cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(a.files, b.files);
    assert_eq!(
        fs::read(tmp.path().join("a").join(MANIFEST)).unwrap(),
        fs::read(tmp.path().join("b").join(MANIFEST)).unwrap()
    );
    let mut other = cfg.clone();
    other.seed = 8;
    other.plant.noise_std = 0.001;
    let c = run_scenario(&other, &tmp.path().join("c")).unwrap();
    assert_ne!(a.files["truth.csv"], c.files["truth.csv"]);
}

#[test]
fn corrupted_label_is_located() {
    let tmp = tempfile::tempdir().unwrap();
    run_scenario(&ScenarioConfig::minimal(10.0), tmp.path()).unwrap();
    let p = tmp.path().join("train/physical.csv");
    let text = fs::read_to_string(&p).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[4] = lines[4].replace(",NORMAL", ",");
    fs::write(&p, lines.join("\n") + "\n").unwrap();
    let rep = validate_dir(tmp.path()).unwrap();
    assert!(rep.failed("labels"), "{}", rep.render());
    assert!(rep.failed("checksums"));
    assert!(rep.render().contains("line 5"), "{}", rep.render());
}

#[test]
fn shuffled_capture_is_not_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    run_scenario(&ScenarioConfig::minimal(10.0), tmp.path()).unwrap();
    let p = tmp.path().join("train/capture.jsonl");
    let text = fs::read_to_string(&p).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.reverse();
    fs::write(&p, lines.join("\n") + "\n").unwrap();
    let rep = validate_dir(tmp.path()).unwrap();
    assert!(rep.failed("monotonicity"), "{}", rep.render());
}

#[test]
fn layout_mismatch_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    run_scenario(&ScenarioConfig::minimal(2.0), tmp.path()).unwrap();
    fs::remove_file(tmp.path().join("test/host.jsonl")).unwrap();
    let err = validate_dir(tmp.path()).unwrap_err().to_string();
    assert!(err.contains("test/host.jsonl"), "{}", err);
}

#[test]
fn config_round_trips_through_the_manifest() {
    let cfg = parse_str(THREE_ATTACKS).unwrap();
    assert_eq!(parse_str(&emit(&cfg)).unwrap(), cfg);
    let text = include_str!("../../../scenarios/quality60.toml");
    let q = parse_str(text).unwrap();
    assert_eq!(parse_str(&emit(&q)).unwrap(), q);
}

#[test]
fn failed_run_leaves_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::minimal(10.0);
    let mut zd = parse_str(THREE_ATTACKS).unwrap().attacks[2].clone();
    zd.window = cpsbed_core::attack::Window::new(1.0, 2.0);
    cfg.attacks = vec![zd];
    let out = tmp.path().join("ds");
    let err = run_scenario(&cfg, &out).unwrap_err();
    assert!(format!("{:#}", err).contains("zero-day"), "{:#}", err);
    assert!(!out.exists());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn refuses_to_overwrite_foreign_directories() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("notes.txt"), "keep").unwrap();
    assert!(run_scenario(&ScenarioConfig::minimal(2.0), tmp.path()).is_err());
    assert_eq!(fs::read_to_string(tmp.path().join("notes.txt")).unwrap(), "keep");
}

#[test]
fn binary_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("three.toml");
    fs::write(&scen, THREE_ATTACKS).unwrap();
    let out = tmp.path().join("out");
    let st = bin().args(["run"]).arg(&scen).arg("--out").arg(&out).args(["--seed", "11"]).status().unwrap();
    assert!(st.success());
    let v = bin().arg("validate").arg(&out).output().unwrap();
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stdout));
    let r = bin().arg("report").arg(&out).output().unwrap();
    assert!(String::from_utf8_lossy(&r.stdout).contains("seed 11"));

    let c = bin().arg("classify").arg(&out).output().unwrap();
    assert!(c.status.success());
    let csv = String::from_utf8(c.stdout).unwrap();
    assert!(csv.starts_with("view,t_start,t_end,verdict,attack_id\n"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 5));

    let m = bin().arg("ids-matrix").output().unwrap();
    assert_eq!(
        String::from_utf8(m.stdout).unwrap(),
        "true_state,PHY,PHY_NET,PHY_NET_HOST\nnormal,TN,TN,TN\nattack,FN,FN,TP\n"
    );

    let grid = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/grid.toml");
    let p = bin().args(["plan", grid, "--limit", "4"]).output().unwrap();
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    let plan = String::from_utf8(p.stdout).unwrap();
    assert_eq!(plan.matches("[[attack]]").count(), 4, "{}", plan);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "duration = 5.0\nbogus = 1\n").unwrap();
    let e = bin().arg("run").arg(&bad).arg("--out").arg(tmp.path().join("x")).output().unwrap();
    assert!(!e.status.success());
    assert!(String::from_utf8_lossy(&e.stderr).contains("bogus"));
}

#[test]
fn batch_mode_isolates_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.toml");
    let b = tmp.path().join("b.toml");
    fs::write(&a, "duration = 3.0\n").unwrap();
    fs::write(&b, "duration = 4.0\nseed = 2\n").unwrap();
    let out = tmp.path().join("out");
    let st = bin().arg("run").arg(&a).arg(&b).arg("--out").arg(&out).args(["--jobs", "2"]).status().unwrap();
    assert!(st.success());
    assert!(validate_dir(&out.join("a")).unwrap().ok());
    assert!(validate_dir(&out.join("b")).unwrap().ok());
}
