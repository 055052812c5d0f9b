use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfc")).args(args).env_remove("HFC_SEED").output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The single-plant study shortened to 50 s after the load step.
fn short_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(configs().join("strategy_study.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["duration"] = 200.0.into();
    let path = dir.join("short.json");
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_configs_parse_and_validate() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let sc = hfc_core::scenario::ScenarioConfig::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
        hfc_core::scenario::validate(&sc).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("run");
    let o = hfc(&["simulate", s(&cfg), "-o", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["timeseries.csv", "metrics.txt", "scenario.validated.json", "frequency.svg", "power.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("stable=true"), "{metrics}");
    assert!(metrics.contains("response_time_s="), "{metrics}");
    let header = fs::read_to_string(out.join("timeseries.csv")).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("t_s,f_hz,p_hpp_pu"));
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"schema_version": 1, "duration": -5, "dt": 0.001, "plants": []}"#).unwrap();
    let out = dir.path().join("out");
    let o = hfc(&["simulate", s(&bad), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("duration") && err.contains("plants"), "all violations listed: {err}");
    assert!(!out.exists());

    fs::write(&bad, "{ not json").unwrap();
    let o = hfc(&["design", s(&bad), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn delay_outside_declared_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    v["delays"] = serde_json::json!({"t_cd": {"kind": "constant", "t": 3.0}});
    fs::write(&cfg, v.to_string()).unwrap();
    let o = hfc(&["simulate", s(&cfg), "-o", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delays.t_cd"));
}

#[test]
fn infeasible_design_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    // No filter keeps the frequency-control path within 0.01 % of unity.
    v["design"] = serde_json::json!({"plant": {"eps_acc": 1e-4}});
    fs::write(&cfg, v.to_string()).unwrap();
    let o = hfc(&["design", s(&cfg), "-o", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn design_round_trips_into_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let d = dir.path().join("design");
    let o = hfc(&["design", s(&cfg), "-o", s(&d)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["design.json", "summary.txt", "q_selection.csv", "bode_g_pdy.csv", "bode_g_ny.csv", "robustness_delay.csv"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(hfc(&["simulate", s(&cfg), "-o", s(&a)]).status.success());
    let o = hfc(&["simulate", s(&cfg), "-o", s(&b), "--controllers", s(&d.join("design.json"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // Designing inline and loading the designed gains give the same run.
    assert_eq!(fs::read(a.join("timeseries.csv")).unwrap(), fs::read(b.join("timeseries.csv")).unwrap());

    let o = hfc(&["report", s(&d)]);
    assert!(o.status.success());
}

#[test]
fn runs_are_bit_identical_and_seed_override_changes_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut c = Command::new(env!("CARGO_BIN_EXE_hfc"));
        c.args(["simulate", s(&cfg), "-o", s(&out)]).env_remove("HFC_SEED");
        if let Some(seed) = seed {
            c.env("HFC_SEED", seed);
        }
        assert!(c.output().unwrap().status.success());
        fs::read(out.join("timeseries.csv")).unwrap()
    };
    assert_eq!(run("a", None), run("b", None));
    assert_eq!(run("c", Some("7")), run("d", Some("7")));
    assert_ne!(run("e", Some("7")), run("f", Some("8")));
}

#[test]
fn sweep_report_is_ordered_and_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let one = dir.path().join("one");
    let many = dir.path().join("many");
    let over = ["--over", "strategy=frob,no_coordination", "--over", "malfunction=0,50%"];
    let o = hfc(&[&["sweep", s(&cfg), "-o", s(&one), "--jobs", "1"][..], &over[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = hfc(&[&["sweep", s(&cfg), "-o", s(&many), "--jobs", "4"][..], &over[..]].concat());
    assert!(o.status.success());
    let report = fs::read_to_string(one.join("report.csv")).unwrap();
    assert_eq!(report, fs::read_to_string(many.join("report.csv")).unwrap());
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("scenario_id,strategy,mode,delay_s"));
    assert!(rows[1].starts_with("run_000,frob,") && rows[1].contains(",0.0,"));
    assert!(rows[2].starts_with("run_001,frob,") && rows[2].contains(",0.5,"));
    assert!(rows[3].starts_with("run_002,no_coordination,"));
    assert!(one.join("comparison.csv").exists());
}

#[test]
fn sweep_rejects_unknown_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("o");
    let o = hfc(&["sweep", s(&cfg), "--over", "colour=red", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn sweep_with_diverging_run_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    // Plant PI gain far beyond the stable range.
    v["controllers"] = serde_json::json!({
        "plant": {"kp": 400.0, "ki": 1.7, "q": {"n": 3, "omega_c": 50.0, "shape": "template"}},
        "hppc": {"kp": 1.0, "ki": 0.97, "q": {"n": 3, "omega_c": 50.0, "shape": "template"}}
    });
    fs::write(&cfg, v.to_string()).unwrap();
    let out = dir.path().join("o");
    let o = hfc(&["sweep", s(&cfg), "--over", "delay=0", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("divergence"), "{report}");
}

#[test]
fn noise_band_below_response_band_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    v["design"] = serde_json::json!({"plant": {"omega_noise": 0.5, "omega_resp": 1.0}});
    fs::write(&cfg, v.to_string()).unwrap();
    let out = dir.path().join("d");
    let o = hfc(&["design", s(&cfg), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise band"));
    assert!(!out.exists());
}

#[test]
fn diverging_simulation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    v["controllers"] = serde_json::json!({
        "plant": {"kp": 400.0, "ki": 1.7, "q": {"n": 3, "omega_c": 50.0, "shape": "template"}},
        "hppc": {"kp": 1.0, "ki": 0.97, "q": {"n": 3, "omega_c": 50.0, "shape": "template"}}
    });
    fs::write(&cfg, v.to_string()).unwrap();
    let o = hfc(&["simulate", s(&cfg), "-o", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
