mod common;

use std::path::Path;
use std::process::Command;

use secure_game::control;
use secure_game::harness::{self, config::AlgorithmChoice, experiment, output, HarnessError, Scenario};
use serde_json::{json, Value};

fn k6_json() -> Value {
    let text = std::fs::read_to_string(common::fixture("batch_reactor_k6.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn small(mut v: Value) -> Value {
    v["rollouts"] = json!(400);
    v["kernel"]["trials"] = json!(400);
    v
}

fn write_json(dir: &Path, name: &str, v: &Value) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

#[test]
fn main_fixture_loads() {
    let cfg = harness::load_scenario(&common::fixture("batch_reactor.json")).unwrap();
    assert_eq!(cfg.ts, 1.0);
    assert_eq!(cfg.k, 50);
    assert_eq!(cfg.replay_steps(), vec![10, 20, 30, 40]);
    assert!(cfg.t >= 40);
    let (a, b, c) = control::batch_reactor_continuous();
    let (ad, bd) = control::discretize_zoh(&a, &b, 1.0).unwrap();
    assert_eq!(cfg.plant.a, ad);
    assert_eq!(cfg.plant.b, bd);
    assert_eq!(cfg.plant.c, c);
    let grid = harness::attack_grid(&cfg);
    assert_eq!(grid.len(), 5);
    assert_eq!(harness::subsystems(&cfg).unwrap().len(), 2);
}

#[test]
fn missing_sampling_period_is_named() {
    let mut v = k6_json();
    v.as_object_mut().unwrap().remove("Ts");
    let err = harness::parse_scenario(&v.to_string()).unwrap_err();
    match &err {
        HarnessError::Validation(msgs) => assert!(msgs.iter().any(|m| m.contains("\"Ts\"")), "{msgs:?}"),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn unknown_key_is_rejected() {
    let mut v = k6_json();
    v["horizon"] = json!(5);
    let err = harness::parse_scenario(&v.to_string()).unwrap_err();
    assert!(matches!(err, HarnessError::Parse { .. }), "{err}");
    assert!(err.to_string().contains("horizon"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn parse_error_reports_line() {
    let text = "{\n  \"Ts\": 0.1,\n  \"K\": 6,\n  \"alpha\": ,\n}\n";
    match harness::parse_scenario(text).unwrap_err() {
        HarnessError::Parse { line, .. } => assert_eq!(line, 4),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn defaults_and_invalid_values() {
    let cfg = harness::parse_scenario(&k6_json().to_string()).unwrap();
    assert_eq!(cfg.replay_steps(), vec![10, 20, 30, 40]);
    assert_eq!(cfg.t, 40);
    assert_eq!(cfg.algorithm, AlgorithmChoice::Both);

    let mut v = k6_json();
    v["alpha"] = json!(1.5);
    v["K"] = json!(0);
    match harness::parse_scenario(&v.to_string()).unwrap_err() {
        HarnessError::Validation(msgs) => assert!(msgs.len() >= 2, "{msgs:?}"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn schedule_classification() {
    let cfg = harness::parse_scenario(&k6_json().to_string()).unwrap();
    // 2.5 s lies halfway between the 2 s and 3 s grid points
    for k in 0..cfg.k {
        assert_eq!(
            harness::scheduled_attack(&cfg, k),
            secure_game::sim::AttackAction::Replay { delay: 25 }
        );
        assert_eq!(harness::classified_attack(&cfg, k), 2);
    }
    let mut v = k6_json();
    v["attack_schedule"] = json!({"kind": "replay", "onset_s": 0.3, "window_s": 3.9});
    let cfg = harness::parse_scenario(&v.to_string()).unwrap();
    assert_eq!(harness::classified_attack(&cfg, 2), 0);
    assert_eq!(harness::classified_attack(&cfg, 3), 4);
}

#[test]
fn attack_free_scenario_prefers_plain_controller() {
    let mut v = small(k6_json());
    v["attack_schedule"] = json!({"kind": "none"});
    v["rollouts"] = json!(2000);
    let cfg = harness::parse_scenario(&v.to_string()).unwrap();
    let scn = Scenario::build(&cfg).unwrap();
    let report = harness::run_comparison(&scn, AlgorithmChoice::Mh, cfg.budget).unwrap();
    assert!(report.suboptimal.is_none());
    let d = report.paired(experiment::ALWAYS_C1, experiment::ALWAYS_C2).unwrap();
    assert!(d.mean + 1.96 * d.se < 0.0, "c1 − c2 = {} ± {}", d.mean, d.se);
    for p in &report.policies {
        assert_eq!(p.mc_cost.len(), cfg.k);
        assert_eq!(p.mode_prob.len(), cfg.k + 1);
        assert!(p.mode_prob.iter().all(|d| d[0] == 0.0));
    }
}

#[test]
fn plot_data_headers() {
    let cfg = harness::parse_scenario(&small(k6_json()).to_string()).unwrap();
    let scn = Scenario::build(&cfg).unwrap();
    let report = harness::run_comparison(&scn, AlgorithmChoice::Both, cfg.budget).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = harness::emit_plot_data(&report, dir.path()).unwrap();
    assert_eq!(written.len(), 5);
    let first_line = |name: &str| {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(first_line("cost_series.csv"), "k,policy,expected_cost");
    assert_eq!(first_line("mode_prob.csv"), "k,policy,p_safe,p_nodetect,p_false");
    assert_eq!(
        first_line("strategy_series.csv"),
        "policy,stage,mode,player,action_index,probability"
    );
    let rows = std::fs::read_to_string(dir.path().join("cost_series.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 4 * cfg.k);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["K"], json!(6));
}

#[test]
fn single_horizon_scaling_row() {
    let cfg = harness::parse_scenario(&small(k6_json()).to_string()).unwrap();
    let scn = Scenario::build(&cfg).unwrap();
    let rows = harness::run_scaling_benchmark(&scn, &[20], &[], 1, cfg.budget).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].k, 20);
    assert!(rows[0].wall_time_alg1_s.is_none());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scaling.csv");
    output::write_scaling_csv(&rows, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "K,wall_time_alg2_s,wall_time_alg1_s");
    assert!(lines[1].starts_with("20,") && lines[1].ends_with(','));
    assert!(harness::run_scaling_benchmark(&scn, &[5, 3], &[], 1, cfg.budget).is_err());
}

#[test]
fn kernel_cache_is_written_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small(k6_json());
    v["kernel"]["cache"] = json!("kernel.csv");
    let path = write_json(dir.path(), "scn.json", &v);
    let cfg = harness::load_scenario(&path).unwrap();
    let first = Scenario::build(&cfg).unwrap();
    assert!(dir.path().join("kernel.csv").exists());
    let mut other = cfg.clone();
    other.seed += 1;
    let second = Scenario::build(&other).unwrap();
    assert_eq!(first.model.kernel, second.model.kernel);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_secure-game"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let matrix = dir.path().join("pennies.csv");
    std::fs::write(&matrix, "1,-1\n-1,1\n").unwrap();
    let out = cli().arg("solve").arg(&matrix).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("value 0.000000000000"), "{stdout}");
    assert!(stdout.contains("attacker 0.5000000000,0.5000000000"), "{stdout}");

    let mut bad = k6_json();
    bad.as_object_mut().unwrap().remove("Ts");
    let bad_path = write_json(dir.path(), "bad.json", &bad);
    let out = cli().args(["compare", "--config"]).arg(&bad_path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Ts"));

    let mut long = small(k6_json());
    long["K"] = json!(50);
    let long_path = write_json(dir.path(), "long.json", &long);
    let out = cli()
        .args(["compare", "--alg", "subopt", "--config"])
        .arg(&long_path)
        .arg("--out")
        .arg(dir.path().join("long"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let short_path = write_json(dir.path(), "short.json", &small(k6_json()));
    let out = cli()
        .args(["compare", "--alg", "subopt", "--budget", "10", "--config"])
        .arg(&short_path)
        .arg("--out")
        .arg(dir.path().join("short"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = cli()
        .args(["kernel", "--config"])
        .arg(&short_path)
        .arg("--out")
        .arg(dir.path().join("k"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("k").join("kernel.csv").exists());
}
