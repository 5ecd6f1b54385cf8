use std::path::Path;
use std::process::Command;

use rclqr::config::{LoadStepConfig, LoadsConfig, ModeConfig};
use rclqr::experiment::{run_experiment, run_task, task_dir, TaskSummary, OUTPUT_DIR_ENV};
use rclqr::export::to_json;
use rclqr::ExperimentConfig;
use rclqr_core::microgrid::Case;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.benchmark.topology.nodes = 2;
    cfg.benchmark.topology.edges = vec![[0, 1]];
    cfg.scenario.loads = LoadsConfig::Fixed {
        steps: vec![LoadStepConfig { mg: 1, time: 5.0, magnitude: 0.03 }],
    };
    for o in [&mut cfg.optimizer.case1, &mut cfg.optimizer.case2, &mut cfg.optimizer.case3] {
        o.max_iterations = 20;
    }
    cfg
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rclqr"))
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(ExperimentConfig::from_json(r#"{"run": {"cases": [1], "bogus": 1}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"extra": {}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"optimizer": {"4": {}}}"#).is_err());
}

#[test]
fn partial_config_materializes_defaults() {
    let cfg = ExperimentConfig::from_json(r#"{"run": {"seeds": [3, 4]}}"#).unwrap();
    let mut expected = ExperimentConfig::default();
    expected.run.seeds = vec![3, 4];
    assert_eq!(cfg, expected);
    let echoed = ExperimentConfig::from_json(&to_json(&cfg)).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn invalid_values_are_rejected() {
    assert!(ExperimentConfig::from_json(r#"{"run": {"cases": [4]}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"benchmark": {"dt": -1.0}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"benchmark": {"qa": [[1.0]]}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"scenario": {"loads": {"kind": "fixed", "steps": [{"mg": 9, "time": 1.0, "magnitude": 0.1}]}}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"optimizer": {"1": {"step_size": 0.0}}}"#).is_err());
}

#[test]
fn zero_iterations_give_one_row() {
    let mut cfg = small_config();
    cfg.optimizer.case2.max_iterations = 0;
    let r = run_task(&cfg, Case::Full, 0).unwrap();
    let csv = rclqr::export::iterates_csv(&r.run);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.ends_with('\n') && !csv.contains('\r'));

    cfg.optimizer.case2.mode = ModeConfig::ModelFree;
    cfg.optimizer.case2.rollout.horizon = 200;
    let r = run_task(&cfg, Case::Full, 0).unwrap();
    assert_eq!(rclqr::export::iterates_csv(&r.run).lines().count(), 2);
}

#[test]
fn summary_echo_and_last_row_agree() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path(), 1).unwrap();
    let task = task_dir(dir.path(), 1, 0);
    let summary: TaskSummary = serde_json::from_str(&read(&task.join("summary.json"))).unwrap();
    let echoed = ExperimentConfig::from_json(&serde_json::to_string(&summary.config).unwrap()).unwrap();
    assert_eq!(echoed, cfg);
    let csv = read(&task.join("iterates.csv"));
    let last = csv.lines().last().unwrap();
    let cost: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(cost, summary.final_cost);
    assert_eq!(summary.iterations + 1, csv.lines().count() - 1);
}

#[test]
fn unconstrained_case_reaches_the_riccati_cost() {
    let mut cfg = small_config();
    cfg.optimizer.case3.tolerance = 1e-12;
    let r = run_task(&cfg, Case::Unconstrained, 0).unwrap();
    assert!(r.summary.final_cost_exact <= 1.01 * r.summary.dare_cost);
}

#[test]
fn zero_loads_give_zero_trajectories() {
    let mut cfg = small_config();
    cfg.scenario.loads = LoadsConfig::Fixed { steps: vec![] };
    let r = run_task(&cfg, Case::Unconstrained, 0).unwrap();
    assert!(r.scenario.frequency.iter().chain(r.scenario.tie_flow.iter()).all(|&v| v == 0.0));
}

#[test]
fn single_line_flows_are_antisymmetric_and_causal() {
    let cfg = small_config();
    let r = run_task(&cfg, Case::Unconstrained, 0).unwrap();
    let t = &r.scenario;
    let scale = t.tie_flow.amax();
    assert!(scale > 0.0);
    for k in 0..t.times.len() {
        assert!((t.tie_flow[(k, 0)] + t.tie_flow[(k, 1)]).abs() <= 1e-9 * scale);
        if t.times[k] < 5.0 {
            assert_eq!(t.frequency[(k, 0)], 0.0);
            assert_eq!(t.frequency[(k, 1)], 0.0);
        }
    }
}

#[test]
fn random_scenarios_differ_by_seed() {
    let mut cfg = small_config();
    cfg.run.cases = vec![3];
    cfg.run.seeds = vec![0, 1];
    cfg.scenario.loads = LoadsConfig::Random { per_mg: 1, magnitude_range: [-0.04, 0.04] };
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path(), 2).unwrap();
    let a = read(&task_dir(dir.path(), 3, 0).join("scenario_1.csv"));
    let b = read(&task_dir(dir.path(), 3, 1).join("scenario_1.csv"));
    assert_ne!(a, b);
    assert_eq!(a.lines().next(), b.lines().next());
    assert_eq!(a.lines().nth(1), b.lines().nth(1));
}

#[test]
fn parallel_and_serial_runs_match() {
    let mut cfg = small_config();
    cfg.run.seeds = vec![0, 1];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, a.path(), 1).unwrap();
    run_experiment(&cfg, b.path(), 4).unwrap();
    for case in 1..=3 {
        for seed in 0..2 {
            for file in ["iterates.csv", "summary.json", "scenario_1.csv", "scenario_2.csv"] {
                let pa = task_dir(a.path(), case, seed).join(file);
                let pb = task_dir(b.path(), case, seed).join(file);
                assert_eq!(read(&pa), read(&pb), "{}", pa.display());
            }
        }
    }
    assert_eq!(read(&a.path().join("summary.json")), read(&b.path().join("summary.json")));
}

#[test]
fn binary_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"nope": 1}"#).unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "config");

    let out = bin().arg("run").arg(dir.path().join("missing.json")).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "io");
}

#[test]
fn binary_honours_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.run.cases = vec![3];
    cfg.run.output_dir = dir.path().join("ignored");
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, to_json(&cfg)).unwrap();
    let target = dir.path().join("override");
    let out = bin().arg("run").arg(&path).env(OUTPUT_DIR_ENV, &target).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(task_dir(&target, 3, 0).join("summary.json").exists());
    assert!(!dir.path().join("ignored").exists());

    let out = bin().arg("baseline").arg(&path).output().unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["dare_cost"].as_f64().unwrap() > 0.0);
}
