//! Case/seed orchestration: build, initialize, optimize, replay the load
//! scenario and export.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rclqr_core::microgrid::{
    build_case, calibrate_delta, initial_stabilizing_gain, riccati_gain, simulate_scenario, BenchmarkCase, Case, ScenarioTrace,
    STATES_PER_MG,
};
use rclqr_core::objective::{build_risk_constraint, risk_offset, MonteCarloEvaluator};
use rclqr_core::optimize::{
    estimate_local_constants, gdmax, gdmax_step_bound, moreau_envelope, sgdmax, sgdmax_parameters, InnerSettings,
    PhiModel, RunRecord,
};
use rclqr_core::rng::{purpose, stream};
use rclqr_core::StructuredGain;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModeConfig};
use crate::error::CliError;
use crate::export::{iterates_csv, scenario_csv, to_json, write_file};

/// Environment variable that replaces `run.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "RCLQR_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub case: u8,
    pub seed: u64,
    pub mode: ModeConfig,
    pub iterations: usize,
    pub converged: bool,
    /// Base cost of the last recorded iterate, as in `iterates.csv`.
    pub final_cost: f64,
    /// Closed-form base cost at the final gain.
    pub final_cost_exact: f64,
    pub final_phi: f64,
    pub final_lambda: Vec<f64>,
    /// Reformulated risk value at the final gain.
    pub constraint_value: f64,
    pub constraint_bound: f64,
    /// Raw conditional-variance risk at the final gain.
    pub raw_risk: f64,
    pub delta: f64,
    pub dare_cost: f64,
    pub optimality_gap: f64,
    pub spectral_radius: f64,
    pub peak_frequency: Vec<f64>,
    pub scenario_frequency_variance: Vec<f64>,
    pub stationary_frequency_variance: Vec<f64>,
    pub final_gain: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct TaskResult {
    pub summary: TaskSummary,
    pub run: RunRecord,
    pub scenario: ScenarioTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub case: u8,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimality_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<CliErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliErrorRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<TableRow>,
}

pub fn build(cfg: &ExperimentConfig, case: Case) -> Result<BenchmarkCase, CliError> {
    let topo = cfg.topology()?;
    let mut built = build_case(case, &topo, &cfg.mg_params(), &cfg.benchmark_settings()?)?;
    built.problem.numerics = cfg.numerics();
    Ok(built)
}

fn gain_rows(k: &StructuredGain) -> Vec<Vec<f64>> {
    let v = k.values();
    (0..v.nrows()).map(|i| (0..v.ncols()).map(|j| v[(i, j)]).collect()).collect()
}

/// One (case, seed) task, no file output.
pub fn run_task(cfg: &ExperimentConfig, case: Case, seed: u64) -> Result<TaskResult, CliError> {
    let built = build(cfg, case)?;
    let problem = &built.problem;
    let opt = cfg.optimizer.for_case(case);
    let core_cfg = opt.to_core();
    let index = case.index() as u64;
    let k0 = initial_stabilizing_gain(problem, &mut stream(seed, purpose::INITIALIZATION, index))?;
    let run = match opt.mode {
        ModeConfig::ModelBased => gdmax(problem, &k0, &core_cfg)?,
        ModeConfig::ModelFree => {
            let mut evaluator =
                MonteCarloEvaluator::new(problem, opt.mc_settings(), stream(seed, purpose::ROLLOUT, index));
            let mut rng = stream(seed, purpose::PERTURBATION, index);
            sgdmax(&mut evaluator, &k0, &core_cfg, &mut rng, Some(problem as &dyn PhiModel))?
        }
    };
    let gain = &run.final_gain;
    let moments = problem.moments(gain)?;
    let exact = problem.evaluation_from(&moments, gain);

    let q = &problem.base.q;
    let delta = cfg.benchmark.delta;
    let nodes = built.topology.nodes();
    let risk = build_risk_constraint(q, nodes, &problem.noise, delta)?;
    let constraint_value = risk.cost.stationary_cost(&moments, gain.values());
    let raw_risk = constraint_value + risk_offset(q, &problem.noise)?;

    let dare = riccati_gain(problem)?;
    let dare_cost = problem.base.stationary_cost(&problem.moments(&dare)?, dare.values());

    let loads = cfg.load_steps(&mut stream(seed, purpose::SCENARIO, 0));
    let scenario = simulate_scenario(&built.network, &built.topology, gain, cfg.scenario.window, &loads)?;
    let last = run.last();
    let summary = TaskSummary {
        case: case.index(),
        seed,
        mode: opt.mode,
        iterations: run.iterations,
        converged: run.converged,
        final_cost: last.cost,
        final_cost_exact: exact.base,
        final_phi: exact.phi(core_cfg.multiplier_cap),
        final_lambda: run.final_lambda.clone(),
        constraint_value,
        constraint_bound: risk.bound,
        raw_risk,
        delta,
        dare_cost,
        optimality_gap: exact.base / dare_cost - 1.0,
        spectral_radius: problem.spectral_radius(gain),
        peak_frequency: (0..nodes).map(|i| scenario.peak_frequency_deviation(i)).collect(),
        scenario_frequency_variance: (0..nodes).map(|i| scenario.frequency_variance(i)).collect(),
        stationary_frequency_variance: (0..nodes)
            .map(|i| moments.covariance[(STATES_PER_MG * i, STATES_PER_MG * i)])
            .collect(),
        final_gain: gain_rows(gain),
        warnings: run.warnings.clone(),
        config: cfg.clone(),
    };
    Ok(TaskResult { summary, run, scenario })
}

pub fn task_dir(out: &Path, case: u8, seed: u64) -> PathBuf {
    out.join(format!("case{case}")).join(format!("seed{seed}"))
}

pub fn export_task(out: &Path, result: &TaskResult) -> Result<(), CliError> {
    let dir = task_dir(out, result.summary.case, result.summary.seed);
    write_file(&dir.join("iterates.csv"), &iterates_csv(&result.run))?;
    for mg in 0..result.scenario.frequency.ncols() {
        write_file(&dir.join(format!("scenario_{}.csv", mg + 1)), &scenario_csv(&result.scenario, mg))?;
    }
    write_file(&dir.join("summary.json"), &to_json(&result.summary))
}

/// Output directory after the environment override.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.run.output_dir.clone(),
    }
}

/// Runs every requested (case, seed) pair on `jobs` workers and writes the
/// per-task files plus a fixed-order summary table. Per-task failures are
/// recorded in the table; IO failures abort.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ResultTable, CliError> {
    cfg.validate()?;
    let tasks: Vec<(Case, u64)> = cfg
        .cases()?
        .into_iter()
        .flat_map(|c| cfg.run.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let slots: Vec<Mutex<Option<Result<TableRow, CliError>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(case, seed)) = tasks.get(i) else { break };
        let row = match run_task(cfg, case, seed) {
            Ok(result) => export_task(out, &result).map(|_| TableRow {
                case: case.index(),
                seed,
                final_cost: Some(result.summary.final_cost),
                constraint_value: Some(result.summary.constraint_value),
                optimality_gap: Some(result.summary.optimality_gap),
                iterations: Some(result.summary.iterations),
                error: None,
            }),
            Err(e) => Ok(TableRow {
                case: case.index(),
                seed,
                final_cost: None,
                constraint_value: None,
                optimality_gap: None,
                iterations: None,
                error: Some(CliErrorRecord {
                    kind: e.kind.into(),
                    message: e.message,
                }),
            }),
        };
        *slots[i].lock().expect("result slot") = Some(row);
    };
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, tasks.len().max(1)) {
            scope.spawn(worker);
        }
    });
    let rows = slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every task ran"))
        .collect::<Result<Vec<_>, _>>()?;
    let table = ResultTable { rows };
    write_file(&out.join("summary.json"), &to_json(&table))?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub dare_cost: f64,
    pub trace_pw: f64,
    pub constraint_value: f64,
    pub constraint_bound: f64,
    pub raw_risk: f64,
    pub delta: f64,
    /// `delta` that would put the bound at `calibration_fraction` of the
    /// Riccati gain's reformulated risk.
    pub calibrated_delta: f64,
    /// Whether the Riccati gain violates the risk constraint.
    pub binding: bool,
    pub spectral_radius: f64,
    pub riccati_iterations: usize,
}

pub fn baseline(cfg: &ExperimentConfig) -> Result<BaselineReport, CliError> {
    let built = build(cfg, Case::Full)?;
    let p = &built.problem;
    let sys = &p.system;
    let dare = rclqr_core::numlin::solve_dare_with(sys.a(), sys.b(), &p.base.q, &p.base.r, &p.numerics.riccati)?;
    let k = StructuredGain::new(p.pattern.clone(), dare.gain.clone())?;
    let moments = p.moments(&k)?;
    let c = &p.constraints[0];
    let constraint_value = c.cost.stationary_cost(&moments, k.values());
    Ok(BaselineReport {
        dare_cost: p.base.stationary_cost(&moments, k.values()),
        trace_pw: rclqr_core::numlin::trace_product(&dare.p, &p.noise.statistics().covariance),
        constraint_value,
        constraint_bound: c.bound,
        raw_risk: constraint_value + risk_offset(&p.base.q, &p.noise)?,
        delta: cfg.benchmark.delta,
        calibrated_delta: calibrate_delta(
            &cfg.topology()?,
            &cfg.mg_params(),
            &cfg.benchmark_settings()?,
            cfg.benchmark.calibration_fraction,
        )?,
        binding: constraint_value > c.bound,
        spectral_radius: p.spectral_radius(&k),
        riccati_iterations: dare.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub case: u8,
    pub seed: u64,
    pub lipschitz: f64,
    pub smoothness: f64,
    pub radius: f64,
    pub mu0: f64,
    pub envelope_at_start: f64,
    pub gdmax_step_bound: f64,
    pub sgdmax_smoothing_radius: f64,
    pub sgdmax_step_size: f64,
    pub sgdmax_iterations: usize,
}

/// Local-constant probe at each requested case's initial gain for the first seed.
pub fn constants(cfg: &ExperimentConfig) -> Result<Vec<ConstantsReport>, CliError> {
    cfg.validate()?;
    let seed = cfg.run.seeds[0];
    let mut out = Vec::new();
    for case in cfg.cases()? {
        let built = build(cfg, case)?;
        let p = &built.problem;
        let opt = cfg.optimizer.for_case(case).to_core();
        let index = case.index() as u64;
        let k0 = initial_stabilizing_gain(p, &mut stream(seed, purpose::INITIALIZATION, index))?;
        let c = estimate_local_constants(
            p,
            &k0,
            cfg.run.probe.radius,
            cfg.run.probe.count,
            opt.multiplier_cap,
            &mut stream(seed, purpose::PROBE, index),
        )?;
        let inner = InnerSettings::for_constants(c.smoothness, c.mu0);
        let envelope = moreau_envelope(p, &k0, c.mu0, &inner, opt.multiplier_cap, opt.band())?.value;
        let s = sgdmax_parameters(&c, opt.tolerance, opt.alpha, opt.samples, envelope);
        out.push(ConstantsReport {
            case: case.index(),
            seed,
            lipschitz: c.lipschitz,
            smoothness: c.smoothness,
            radius: c.radius,
            mu0: c.mu0,
            envelope_at_start: envelope,
            gdmax_step_bound: gdmax_step_bound(opt.tolerance, &c),
            sgdmax_smoothing_radius: s.smoothing_radius,
            sgdmax_step_size: s.step_size,
            sgdmax_iterations: s.iterations,
        });
    }
    Ok(out)
}
