//! Experiment configuration. Every field has a default so a partial file
//! materializes into a complete one; unknown keys are rejected.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rclqr_core::microgrid::{BenchmarkSettings, Case, GridTopology, LoadStep, MgParams};
use rclqr_core::numlin::{LyapunovSettings, RiccatiMethod, RiccatiSettings};
use rclqr_core::objective::{McSettings, Numerics};
use rclqr_core::optimize::{Mode, OptimizerConfig};
use rclqr_core::rng::Stream;
use rclqr_core::system::Discretization;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkConfig,
    pub optimizer: OptimizerSection,
    pub run: RunConfig,
    pub scenario: ScenarioConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkConfig::default(),
            optimizer: OptimizerSection::default(),
            run: RunConfig::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            nodes: 6,
            edges: (1..6).map(|i| [i - 1, i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MgParamsConfig {
    pub damping: f64,
    pub droop: f64,
    pub kt: f64,
    pub tt: f64,
    pub kp: f64,
    pub tp: f64,
    pub ktie: f64,
}

impl Default for MgParamsConfig {
    fn default() -> Self {
        let p = MgParams::default();
        Self {
            damping: p.damping,
            droop: p.droop,
            kt: p.kt,
            tt: p.tt,
            kp: p.kp,
            tp: p.tp,
            ktie: p.ktie,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscretizationConfig {
    Euler,
    Zoh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    /// Independent zero-mean gaussian load change per MG, held over each step.
    Gaussian { load_variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiccatiMethodConfig {
    Doubling,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub lyapunov_tolerance: f64,
    pub lyapunov_max_iterations: usize,
    pub stability_margin: f64,
    pub riccati_method: RiccatiMethodConfig,
    pub riccati_tolerance: f64,
    pub riccati_max_iterations: usize,
    pub fd_step: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let l = LyapunovSettings::default();
        let r = RiccatiSettings::default();
        Self {
            lyapunov_tolerance: l.tolerance,
            lyapunov_max_iterations: l.max_iterations,
            stability_margin: l.stability_margin,
            riccati_method: RiccatiMethodConfig::Doubling,
            riccati_tolerance: r.tolerance,
            riccati_max_iterations: r.max_iterations,
            fd_step: Numerics::default().fd_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub topology: TopologyConfig,
    pub mg_params: MgParamsConfig,
    /// Per-MG 4×4 state weight, row-major.
    pub qa: Vec<Vec<f64>>,
    pub ra: Vec<Vec<f64>>,
    /// Risk tolerance on the raw conditional variance of the state cost.
    pub delta: f64,
    /// Fraction of the Riccati gain's risk value at which `baseline`
    /// reports a recalibrated `delta`.
    pub calibration_fraction: f64,
    pub dt: f64,
    pub discretization: DiscretizationConfig,
    pub tie_leakage: f64,
    pub noise: NoiseConfig,
    pub numerics: NumericsConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            topology: TopologyConfig::default(),
            mg_params: MgParamsConfig::default(),
            qa: vec![
                vec![1000.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
            ra: vec![vec![1.0]],
            delta: 1.4152438067365114e-15,
            calibration_fraction: 0.95,
            dt: 0.01,
            discretization: DiscretizationConfig::Zoh,
            tie_leakage: 0.05,
            noise: NoiseConfig::Gaussian { load_variance: 1e-4 },
            numerics: NumericsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    ModelBased,
    ModelFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub rollouts: usize,
    /// `null` discards the first tenth of each rollout.
    pub burn_in: Option<usize>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            horizon: 1000,
            rollouts: 1,
            burn_in: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseOptimizerConfig {
    pub mode: ModeConfig,
    pub step_size: f64,
    pub tolerance: f64,
    pub multiplier_cap: f64,
    pub smoothing_radius: f64,
    pub samples: usize,
    pub max_iterations: usize,
    pub alpha: f64,
    /// `null` uses `tolerance`.
    pub active_band: Option<f64>,
    pub max_halvings: usize,
    pub rollout: RolloutConfig,
}

impl Default for CaseOptimizerConfig {
    fn default() -> Self {
        Self {
            mode: ModeConfig::ModelBased,
            step_size: 1e4,
            tolerance: 1e-12,
            multiplier_cap: 1e12,
            smoothing_radius: 1.0,
            samples: 100,
            max_iterations: 2000,
            alpha: 40.0,
            active_band: Some(1.5e-18),
            max_halvings: 30,
            rollout: RolloutConfig::default(),
        }
    }
}

impl CaseOptimizerConfig {
    pub fn to_core(&self) -> OptimizerConfig {
        OptimizerConfig {
            step_size: self.step_size,
            tolerance: self.tolerance,
            multiplier_cap: self.multiplier_cap,
            smoothing_radius: self.smoothing_radius,
            samples: self.samples,
            max_iterations: self.max_iterations,
            alpha: self.alpha,
            mode: match self.mode {
                ModeConfig::ModelBased => Mode::ModelBased,
                ModeConfig::ModelFree => Mode::ModelFree,
            },
            active_band: self.active_band,
            max_halvings: self.max_halvings,
        }
    }

    pub fn mc_settings(&self) -> McSettings {
        McSettings {
            horizon: self.rollout.horizon,
            rollouts: self.rollout.rollouts,
            burn_in: self.rollout.burn_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(rename = "1")]
    pub case1: CaseOptimizerConfig,
    #[serde(rename = "2")]
    pub case2: CaseOptimizerConfig,
    #[serde(rename = "3")]
    pub case3: CaseOptimizerConfig,
}

impl OptimizerSection {
    pub fn for_case(&self, case: Case) -> &CaseOptimizerConfig {
        match case {
            Case::Structured => &self.case1,
            Case::Full => &self.case2,
            Case::Unconstrained => &self.case3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub radius: f64,
    pub count: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { radius: 0.1, count: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cases: Vec<u8>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cases: vec![1, 2, 3],
            seeds: vec![0],
            output_dir: PathBuf::from("results"),
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadStepConfig {
    /// 1-based MG index.
    pub mg: usize,
    pub time: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadsConfig {
    Fixed { steps: Vec<LoadStepConfig> },
    /// `per_mg` steps per MG at uniform times in the window, drawn per seed.
    Random { per_mg: usize, magnitude_range: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Window length in seconds.
    pub window: f64,
    pub loads: LoadsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let times = [0.3, 1.2, 5.0, 8.0, 12.0, 16.0];
        let magnitudes = [0.03, -0.02, 0.04, 0.025, -0.035, 0.02];
        Self {
            window: 20.0,
            loads: LoadsConfig::Fixed {
                steps: (0..6)
                    .map(|i| LoadStepConfig {
                        mg: i + 1,
                        time: times[i],
                        magnitude: magnitudes[i],
                    })
                    .collect(),
            },
        }
    }
}

fn matrix(rows: &[Vec<f64>], name: &str, shape: (usize, usize)) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(CliError::config(format!("{name} must be {}x{}", shape.0, shape.1)));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.topology()?;
        self.mg_params().validate()?;
        self.benchmark_settings()?;
        for case in self.cases()? {
            let o = self.optimizer.for_case(case);
            o.to_core().validate()?;
            if o.mode == ModeConfig::ModelFree && (o.rollout.horizon == 0 || o.rollout.rollouts == 0) {
                return Err(CliError::config(format!("case {}: rollouts need a positive horizon and count", case.index())));
            }
        }
        if self.run.seeds.is_empty() {
            return Err(CliError::config("run.seeds must not be empty"));
        }
        if !(self.run.probe.radius > 0.0) || self.run.probe.count == 0 {
            return Err(CliError::config("run.probe needs a positive radius and count"));
        }
        if !(self.scenario.window > 0.0) || !self.scenario.window.is_finite() {
            return Err(CliError::config("scenario.window must be positive"));
        }
        let nodes = self.benchmark.topology.nodes;
        match &self.scenario.loads {
            LoadsConfig::Fixed { steps } => {
                for s in steps {
                    if s.mg == 0 || s.mg > nodes || !(s.time >= 0.0) || !s.magnitude.is_finite() {
                        return Err(CliError::config(format!("invalid scenario step {s:?}")));
                    }
                }
            }
            LoadsConfig::Random { magnitude_range, .. } => {
                if !(magnitude_range[0] <= magnitude_range[1]) {
                    return Err(CliError::config("scenario magnitude_range must be ordered"));
                }
            }
        }
        Ok(())
    }

    pub fn cases(&self) -> Result<Vec<Case>, CliError> {
        if self.run.cases.is_empty() {
            return Err(CliError::config("run.cases must not be empty"));
        }
        self.run.cases.iter().map(|&c| Case::from_index(c).map_err(CliError::from)).collect()
    }

    pub fn topology(&self) -> Result<GridTopology, CliError> {
        let t = &self.benchmark.topology;
        Ok(GridTopology::new(t.nodes, t.edges.iter().map(|e| (e[0], e[1])).collect())?)
    }

    pub fn mg_params(&self) -> MgParams {
        let p = &self.benchmark.mg_params;
        MgParams {
            damping: p.damping,
            droop: p.droop,
            kt: p.kt,
            tt: p.tt,
            kp: p.kp,
            tp: p.tp,
            ktie: p.ktie,
        }
    }

    pub fn benchmark_settings(&self) -> Result<BenchmarkSettings, CliError> {
        let b = &self.benchmark;
        let NoiseConfig::Gaussian { load_variance } = b.noise;
        if !(b.dt > 0.0) || !b.dt.is_finite() {
            return Err(CliError::config("benchmark.dt must be positive"));
        }
        if !b.delta.is_finite() {
            return Err(CliError::config("benchmark.delta must be finite"));
        }
        Ok(BenchmarkSettings {
            qa: matrix(&b.qa, "benchmark.qa", (4, 4))?,
            ra: matrix(&b.ra, "benchmark.ra", (1, 1))?,
            load_variance,
            delta: b.delta,
            dt: b.dt,
            method: match b.discretization {
                DiscretizationConfig::Euler => Discretization::Euler,
                DiscretizationConfig::Zoh => Discretization::ZeroOrderHold,
            },
            tie_leakage: b.tie_leakage,
        })
    }

    pub fn numerics(&self) -> Numerics {
        let n = &self.benchmark.numerics;
        Numerics {
            lyapunov: LyapunovSettings {
                tolerance: n.lyapunov_tolerance,
                max_iterations: n.lyapunov_max_iterations,
                stability_margin: n.stability_margin,
            },
            riccati: RiccatiSettings {
                method: match n.riccati_method {
                    RiccatiMethodConfig::Doubling => RiccatiMethod::Doubling,
                    RiccatiMethodConfig::FixedPoint => RiccatiMethod::FixedPoint,
                },
                tolerance: n.riccati_tolerance,
                max_iterations: n.riccati_max_iterations,
            },
            fd_step: n.fd_step,
        }
    }

    /// Fixed steps as given; random steps drawn from `rng`.
    pub fn load_steps(&self, rng: &mut Stream) -> Vec<LoadStep> {
        match &self.scenario.loads {
            LoadsConfig::Fixed { steps } => steps
                .iter()
                .map(|s| LoadStep {
                    mg: s.mg - 1,
                    time: s.time,
                    magnitude: s.magnitude,
                })
                .collect(),
            LoadsConfig::Random { per_mg, magnitude_range } => rclqr_core::microgrid::random_load_steps(
                self.benchmark.topology.nodes,
                *per_mg,
                self.scenario.window,
                (magnitude_range[0], magnitude_range[1]),
                rng,
            ),
        }
    }
}
