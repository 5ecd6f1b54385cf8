//! Networked-microgrid load-frequency-control benchmark.
//!
//! Per-MG state `[Δf, ΔP_G, ΔP_tie, ∫ACE]`, input the AGC set-point `ΔP_C`,
//! disturbance the local load change.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gains::{pattern_from_graph, project_structure, sample_unit_perturbation, SparsityPattern, StructuredGain};
use crate::numlin::{solve_dare_with, spectral_radius};
use crate::objective::{build_risk_constraint, risk_offset, CostSpec, Problem};
use crate::system::{discretize, simulate, Discretization, LtiSystem, NoiseModel};

pub const STATES_PER_MG: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgParams {
    /// Damping `D` (MW/Hz).
    pub damping: f64,
    /// Speed droop `R` (Hz/MW).
    pub droop: f64,
    /// Turbine gain `Kt`.
    pub kt: f64,
    /// Turbine time constant `Tt` (s).
    pub tt: f64,
    /// Power-system gain `Kp` (Hz/MW).
    pub kp: f64,
    /// Power-system time constant `Tp` (s).
    pub tp: f64,
    /// Tie-line coefficient (MW/Hz).
    pub ktie: f64,
}

impl Default for MgParams {
    fn default() -> Self {
        Self {
            damping: 16.66,
            droop: 1.2e-3,
            kt: 1.0,
            tt: 0.3,
            kp: 0.06,
            tp: 24.0,
            ktie: 1090.0,
        }
    }
}

impl MgParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("damping", self.damping),
            ("droop", self.droop),
            ("kt", self.kt),
            ("tt", self.tt),
            ("kp", self.kp),
            ("tp", self.tp),
            ("ktie", self.ktie),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("MG parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Frequency bias `β = D + 1/R`.
    pub fn bias(&self) -> f64 {
        self.damping + 1.0 / self.droop
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub bu: DMatrix<f64>,
    pub bw: DMatrix<f64>,
}

pub fn build_blocks(p: &MgParams) -> Blocks {
    #[rustfmt::skip]
    let a1 = DMatrix::from_row_slice(4, 4, &[
        -1.0 / p.tp, p.kp / p.tp, -p.kp / p.tp, 0.0,
        -p.kt / (p.droop * p.tt), -1.0 / p.tt, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        p.bias(), 0.0, 1.0, 0.0,
    ]);
    let mut a2 = DMatrix::zeros(4, 4);
    a2[(2, 0)] = p.ktie;
    let bu = DMatrix::from_column_slice(4, 1, &[0.0, p.kt / p.tt, 0.0, 0.0]);
    let bw = DMatrix::from_column_slice(4, 1, &[-p.kp / p.tp, 0.0, 0.0, 0.0]);
    Blocks { a1, a2, bu, bw }
}

/// Undirected MG interconnection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridTopology {
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl GridTopology {
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidArgument("topology needs at least one MG".into()));
        }
        for &(a, b) in &edges {
            if a >= nodes || b >= nodes || a == b {
                return Err(Error::InvalidArgument(format!("invalid edge ({a}, {b}) for {nodes} MGs")));
            }
        }
        let mut seen = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect::<Vec<_>>();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != edges.len() {
            return Err(Error::InvalidArgument("duplicate edge in topology".into()));
        }
        Ok(Self { nodes, edges })
    }

    /// `0 – 1 – … – (n−1)`.
    pub fn path(nodes: usize) -> Self {
        Self::new(nodes, (1..nodes).map(|i| (i - 1, i)).collect()).expect("path is valid")
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.nodes, self.nodes);
        for &(a, b) in &self.edges {
            l[(a, a)] += 1.0;
            l[(b, b)] += 1.0;
            l[(a, b)] -= 1.0;
            l[(b, a)] -= 1.0;
        }
        l
    }
}

/// Continuous network matrices `A = I⊗A1 + L⊗A2 − leak·(I⊗e₃e₃ᵀ)`, `I⊗Bu`, `I⊗Bw`.
///
/// The tie-line states sum to a conserved quantity that no input reaches;
/// `tie_leakage > 0` adds a slow relaxation of each tie-flow state so the
/// discretized plant is stabilizable.
pub fn continuous_network(
    blocks: &Blocks,
    topo: &GridTopology,
    tie_leakage: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let nodes = topo.nodes();
    let eye = DMatrix::<f64>::identity(nodes, nodes);
    let mut a = eye.kronecker(&blocks.a1) + topo.laplacian().kronecker(&blocks.a2);
    for i in 0..nodes {
        a[(STATES_PER_MG * i + 2, STATES_PER_MG * i + 2)] -= tie_leakage;
    }
    (a, eye.kronecker(&blocks.bu), eye.kronecker(&blocks.bw))
}

#[derive(Debug, Clone)]
pub struct Network {
    pub system: LtiSystem,
    pub dt: f64,
    /// Map from the per-MG load vector to the per-step state disturbance.
    pub noise_map: DMatrix<f64>,
    pub continuous_a: DMatrix<f64>,
}

pub fn assemble_network(
    blocks: &Blocks,
    topo: &GridTopology,
    dt: f64,
    method: Discretization,
    tie_leakage: f64,
) -> Result<Network> {
    if !(tie_leakage >= 0.0) || !tie_leakage.is_finite() {
        return Err(Error::InvalidArgument("tie leakage must be nonnegative".into()));
    }
    let (a, bu, bw) = continuous_network(blocks, topo, tie_leakage);
    let d = discretize(&a, &bu, &bw, dt, method)?;
    Ok(Network {
        system: d.system,
        dt,
        noise_map: d.noise_map,
        continuous_a: a,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Case {
    /// Graph-structured gain with the risk constraint.
    Structured,
    /// Full gain with the risk constraint.
    Full,
    /// Full gain, no constraint.
    Unconstrained,
}

impl Case {
    pub fn from_index(index: u8) -> Result<Self> {
        match index {
            1 => Ok(Self::Structured),
            2 => Ok(Self::Full),
            3 => Ok(Self::Unconstrained),
            other => Err(Error::InvalidArgument(format!("case must be 1, 2 or 3, got {other}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::Structured => 1,
            Self::Full => 2,
            Self::Unconstrained => 3,
        }
    }
}

/// Benchmark knobs beyond the physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSettings {
    /// Per-MG state weight.
    pub qa: DMatrix<f64>,
    /// Per-MG input weight.
    pub ra: DMatrix<f64>,
    /// Variance of each MG's load disturbance.
    pub load_variance: f64,
    /// Risk tolerance `δ` on the raw conditional variance.
    pub delta: f64,
    pub dt: f64,
    pub method: Discretization,
    pub tie_leakage: f64,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            qa: DMatrix::from_diagonal(&DVector::from_vec(vec![1000.0, 1.0, 1.0, 1.0])),
            ra: DMatrix::identity(1, 1),
            load_variance: 1e-4,
            delta: 1.0,
            dt: 0.01,
            method: Discretization::ZeroOrderHold,
            tie_leakage: 0.05,
        }
    }
}

/// A built benchmark case with the pieces needed for scenario runs.
#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub case: Case,
    pub problem: Problem,
    pub network: Network,
    pub topology: GridTopology,
}

pub fn build_case(case: Case, topo: &GridTopology, params: &MgParams, settings: &BenchmarkSettings) -> Result<BenchmarkCase> {
    params.validate()?;
    if settings.qa.shape() != (STATES_PER_MG, STATES_PER_MG) || settings.ra.shape() != (1, 1) {
        return Err(Error::InvalidArgument("Qa must be 4x4 and Ra 1x1".into()));
    }
    if !(settings.load_variance >= 0.0) || !settings.load_variance.is_finite() {
        return Err(Error::InvalidArgument("load variance must be nonnegative".into()));
    }
    let nodes = topo.nodes();
    let network = assemble_network(&build_blocks(params), topo, settings.dt, settings.method, settings.tie_leakage)?;
    let n = STATES_PER_MG * nodes;
    let eye = DMatrix::<f64>::identity(nodes, nodes);
    let base = CostSpec::new(eye.kronecker(&settings.qa), eye.kronecker(&settings.ra))?;
    let factor = &network.noise_map * settings.load_variance.sqrt();
    let noise = NoiseModel::gaussian_factored(DVector::zeros(n), factor)?;
    let pattern = match case {
        Case::Structured => pattern_from_graph(topo.edges(), &vec![STATES_PER_MG; nodes], &vec![1; nodes], true)?,
        Case::Full | Case::Unconstrained => SparsityPattern::full(nodes, n),
    };
    let constraints = match case {
        Case::Unconstrained => vec![],
        _ => vec![build_risk_constraint(&base.q, nodes, &noise, settings.delta)?],
    };
    let problem = Problem::new(network.system.clone(), noise, pattern, base, constraints)?;
    Ok(BenchmarkCase {
        case,
        problem,
        network,
        topology: topo.clone(),
    })
}

/// A stabilizing gain on the problem's pattern: the masked Riccati gain,
/// shrunk toward zero if needed, then a random masked search.
pub fn initial_stabilizing_gain<R: Rng + ?Sized>(problem: &Problem, rng: &mut R) -> Result<StructuredGain> {
    let sys = &problem.system;
    let margin = problem.numerics.lyapunov.stability_margin;
    let radius_of = |k: &StructuredGain| spectral_radius(&sys.closed_loop(k.values())).unwrap_or(f64::INFINITY);
    let mut best = f64::INFINITY;
    let mut anchor = StructuredGain::zeros(problem.pattern.clone());
    if let Ok(dare) = solve_dare_with(sys.a(), sys.b(), &problem.base.q, &problem.base.r, &problem.numerics.riccati) {
        anchor = project_structure(&dare.gain, &problem.pattern)?;
        for i in 0..=20 {
            let candidate = anchor.scaled(1.0 - i as f64 / 20.0);
            let radius = radius_of(&candidate);
            best = best.min(radius);
            if radius < 1.0 - margin {
                return Ok(candidate);
            }
        }
    }
    let scale = anchor.norm().max(1.0);
    for _ in 0..500 {
        let u = sample_unit_perturbation(&problem.pattern, rng);
        let magnitude = scale * 10f64.powf(rng.random_range(-3.0..1.0));
        let candidate = anchor.add_scaled(&u, magnitude);
        let radius = radius_of(&candidate);
        best = best.min(radius);
        if radius < 1.0 - margin {
            return Ok(candidate);
        }
    }
    Err(Error::Initialization { best_radius: best })
}

/// Unconstrained Riccati gain on the full pattern.
pub fn riccati_gain(problem: &Problem) -> Result<StructuredGain> {
    let sys = &problem.system;
    let dare = solve_dare_with(sys.a(), sys.b(), &problem.base.q, &problem.base.r, &problem.numerics.riccati)?;
    StructuredGain::new(SparsityPattern::full(sys.m(), sys.n()), dare.gain)
}

/// Risk tolerance `δ` that puts the reformulated bound at `fraction` times the
/// constraint value of the unconstrained Riccati gain.
pub fn calibrate_delta(topo: &GridTopology, params: &MgParams, settings: &BenchmarkSettings, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0) || !fraction.is_finite() {
        return Err(Error::InvalidArgument(format!("calibration fraction must be positive, got {fraction}")));
    }
    let case = build_case(Case::Full, topo, params, settings)?;
    let problem = &case.problem;
    let gain = riccati_gain(problem)?;
    let moments = problem.moments(&gain)?;
    let rc = problem.constraints[0].cost.stationary_cost(&moments, gain.values());
    Ok(fraction * rc + risk_offset(&problem.base.q, &problem.noise)?)
}

/// A load step of `magnitude` at MG `mg`, starting at `time` seconds and held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStep {
    pub mg: usize,
    pub time: f64,
    pub magnitude: f64,
}

/// Sampled per-MG frequency and tie-flow deviations, rows at `t = k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub times: Vec<f64>,
    pub frequency: DMatrix<f64>,
    pub tie_flow: DMatrix<f64>,
}

impl ScenarioTrace {
    pub fn peak_frequency_deviation(&self, mg: usize) -> f64 {
        self.frequency.column(mg).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Population variance of `Δf` over the window.
    pub fn frequency_variance(&self, mg: usize) -> f64 {
        let col = self.frequency.column(mg);
        let mean = col.mean();
        col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64
    }
}

/// Noise-free response from rest to the given load steps under `u = −K x`.
pub fn simulate_scenario(
    network: &Network,
    topo: &GridTopology,
    gain: &StructuredGain,
    window: f64,
    loads: &[LoadStep],
) -> Result<ScenarioTrace> {
    let nodes = topo.nodes();
    if !(window > 0.0) || !window.is_finite() {
        return Err(Error::InvalidArgument(format!("scenario window must be positive, got {window}")));
    }
    let steps = (window / network.dt).round() as usize;
    let n = network.system.n();
    let mut events: Vec<(usize, DVector<f64>)> = Vec::new();
    for load in loads {
        if load.mg >= nodes || !(load.time >= 0.0) || !load.magnitude.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid load step {load:?}")));
        }
        let step = (load.time / network.dt - 1e-9).ceil().max(0.0) as usize;
        let mut v = DVector::zeros(nodes);
        v[load.mg] = load.magnitude;
        events.push((step, &network.noise_map * v));
    }
    let noise = NoiseModel::step_load(n, events)?;
    let mut frequency = DMatrix::zeros(steps + 1, nodes);
    let mut tie_flow = DMatrix::zeros(steps + 1, nodes);
    let mut rng = crate::rng::stream(0, 0, 0);
    simulate(&network.system, gain, &DVector::zeros(n), steps + 1, &noise, &mut rng, |t, x, _, _| {
        for i in 0..nodes {
            frequency[(t, i)] = x[STATES_PER_MG * i];
            tie_flow[(t, i)] = x[STATES_PER_MG * i + 2];
        }
    })?;
    Ok(ScenarioTrace {
        times: (0..=steps).map(|k| k as f64 * network.dt).collect(),
        frequency,
        tie_flow,
    })
}

/// `per_mg` load steps at each MG, times uniform in `[0, window)` and
/// magnitudes uniform in `[lo, hi]`, sorted by time.
pub fn random_load_steps<R: Rng + ?Sized>(nodes: usize, per_mg: usize, window: f64, range: (f64, f64), rng: &mut R) -> Vec<LoadStep> {
    let mut loads = Vec::with_capacity(nodes * per_mg);
    for mg in 0..nodes {
        for _ in 0..per_mg {
            let time = rng.random::<f64>() * window;
            let magnitude = range.0 + (range.1 - range.0) * rng.random::<f64>();
            loads.push(LoadStep { mg, time, magnitude });
        }
    }
    loads.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.mg.cmp(&b.mg)));
    loads
}
