//! Average-cost criteria, the mean-variance risk constraint, the Lagrangian,
//! its bang-bang max-oracle and the pointwise maximum `Φ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::gains::{SparsityPattern, StructuredGain};
use crate::numlin::{is_psd, solve_dlyap_with, trace_product, LyapunovSettings, RiccatiSettings};
use crate::rng::{self, Stream};
use crate::system::{simulate, LtiSystem, NoiseModel};

/// Stage cost `xᵀQx + uᵀRu + qᵀx`, averaged, plus a constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub offset: f64,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        Self::with_linear(q, r, DVector::zeros(n), 0.0)
    }

    pub fn with_linear(q: DMatrix<f64>, r: DMatrix<f64>, linear: DVector<f64>, offset: f64) -> Result<Self> {
        check_dim("cost linear term", q.nrows(), linear.len())?;
        if !is_psd(&q) {
            return Err(Error::InvalidArgument("state weight must be symmetric positive semi-definite".into()));
        }
        if !is_psd(&r) {
            return Err(Error::InvalidArgument("input weight must be symmetric positive semi-definite".into()));
        }
        if !offset.is_finite() || linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("cost terms must be finite".into()));
        }
        Ok(Self { q, r, linear, offset })
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    /// `Qλ`, `Rλ`, `qλ` with the offset absorbing `−cλ`.
    pub fn combine(base: &CostSpec, constraints: &[ConstraintSpec], lambda: &[f64]) -> CostSpec {
        assert_eq!(constraints.len(), lambda.len(), "one multiplier per constraint");
        let mut out = base.clone();
        for (c, &l) in constraints.iter().zip(lambda) {
            if l == 0.0 {
                continue;
            }
            out.q += &c.cost.q * l;
            out.r += &c.cost.r * l;
            out.linear += &c.cost.linear * l;
            out.offset += l * (c.cost.offset - c.bound);
        }
        out
    }

    /// Stationary average cost under `moments` for the gain that produced them.
    pub fn stationary_cost(&self, moments: &StationaryMoments, gain: &DMatrix<f64>) -> f64 {
        let weight = &self.q + gain.transpose() * &self.r * gain;
        let mean = &moments.mean;
        trace_product(&weight, &moments.covariance)
            + mean.dot(&(&weight * mean))
            + self.linear.dot(mean)
            + self.offset
    }

    #[inline]
    fn stage(&self, x: &DVector<f64>, u: &DVector<f64>, qx: &mut DVector<f64>, ru: &mut DVector<f64>) -> f64 {
        qx.gemv(1.0, &self.q, x, 0.0);
        ru.gemv(1.0, &self.r, u, 0.0);
        x.dot(qx) + u.dot(ru) + self.linear.dot(x)
    }
}

/// `Rᵢ(K) ≤ cᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub cost: CostSpec,
    pub bound: f64,
}

/// Multipliers confined to `[0, Λ]^{|I|}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierBox {
    cap: f64,
    values: Vec<f64>,
}

impl MultiplierBox {
    pub fn new(cap: f64, values: Vec<f64>) -> Result<Self> {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::InvalidArgument(format!("multiplier cap must be positive, got {cap}")));
        }
        if let Some(v) = values.iter().find(|&&v| !(0.0..=cap).contains(&v)) {
            return Err(Error::InvalidArgument(format!("multiplier {v} outside [0, {cap}]")));
        }
        Ok(Self { cap, values })
    }

    pub fn zeros(cap: f64, count: usize) -> Result<Self> {
        Self::new(cap, vec![0.0; count])
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean projection onto the box.
    pub fn clamp(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|v| v.clamp(0.0, self.cap)).collect()
    }
}

/// Solver knobs threaded through exact evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    pub lyapunov: LyapunovSettings,
    pub riccati: RiccatiSettings,
    /// Central-difference step for the mean-driven gradient terms.
    pub fd_step: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            lyapunov: LyapunovSettings::default(),
            riccati: RiccatiSettings::default(),
            fd_step: 1e-6,
        }
    }
}

/// Stationary mean and covariance of the closed loop `F = A − BK`.
#[derive(Debug, Clone)]
pub struct StationaryMoments {
    pub closed_loop: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn stationary_moments(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &DMatrix<f64>,
    settings: &LyapunovSettings,
) -> Result<StationaryMoments> {
    check_dim("gain rows", sys.m(), gain.nrows())?;
    check_dim("gain cols", sys.n(), gain.ncols())?;
    check_dim("noise dimension", sys.n(), noise.dim())?;
    let f = sys.closed_loop(gain);
    let stats = noise.statistics();
    let covariance = solve_dlyap_with(&f, &stats.covariance, false, settings)?;
    let mean = if stats.mean.iter().all(|&v| v == 0.0) {
        DVector::zeros(sys.n())
    } else {
        let n = sys.n();
        let lhs = DMatrix::<f64>::identity(n, n) - &f;
        lhs.lu().solve(&stats.mean).ok_or_else(|| Error::Numerical {
            context: "stationary mean",
            detail: "I − F is singular".into(),
        })?
    };
    Ok(StationaryMoments {
        closed_loop: f,
        mean,
        covariance,
    })
}

/// Model-based average cost; unstable closed loops are reported as
/// [`Error::Stability`].
pub fn average_cost_exact(sys: &LtiSystem, noise: &NoiseModel, gain: &StructuredGain, spec: &CostSpec) -> Result<f64> {
    let moments = stationary_moments(sys, noise, gain.values(), &LyapunovSettings::default())?;
    Ok(spec.stationary_cost(&moments, gain.values()))
}

/// Rollout budget for Monte-Carlo evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSettings {
    pub horizon: usize,
    pub rollouts: usize,
    /// Discarded leading steps; `None` means `horizon / 10`.
    pub burn_in: Option<usize>,
}

impl McSettings {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.horizon / 10)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    /// One mean per spec; `+∞` when any rollout diverged.
    pub means: Vec<f64>,
    /// Standard error across rollouts (NaN for a single rollout).
    pub std_errors: Vec<f64>,
    pub diverged: bool,
}

/// Monte-Carlo averages for several specs on common rollouts from `x0 = 0`.
pub fn average_costs_mc<R: Rng + ?Sized>(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &StructuredGain,
    specs: &[&CostSpec],
    settings: &McSettings,
    rng: &mut R,
) -> Result<McEstimate> {
    let burn = settings.burn_in();
    if settings.horizon <= burn {
        return Err(Error::InvalidArgument(format!(
            "horizon {} must exceed burn-in {burn}",
            settings.horizon
        )));
    }
    if settings.rollouts == 0 {
        return Err(Error::InvalidArgument("need at least one rollout".into()));
    }
    let k = specs.len();
    let n = sys.n();
    let m = sys.m();
    let mut per_rollout = vec![vec![0.0; settings.rollouts]; k];
    let mut qx = DVector::zeros(n);
    let mut ru = DVector::zeros(m);
    let span = (settings.horizon - burn) as f64;
    let x0 = DVector::zeros(n);
    for r in 0..settings.rollouts {
        let mut sums = vec![0.0; k];
        let outcome = simulate(sys, gain, &x0, settings.horizon, noise, rng, |t, x, u, _| {
            if t >= burn {
                for (s, spec) in sums.iter_mut().zip(specs) {
                    *s += spec.stage(x, u, &mut qx, &mut ru);
                }
            }
        });
        match outcome {
            Ok(()) => {}
            Err(Error::Divergence { .. }) => {
                return Ok(McEstimate {
                    means: vec![f64::INFINITY; k],
                    std_errors: vec![f64::INFINITY; k],
                    diverged: true,
                })
            }
            Err(e) => return Err(e),
        }
        for (i, s) in sums.into_iter().enumerate() {
            per_rollout[i][r] = s / span + specs[i].offset;
        }
    }
    let count = settings.rollouts as f64;
    let mut means = Vec::with_capacity(k);
    let mut std_errors = Vec::with_capacity(k);
    for values in &per_rollout {
        let mean = values.iter().sum::<f64>() / count;
        let se = if settings.rollouts > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
            (var / count).sqrt()
        } else {
            f64::NAN
        };
        means.push(mean);
        std_errors.push(se);
    }
    let diverged = means.iter().any(|v| !v.is_finite());
    Ok(McEstimate { means, std_errors, diverged })
}

pub fn average_cost_mc<R: Rng + ?Sized>(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &StructuredGain,
    spec: &CostSpec,
    settings: &McSettings,
    rng: &mut R,
) -> Result<McEstimate> {
    average_costs_mc(sys, noise, gain, &[spec], settings, rng)
}

/// Quadratic-plus-linear reformulation of the mean-variance risk bound:
/// `Qc = 4QWQ`, `qc = 4QM₃`, bound `δ − m₄ + 4 tr((WQ)²)`.
pub fn build_risk_constraint(q: &DMatrix<f64>, inputs: usize, noise: &NoiseModel, delta: f64) -> Result<ConstraintSpec> {
    let stats = noise.reweighted(q)?.statistics().clone();
    let w = &stats.covariance;
    let mut qc = q * w * q * 4.0;
    crate::numlin::symmetrize(&mut qc);
    let linear = q * &stats.third * 4.0;
    let wq = w * q;
    let bound = delta - stats.fourth + 4.0 * trace_product(&wq, &wq);
    Ok(ConstraintSpec {
        cost: CostSpec::with_linear(qc, DMatrix::zeros(inputs, inputs), linear, 0.0)?,
        bound,
    })
}

/// `m₄ − 4 tr((WQ)²)`: the gap between the raw conditional variance and the
/// reformulated constraint value at the same gain.
pub fn risk_offset(q: &DMatrix<f64>, noise: &NoiseModel) -> Result<f64> {
    let stats = noise.reweighted(q)?.statistics().clone();
    let wq = &stats.covariance * q;
    Ok(stats.fourth - 4.0 * trace_product(&wq, &wq))
}

/// Exact `ℒ(K, λ)` via the combined spec.
pub fn lagrangian(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &StructuredGain,
    base: &CostSpec,
    constraints: &[ConstraintSpec],
    lambda: &MultiplierBox,
) -> Result<f64> {
    check_dim("multiplier count", constraints.len(), lambda.values().len())?;
    let combined = CostSpec::combine(base, constraints, lambda.values());
    average_cost_exact(sys, noise, gain, &combined)
}

/// Bang-bang oracle: `λᵢ = Λ` iff `residualᵢ > 0` (equality counts as satisfied).
pub fn oracle_from_residuals(residuals: &[f64], cap: f64) -> Vec<f64> {
    residuals.iter().map(|&r| if r > 0.0 { cap } else { 0.0 }).collect()
}

pub fn constraint_residuals(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &StructuredGain,
    constraints: &[ConstraintSpec],
) -> Result<Vec<f64>> {
    let moments = stationary_moments(sys, noise, gain.values(), &LyapunovSettings::default())?;
    Ok(constraints
        .iter()
        .map(|c| c.cost.stationary_cost(&moments, gain.values()) - c.bound)
        .collect())
}

pub fn max_oracle(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &StructuredGain,
    constraints: &[ConstraintSpec],
    cap: f64,
) -> Result<MultiplierBox> {
    let residuals = constraint_residuals(sys, noise, gain, constraints)?;
    MultiplierBox::new(cap, oracle_from_residuals(&residuals, cap))
}

/// `Φ(K) = max_λ ℒ(K, λ) = R₀(K) + Λ Σ max(Rᵢ(K) − cᵢ, 0)`.
pub fn phi(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &StructuredGain,
    base: &CostSpec,
    constraints: &[ConstraintSpec],
    cap: f64,
) -> Result<f64> {
    let lambda = max_oracle(sys, noise, gain, constraints, cap)?;
    lagrangian(sys, noise, gain, base, constraints, &lambda)
}

/// Time average of `(xₜᵀQxₜ − E[xₜᵀQxₜ | hₜ])²` along one simulated run,
/// using the model to form the conditional expectation.
pub fn empirical_mean_variance_risk<R: Rng + ?Sized>(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &StructuredGain,
    q: &DMatrix<f64>,
    horizon: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<f64> {
    if horizon <= burn_in + 1 {
        return Err(Error::InvalidArgument("horizon must exceed burn-in".into()));
    }
    let stats = noise.statistics();
    let tr_wq = trace_product(&stats.covariance, q);
    let mut prev: Option<DVector<f64>> = None;
    let mut predicted = DVector::zeros(sys.n());
    let mut acc = 0.0;
    let mut count = 0usize;
    let zero_noise = DVector::zeros(sys.n());
    simulate(sys, gain, &DVector::zeros(sys.n()), horizon, noise, rng, |t, x, u, _| {
        if let Some(mean) = prev.as_ref() {
            if t >= burn_in.max(1) {
                let dev = x.dot(&(q * x)) - mean.dot(&(q * mean)) - tr_wq;
                acc += dev * dev;
                count += 1;
            }
        }
        sys.step_into(x, u, &zero_noise, &mut predicted);
        predicted += &stats.mean;
        prev = Some(predicted.clone());
    })?;
    Ok(acc / count as f64)
}

/// Objective values at one gain: base cost and constraint residuals
/// `Rᵢ(K) − cᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub base: f64,
    pub residuals: Vec<f64>,
    pub feasible: bool,
}

impl Evaluation {
    pub fn infeasible(constraints: usize) -> Self {
        Self {
            base: f64::INFINITY,
            residuals: vec![f64::INFINITY; constraints],
            feasible: false,
        }
    }

    pub fn lagrangian(&self, lambda: &[f64]) -> f64 {
        if !self.feasible {
            return f64::INFINITY;
        }
        self.base + self.residuals.iter().zip(lambda).map(|(r, l)| r * l).sum::<f64>()
    }

    pub fn oracle(&self, cap: f64) -> Vec<f64> {
        oracle_from_residuals(&self.residuals, cap)
    }

    pub fn phi(&self, cap: f64) -> f64 {
        self.lagrangian(&self.oracle(cap))
    }
}

/// Source of objective values for the optimizers.
pub trait Evaluator {
    fn evaluate(&mut self, gain: &StructuredGain) -> Evaluation;

    /// True when values come from rollouts only.
    fn is_model_free(&self) -> bool;

    fn constraint_count(&self) -> usize;
}

/// The constrained structured LQR instance.
#[derive(Debug, Clone)]
pub struct Problem {
    pub system: LtiSystem,
    pub noise: NoiseModel,
    pub pattern: SparsityPattern,
    pub base: CostSpec,
    pub constraints: Vec<ConstraintSpec>,
    pub numerics: Numerics,
}

impl Problem {
    pub fn new(
        system: LtiSystem,
        noise: NoiseModel,
        pattern: SparsityPattern,
        base: CostSpec,
        constraints: Vec<ConstraintSpec>,
    ) -> Result<Self> {
        let (n, m) = (system.n(), system.m());
        check_dim("noise dimension", n, noise.dim())?;
        check_dim("pattern rows", m, pattern.rows())?;
        check_dim("pattern cols", n, pattern.cols())?;
        for spec in core::iter::once(&base).chain(constraints.iter().map(|c| &c.cost)) {
            check_dim("cost state weight", n, spec.n())?;
            check_dim("cost input weight", m, spec.m())?;
        }
        Ok(Self {
            system,
            noise,
            pattern,
            base,
            constraints,
            numerics: Numerics::default(),
        })
    }

    pub fn with_numerics(mut self, numerics: Numerics) -> Self {
        self.numerics = numerics;
        self
    }

    pub fn moments(&self, gain: &StructuredGain) -> Result<StationaryMoments> {
        stationary_moments(&self.system, &self.noise, gain.values(), &self.numerics.lyapunov)
    }

    pub fn evaluate_exact(&self, gain: &StructuredGain) -> Result<Evaluation> {
        let moments = self.moments(gain)?;
        Ok(self.evaluation_from(&moments, gain))
    }

    pub fn evaluation_from(&self, moments: &StationaryMoments, gain: &StructuredGain) -> Evaluation {
        let k = gain.values();
        Evaluation {
            base: self.base.stationary_cost(moments, k),
            residuals: self
                .constraints
                .iter()
                .map(|c| c.cost.stationary_cost(moments, k) - c.bound)
                .collect(),
            feasible: true,
        }
    }

    pub fn spectral_radius(&self, gain: &StructuredGain) -> f64 {
        crate::numlin::spectral_radius(&self.system.closed_loop(gain.values())).unwrap_or(f64::NAN)
    }

    pub fn is_stabilizing(&self, gain: &StructuredGain) -> bool {
        let radius = self.spectral_radius(gain);
        radius < 1.0 - self.numerics.lyapunov.stability_margin
    }
}

/// Exact model-based values; destabilizing gains evaluate as infeasible.
#[derive(Debug, Clone, Copy)]
pub struct ExactEvaluator<'a> {
    problem: &'a Problem,
}

impl<'a> ExactEvaluator<'a> {
    pub fn new(problem: &'a Problem) -> Self {
        Self { problem }
    }
}

impl Evaluator for ExactEvaluator<'_> {
    fn evaluate(&mut self, gain: &StructuredGain) -> Evaluation {
        self.problem
            .evaluate_exact(gain)
            .unwrap_or_else(|_| Evaluation::infeasible(self.problem.constraints.len()))
    }

    fn is_model_free(&self) -> bool {
        false
    }

    fn constraint_count(&self) -> usize {
        self.problem.constraints.len()
    }
}

/// Rollout-only evaluation. The plant is held privately and is reachable
/// only through simulated trajectories.
#[derive(Debug, Clone)]
pub struct MonteCarloEvaluator {
    plant: LtiSystem,
    noise: NoiseModel,
    base: CostSpec,
    constraints: Vec<ConstraintSpec>,
    settings: McSettings,
    rng: Stream,
}

impl MonteCarloEvaluator {
    pub fn new(problem: &Problem, settings: McSettings, rng: Stream) -> Self {
        Self {
            plant: problem.system.clone(),
            noise: problem.noise.clone(),
            base: problem.base.clone(),
            constraints: problem.constraints.clone(),
            settings,
            rng,
        }
    }

    pub fn from_seed(problem: &Problem, settings: McSettings, seed: u64) -> Self {
        Self::new(problem, settings, rng::stream(seed, rng::purpose::ROLLOUT, 0))
    }

    pub fn settings(&self) -> &McSettings {
        &self.settings
    }
}

impl Evaluator for MonteCarloEvaluator {
    fn evaluate(&mut self, gain: &StructuredGain) -> Evaluation {
        let mut specs: Vec<&CostSpec> = Vec::with_capacity(1 + self.constraints.len());
        specs.push(&self.base);
        specs.extend(self.constraints.iter().map(|c| &c.cost));
        match average_costs_mc(&self.plant, &self.noise, gain, &specs, &self.settings, &mut self.rng) {
            Ok(est) if !est.diverged => Evaluation {
                base: est.means[0],
                residuals: est.means[1..]
                    .iter()
                    .zip(&self.constraints)
                    .map(|(v, c)| v - c.bound)
                    .collect(),
                feasible: true,
            },
            _ => Evaluation::infeasible(self.constraints.len()),
        }
    }

    fn is_model_free(&self) -> bool {
        true
    }

    fn constraint_count(&self) -> usize {
        self.constraints.len()
    }
}
