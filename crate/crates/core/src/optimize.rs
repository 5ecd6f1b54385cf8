//! GDmax and SGDmax on `Φ`, the stationarity check, Moreau-envelope
//! diagnostics and empirical local constants.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gains::{sample_unit_perturbation, SparsityPattern, StructuredGain};
use crate::gradients::{zopg_batch, SpecGradients};
use crate::objective::{oracle_from_residuals, Evaluation, Evaluator, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    ModelBased,
    ModelFree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// `η`.
    pub step_size: f64,
    /// `ε`.
    pub tolerance: f64,
    /// `Λ`.
    pub multiplier_cap: f64,
    /// `r`.
    pub smoothing_radius: f64,
    /// `M`.
    pub samples: usize,
    /// `J`.
    pub max_iterations: usize,
    pub alpha: f64,
    pub mode: Mode,
    /// Constraints with `|Rᵢ − cᵢ|` inside this band get the minimum-norm
    /// multiplier instead of the bang-bang one. `None` means `ε`.
    pub active_band: Option<f64>,
    pub max_halvings: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            tolerance: 1e-4,
            multiplier_cap: 10.0,
            smoothing_radius: 0.05,
            samples: 100,
            max_iterations: 1000,
            alpha: 40.0,
            mode: Mode::ModelBased,
            active_band: None,
            max_halvings: 30,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_size", self.step_size),
            ("tolerance", self.tolerance),
            ("multiplier_cap", self.multiplier_cap),
            ("smoothing_radius", self.smoothing_radius),
            ("alpha", self.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be at least 1".into()));
        }
        if let Some(b) = self.active_band {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::InvalidArgument(format!("active_band must be nonnegative, got {b}")));
            }
        }
        Ok(())
    }

    pub fn band(&self) -> f64 {
        self.active_band.unwrap_or(self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gain: StructuredGain,
    /// Base cost `R₀(K)`.
    pub cost: f64,
    /// `ℒ(K, λ)` at the recorded multipliers.
    pub lagrangian: f64,
    pub phi: f64,
    pub grad_norm: f64,
    pub lambda: Vec<f64>,
    pub residuals: Vec<f64>,
    /// NaN when no model is available to compute it.
    pub spectral_radius: f64,
    /// Step actually used to reach this iterate (0 for the first).
    pub step: f64,
    /// Destabilized perturbations dropped from this iterate's gradient.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub history: Vec<IterationRecord>,
    pub final_gain: StructuredGain,
    pub final_lambda: Vec<f64>,
    pub best_gain: StructuredGain,
    pub best_phi: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn last(&self) -> &IterationRecord {
        self.history.last().expect("history holds at least the initial iterate")
    }
}

/// Exact access to values and gradients, used by the model-based routines.
pub trait PhiModel {
    fn pattern(&self) -> &SparsityPattern;

    fn constraint_count(&self) -> usize;

    /// [`Error::Stability`] for destabilizing gains.
    fn evaluate(&self, gain: &StructuredGain) -> Result<Evaluation>;

    fn gradients(&self, gain: &StructuredGain) -> Result<SpecGradients>;

    fn spectral_radius(&self, gain: &StructuredGain) -> f64;
}

impl PhiModel for Problem {
    fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    fn evaluate(&self, gain: &StructuredGain) -> Result<Evaluation> {
        self.evaluate_exact(gain)
    }

    fn gradients(&self, gain: &StructuredGain) -> Result<SpecGradients> {
        self.spec_gradients(gain)
    }

    fn spectral_radius(&self, gain: &StructuredGain) -> f64 {
        Problem::spectral_radius(self, gain)
    }
}

/// Synthetic objectives that bypass LQR.
pub mod hooks {
    use super::*;

    /// `Φ(K) = (c/2)‖K‖²`.
    #[derive(Debug, Clone)]
    pub struct Quadratic {
        pub pattern: SparsityPattern,
        pub curvature: f64,
    }

    impl PhiModel for Quadratic {
        fn pattern(&self) -> &SparsityPattern {
            &self.pattern
        }

        fn constraint_count(&self) -> usize {
            0
        }

        fn evaluate(&self, gain: &StructuredGain) -> Result<Evaluation> {
            let n = gain.norm();
            Ok(Evaluation {
                base: 0.5 * self.curvature * n * n,
                residuals: vec![],
                feasible: true,
            })
        }

        fn gradients(&self, gain: &StructuredGain) -> Result<SpecGradients> {
            Ok(SpecGradients {
                evaluation: self.evaluate(gain)?,
                base: gain.scaled(self.curvature),
                constraints: vec![],
            })
        }

        fn spectral_radius(&self, _gain: &StructuredGain) -> f64 {
            0.0
        }
    }

    /// `Φ(K) = ⟨g, K⟩`.
    #[derive(Debug, Clone)]
    pub struct Linear {
        pub slope: StructuredGain,
    }

    impl PhiModel for Linear {
        fn pattern(&self) -> &SparsityPattern {
            self.slope.pattern()
        }

        fn constraint_count(&self) -> usize {
            0
        }

        fn evaluate(&self, gain: &StructuredGain) -> Result<Evaluation> {
            Ok(Evaluation {
                base: self.slope.dot(gain),
                residuals: vec![],
                feasible: true,
            })
        }

        fn gradients(&self, gain: &StructuredGain) -> Result<SpecGradients> {
            Ok(SpecGradients {
                evaluation: self.evaluate(gain)?,
                base: self.slope.clone(),
                constraints: vec![],
            })
        }

        fn spectral_radius(&self, _gain: &StructuredGain) -> f64 {
            0.0
        }
    }
}

/// Multipliers for a descent direction: bang-bang outside the band, and on
/// the band the box-constrained minimizer of `‖offset + g₀ + Σ λᵢ gᵢ‖`.
/// Returns `(λ, direction)`.
pub fn active_set_direction(
    grads: &SpecGradients,
    offset: Option<&StructuredGain>,
    cap: f64,
    band: f64,
) -> (Vec<f64>, StructuredGain) {
    let residuals = &grads.evaluation.residuals;
    let mut lambda = oracle_from_residuals(residuals, cap);
    let active: Vec<usize> = (0..residuals.len()).filter(|&i| residuals[i].abs() <= band).collect();
    for &i in &active {
        lambda[i] = 0.0;
    }
    let mut fixed = grads.combine(&lambda);
    if let Some(o) = offset {
        fixed.add_scaled_mut(o, 1.0);
    }
    if active.is_empty() {
        return (lambda, fixed);
    }
    let gram: Vec<Vec<f64>> = active
        .iter()
        .map(|&a| active.iter().map(|&b| grads.constraints[a].dot(&grads.constraints[b])).collect())
        .collect();
    let lin: Vec<f64> = active.iter().map(|&a| fixed.dot(&grads.constraints[a])).collect();
    let mut sub = vec![0.0; active.len()];
    for _ in 0..500 {
        let mut change: f64 = 0.0;
        for a in 0..active.len() {
            if gram[a][a] <= 0.0 {
                continue;
            }
            let mut s = lin[a];
            for b in 0..active.len() {
                if b != a {
                    s += gram[a][b] * sub[b];
                }
            }
            let next = (-s / gram[a][a]).clamp(0.0, cap);
            change = change.max((next - sub[a]).abs());
            sub[a] = next;
        }
        if change <= 1e-15 * cap {
            break;
        }
    }
    let mut direction = fixed;
    for (k, &i) in active.iter().enumerate() {
        lambda[i] = sub[k];
        if sub[k] != 0.0 {
            direction.add_scaled_mut(&grads.constraints[i], sub[k]);
        }
    }
    (lambda, direction)
}

fn crosses(before: f64, after: f64, band: f64) -> bool {
    (before > band && after < -band) || (before < -band && after > band)
}

struct Advance {
    gain: StructuredGain,
    step: f64,
}

/// `K − s·d` with `s ≤ step`: halved while destabilizing, and shortened by
/// bisection so that no residual jumps across the band.
fn advance<P: PhiModel + ?Sized>(
    model: &P,
    gain: &StructuredGain,
    direction: &StructuredGain,
    step: f64,
    residuals: &[f64],
    band: f64,
    max_halvings: usize,
) -> Result<Advance> {
    let mut s = step;
    let mut halvings = 0;
    let candidate = loop {
        let k = gain.add_scaled(direction, -s);
        match model.evaluate(&k) {
            Ok(e) if e.base.is_finite() => break (k, e),
            _ => {
                halvings += 1;
                if halvings > max_halvings {
                    return Err(Error::StepRejected {
                        halvings: max_halvings,
                        reason: format!(
                            "every step down to {s:e} destabilizes the loop (radius at K = {:e}, ‖d‖ = {:e})",
                            model.spectral_radius(gain),
                            direction.norm()
                        ),
                    });
                }
                s *= 0.5;
            }
        }
    };
    let (k, e) = candidate;
    let Some(i) = (0..residuals.len()).find(|&i| crosses(residuals[i], e.residuals[i], band)) else {
        return Ok(Advance { gain: k, step: s });
    };
    let side = residuals[i].signum();
    let (mut lo, mut hi) = (0.0, s);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let km = gain.add_scaled(direction, -mid);
        match model.evaluate(&km) {
            Ok(em) if em.base.is_finite() => {
                let r = em.residuals[i];
                if r.abs() <= band {
                    return Ok(Advance { gain: km, step: mid });
                }
                if r.signum() == side {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            _ => hi = mid,
        }
    }
    let s = if lo > 0.0 { lo } else { hi };
    Ok(Advance {
        gain: gain.add_scaled(direction, -s),
        step: s,
    })
}

/// Algorithm 1 with exact gradients.
pub fn gdmax<P: PhiModel + ?Sized>(model: &P, k0: &StructuredGain, cfg: &OptimizerConfig) -> Result<RunRecord> {
    cfg.validate()?;
    if k0.pattern() != model.pattern() {
        return Err(Error::InvalidArgument("initial gain pattern differs from the problem pattern".into()));
    }
    let cap = cfg.multiplier_cap;
    let band = cfg.band();
    let mut gain = k0.clone();
    let mut history = Vec::new();
    let mut converged = false;
    let mut step_used = 0.0;
    let mut best = (f64::INFINITY, k0.clone());
    let mut final_lambda;
    let mut j = 0;
    loop {
        let grads = model.gradients(&gain)?;
        let (lambda, direction) = active_set_direction(&grads, None, cap, band);
        let e = &grads.evaluation;
        let grad_norm = direction.norm();
        let phi = e.phi(cap);
        if phi < best.0 {
            best = (phi, gain.clone());
        }
        history.push(IterationRecord {
            iteration: j,
            gain: gain.clone(),
            cost: e.base,
            lagrangian: e.lagrangian(&lambda),
            phi,
            grad_norm,
            lambda: lambda.clone(),
            residuals: e.residuals.clone(),
            spectral_radius: model.spectral_radius(&gain),
            step: step_used,
            failures: 0,
        });
        final_lambda = lambda;
        if grad_norm <= cfg.tolerance {
            converged = true;
            break;
        }
        if j == cfg.max_iterations {
            break;
        }
        let next = advance(model, &gain, &direction, cfg.step_size, &e.residuals, band, cfg.max_halvings)?;
        gain = next.gain;
        step_used = next.step;
        j += 1;
    }
    Ok(RunRecord {
        final_gain: gain,
        final_lambda,
        best_gain: best.1,
        best_phi: best.0,
        converged,
        iterations: j,
        history,
        warnings: vec![],
    })
}

/// Algorithm 3: fixed-length descent on averaged ZOPG samples. The optional
/// `monitor` supplies spectral radii for the record and never influences
/// the iterates.
pub fn sgdmax<E, R>(
    evaluator: &mut E,
    k0: &StructuredGain,
    cfg: &OptimizerConfig,
    rng: &mut R,
    monitor: Option<&dyn PhiModel>,
) -> Result<RunRecord>
where
    E: Evaluator + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if cfg.mode == Mode::ModelFree && !evaluator.is_model_free() {
        return Err(Error::InvalidArgument("model-free mode requires a rollout-only evaluator".into()));
    }
    let cap = cfg.multiplier_cap;
    let radius_of = |k: &StructuredGain| monitor.map_or(f64::NAN, |m| m.spectral_radius(k));
    let mut e = evaluator.evaluate(k0);
    if !e.feasible || !e.base.is_finite() {
        return Err(Error::Stability { radius: radius_of(k0) });
    }
    let mut gain = k0.clone();
    let phi0 = e.phi(cap);
    let mut best = (phi0, k0.clone());
    let mut warnings = Vec::new();
    let mut warned = false;
    let mut history = vec![IterationRecord {
        iteration: 0,
        gain: gain.clone(),
        cost: e.base,
        lagrangian: phi0,
        phi: phi0,
        grad_norm: f64::NAN,
        lambda: e.oracle(cap),
        residuals: e.residuals.clone(),
        spectral_radius: radius_of(&gain),
        step: 0.0,
        failures: 0,
    }];
    for j in 0..cfg.max_iterations {
        let mut radius = cfg.smoothing_radius;
        let mut halvings = 0;
        let est = loop {
            match zopg_batch(&gain, radius, evaluator, cap, cfg.samples, rng) {
                Ok(est) => break est,
                Err(Error::BatchFailure { .. }) if halvings < cfg.max_halvings => {
                    halvings += 1;
                    radius *= 0.5;
                }
                Err(Error::BatchFailure { samples, radius }) => {
                    return Err(Error::StepRejected {
                        halvings,
                        reason: format!("all {samples} perturbations at radius {radius:e} destabilized iterate {j}"),
                    })
                }
                Err(other) => return Err(other),
            }
        };
        let mut step = cfg.step_size;
        let mut halvings = 0;
        let (next, next_eval) = loop {
            let k = gain.add_scaled(&est.gradient, -step);
            let ek = evaluator.evaluate(&k);
            if ek.feasible && ek.base.is_finite() {
                break (k, ek);
            }
            halvings += 1;
            if halvings > cfg.max_halvings {
                return Err(Error::StepRejected {
                    halvings: cfg.max_halvings,
                    reason: format!("every step down to {step:e} destabilizes iterate {j}"),
                });
            }
            step *= 0.5;
        };
        gain = next;
        e = next_eval;
        let phi = e.phi(cap);
        if phi < best.0 {
            best = (phi, gain.clone());
        }
        if !warned && phi > 10.0 * phi0.abs() {
            warned = true;
            warnings.push(format!("iterate {} has Φ = {phi:e}, beyond ten times the initial value {phi0:e}", j + 1));
        }
        let lambda = e.oracle(cap);
        history.push(IterationRecord {
            iteration: j + 1,
            gain: gain.clone(),
            cost: e.base,
            lagrangian: phi,
            phi,
            grad_norm: est.gradient.norm(),
            lambda,
            residuals: e.residuals.clone(),
            spectral_radius: radius_of(&gain),
            step,
            failures: est.failures,
        });
    }
    let final_lambda = e.oracle(cap);
    Ok(RunRecord {
        final_gain: gain,
        final_lambda,
        best_gain: best.1,
        best_phi: best.0,
        converged: false,
        iterations: cfg.max_iterations,
        history,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    pub is_sp: bool,
    pub grad_norm: f64,
    pub dual_residual: f64,
}

/// Primal residual `‖∇ℒ(K, λ)‖ ≤ ε` and dual residual
/// `‖clamp(λ + ∇λℒ/ℓ̂) − λ‖ ≤ ε/ℓ̂`.
pub fn check_stationarity<P: PhiModel + ?Sized>(
    model: &P,
    gain: &StructuredGain,
    lambda: &[f64],
    cap: f64,
    tolerance: f64,
    smoothness: f64,
) -> Result<StationarityReport> {
    let grads = model.gradients(gain)?;
    if lambda.len() != grads.constraints.len() {
        return Err(Error::Dimension {
            context: "multiplier count",
            expected: grads.constraints.len(),
            actual: lambda.len(),
        });
    }
    let grad_norm = grads.combine(lambda).norm();
    let dual_residual = grads
        .evaluation
        .residuals
        .iter()
        .zip(lambda)
        .map(|(r, l)| {
            let d = (l + r / smoothness).clamp(0.0, cap) - l;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    Ok(StationarityReport {
        is_sp: grad_norm <= tolerance && dual_residual <= tolerance / smoothness,
        grad_norm,
        dual_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSettings {
    pub steps: usize,
    pub step_size: f64,
}

impl InnerSettings {
    /// 200 steps at `1/(2ℓ̂)`, capped by the regularized curvature `ℓ̂ + 1/μ`.
    pub fn for_constants(smoothness: f64, mu: f64) -> Self {
        Self {
            steps: 200,
            step_size: (0.5 / smoothness).min(1.0 / (smoothness + 1.0 / mu)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoreauValue {
    pub value: f64,
    pub prox: StructuredGain,
    pub improved: bool,
}

/// Upper bound on `min_K′ Φ(K′) + ‖K′ − K‖²/(2μ)` from masked subgradient
/// descent started at `K`.
pub fn moreau_envelope<P: PhiModel + ?Sized>(
    model: &P,
    gain: &StructuredGain,
    mu: f64,
    inner: &InnerSettings,
    cap: f64,
    band: f64,
) -> Result<MoreauValue> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("μ must be positive, got {mu}")));
    }
    let start = model.evaluate(gain)?.phi(cap);
    let objective = |k: &StructuredGain, e: &Evaluation| {
        let d = k.distance(gain);
        e.phi(cap) + d * d / (2.0 * mu)
    };
    let mut current = gain.clone();
    let mut value = start;
    let mut step = inner.step_size;
    for _ in 0..inner.steps {
        let Ok(grads) = model.gradients(&current) else { break };
        let offset = current.add_scaled(gain, -1.0).scaled(1.0 / mu);
        let (_, direction) = active_set_direction(&grads, Some(&offset), cap, band);
        if direction.norm() == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let Ok(next) = advance(model, &current, &direction, step, &grads.evaluation.residuals, band, 30) else {
                step *= 0.5;
                continue;
            };
            let Ok(e) = model.evaluate(&next.gain) else {
                step *= 0.5;
                continue;
            };
            let candidate = objective(&next.gain, &e);
            if candidate <= value {
                value = candidate;
                current = next.gain;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(MoreauValue {
        improved: value < start,
        value,
        prox: current,
    })
}

/// Empirical stand-ins for the local Lipschitz, smoothness and radius
/// constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConstants {
    pub lipschitz: f64,
    pub smoothness: f64,
    pub radius: f64,
    /// `1/(2ℓ̂)`.
    pub mu0: f64,
}

/// Probes `K + ρUᵢ` for `n_probes` random unit directions.
pub fn estimate_local_constants<P, R>(
    model: &P,
    gain: &StructuredGain,
    probe_radius: f64,
    n_probes: usize,
    cap: f64,
    rng: &mut R,
) -> Result<LocalConstants>
where
    P: PhiModel + ?Sized,
    R: Rng + ?Sized,
{
    if !(probe_radius > 0.0) || n_probes == 0 {
        return Err(Error::InvalidArgument("probe radius and count must be positive".into()));
    }
    let center = model.gradients(gain)?;
    let lambda = center.evaluation.oracle(cap);
    let dirs: Vec<StructuredGain> = (0..n_probes).map(|_| sample_unit_perturbation(gain.pattern(), rng)).collect();
    let all_stable = |rho: f64| dirs.iter().all(|u| model.evaluate(&gain.add_scaled(u, rho)).is_ok());

    let radius = if all_stable(probe_radius) {
        probe_radius
    } else {
        let mut hi = probe_radius;
        let mut lo = probe_radius / 10.0;
        let mut decades = 0;
        while !all_stable(lo) {
            hi = lo;
            lo /= 10.0;
            decades += 1;
            if decades > 12 {
                return Err(Error::Stability {
                    radius: model.spectral_radius(gain),
                });
            }
        }
        for _ in 0..20 {
            let mid = (lo * hi).sqrt();
            if all_stable(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let mut points = vec![(gain.clone(), center.evaluation.lagrangian(&lambda), center.combine(&lambda))];
    for u in &dirs {
        let k = gain.add_scaled(u, radius);
        let g = model.gradients(&k)?;
        points.push((k, g.evaluation.lagrangian(&lambda), g.combine(&lambda)));
    }
    let mut lipschitz: f64 = 0.0;
    let mut smoothness: f64 = 0.0;
    for (a, (ka, va, ga)) in points.iter().enumerate() {
        lipschitz = lipschitz.max(ga.norm());
        for (kb, vb, gb) in points.iter().skip(a + 1) {
            let d = ka.distance(kb);
            if d > 0.0 {
                lipschitz = lipschitz.max((va - vb).abs() / d);
                smoothness = smoothness.max(ga.distance(gb) / d);
            }
        }
    }
    let smoothness = smoothness.max(f64::MIN_POSITIVE);
    Ok(LocalConstants {
        lipschitz: lipschitz.max(f64::MIN_POSITIVE),
        smoothness,
        radius,
        mu0: 0.5 / smoothness,
    })
}

/// `min(ε²/(4ℓ₀L₀²), ρ₀)`.
pub fn gdmax_step_bound(tolerance: f64, c: &LocalConstants) -> f64 {
    (tolerance * tolerance / (4.0 * c.smoothness * c.lipschitz * c.lipschitz)).min(c.radius)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdmaxParameters {
    pub smoothing_radius: f64,
    pub step_size: f64,
    pub iterations: usize,
}

/// Largest admissible `r` and `η`, and the matching `J`, given `Φ_μ₀(K⁰)`.
pub fn sgdmax_parameters(
    c: &LocalConstants,
    tolerance: f64,
    alpha: f64,
    samples: usize,
    envelope_at_start: f64,
) -> SgdmaxParameters {
    let m = samples as f64;
    let r = c.radius.min(c.lipschitz * m.sqrt() / c.smoothness);
    let l2 = c.lipschitz * c.lipschitz + c.smoothness * c.smoothness * r * r / m;
    let eta = tolerance * tolerance / (alpha * c.smoothness * l2);
    let j = 2.0 * (10.0 * alpha).sqrt() * envelope_at_start / (eta * tolerance * tolerance);
    SgdmaxParameters {
        smoothing_radius: r,
        step_size: eta,
        iterations: if j.is_finite() && j > 0.0 { j.ceil() as usize } else { 0 },
    }
}

#[cfg(test)]
mod tests {
    use super::hooks::{Linear, Quadratic};
    use super::*;
    use crate::gains::SparsityPattern;
    use crate::objective::{ConstraintSpec, CostSpec, ExactEvaluator};
    use crate::rng::stream;
    use crate::system::{LtiSystem, NoiseModel};
    use nalgebra::{DMatrix, DVector};

    fn scalar(constraints: Vec<ConstraintSpec>) -> Problem {
        let sys = LtiSystem::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let noise = NoiseModel::gaussian(DVector::zeros(1), &DMatrix::identity(1, 1)).unwrap();
        let base = CostSpec::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
        Problem::new(sys, noise, SparsityPattern::full(1, 1), base, constraints).unwrap()
    }

    fn k1(v: f64) -> StructuredGain {
        StructuredGain::new(SparsityPattern::full(1, 1), DMatrix::from_element(1, 1, v)).unwrap()
    }

    fn cfg(step: f64, tol: f64, iters: usize) -> OptimizerConfig {
        OptimizerConfig {
            step_size: step,
            tolerance: tol,
            max_iterations: iters,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn scalar_gdmax_reaches_riccati_gain() {
        let p = scalar(vec![]);
        let run = gdmax(&p, &k1(0.0), &cfg(0.05, 1e-6, 10_000)).unwrap();
        assert!(run.converged);
        let k = run.final_gain.values()[(0, 0)];
        assert!((k - 0.26557).abs() < 1e-4, "{k}");
        assert!((run.last().cost - 1.13278).abs() < 1e-4);
    }

    #[test]
    fn zero_iterations_returns_start() {
        let p = scalar(vec![]);
        let run = gdmax(&p, &k1(0.1), &cfg(0.05, 1e-12, 0)).unwrap();
        assert!(!run.converged);
        assert_eq!(run.final_gain, k1(0.1));
        assert_eq!(run.history.len(), 1);
    }

    #[test]
    fn slack_constraint_leaves_trajectory_unchanged() {
        let slack = ConstraintSpec {
            cost: CostSpec::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap(),
            bound: 100.0,
        };
        let free = gdmax(&scalar(vec![]), &k1(0.0), &cfg(0.05, 1e-6, 500)).unwrap();
        let held = gdmax(&scalar(vec![slack]), &k1(0.0), &cfg(0.05, 1e-6, 500)).unwrap();
        assert_eq!(free.history.len(), held.history.len());
        for (a, b) in free.history.iter().zip(&held.history) {
            assert_eq!(a.gain, b.gain);
        }
    }

    #[test]
    fn stationarity_examples() {
        let p = scalar(vec![]);
        let dare = crate::numlin::solve_dare(p.system.a(), p.system.b(), &p.base.q, &p.base.r).unwrap();
        let rep = check_stationarity(&p, &k1(dare.gain[(0, 0)]), &[], 10.0, 1e-6, 1.0).unwrap();
        assert!(rep.is_sp && rep.grad_norm <= 1e-6);

        let tight = ConstraintSpec {
            cost: CostSpec::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap(),
            bound: 0.5,
        };
        let p = scalar(vec![tight]);
        let rep = check_stationarity(&p, &k1(0.2), &[0.0], 10.0, 1e-4, 2.0).unwrap();
        assert!(!rep.is_sp && rep.dual_residual > 0.0);

        let slack = ConstraintSpec {
            cost: CostSpec::new(DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap(),
            bound: 50.0,
        };
        let rep = check_stationarity(&scalar(vec![slack]), &k1(0.2), &[0.0], 10.0, 1e-4, 2.0).unwrap();
        assert_eq!(rep.dual_residual, 0.0);
    }

    #[test]
    fn moreau_of_quadratic_hook() {
        let pattern = SparsityPattern::full(2, 2);
        let q = Quadratic {
            pattern: pattern.clone(),
            curvature: 1.0,
        };
        let k = StructuredGain::from_nonzeros(pattern, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        for mu in [0.1, 0.5, 2.0] {
            let inner = InnerSettings::for_constants(1.0, mu);
            let m = moreau_envelope(&q, &k, mu, &inner, 1.0, 0.0).unwrap();
            let expected = k.norm() * k.norm() / (2.0 * (1.0 + mu));
            assert!((m.value - expected).abs() < 1e-9 * expected, "{mu}: {} vs {expected}", m.value);
            assert!(m.value <= q.evaluate(&k).unwrap().base + 1e-12);
        }
    }

    #[test]
    fn moreau_at_minimizer_is_fixed() {
        let p = scalar(vec![]);
        let dare = crate::numlin::solve_dare(p.system.a(), p.system.b(), &p.base.q, &p.base.r).unwrap();
        let k = k1(dare.gain[(0, 0)]);
        let m = moreau_envelope(&p, &k, 0.05, &InnerSettings::for_constants(5.0, 0.05), 10.0, 0.0).unwrap();
        assert!(m.prox.distance(&k) <= 1e-4);
    }

    #[test]
    fn constant_probes() {
        let pattern = SparsityPattern::full(2, 3);
        let q = Quadratic {
            pattern: pattern.clone(),
            curvature: 2.0,
        };
        let k = StructuredGain::from_nonzeros(pattern.clone(), &[0.3; 6]).unwrap();
        let c = estimate_local_constants(&q, &k, 0.1, 8, 1.0, &mut stream(0, 4, 0)).unwrap();
        assert!((c.smoothness - 2.0).abs() < 0.2);
        assert_eq!(c.radius, 0.1);
        assert!((c.mu0 - 0.25).abs() < 0.03);

        let slope = StructuredGain::from_nonzeros(pattern.clone(), &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]).unwrap();
        let lin = Linear { slope: slope.clone() };
        let c = estimate_local_constants(&lin, &k, 0.1, 8, 1.0, &mut stream(0, 4, 1)).unwrap();
        assert!((c.lipschitz - slope.norm()).abs() < 0.1 * slope.norm());

        let p = scalar(vec![]);
        let c = estimate_local_constants(&p, &k1(0.2), 1e-3, 4, 1.0, &mut stream(0, 4, 2)).unwrap();
        assert_eq!(c.radius, 1e-3);
        let c = estimate_local_constants(&p, &k1(0.2), 5.0, 4, 1.0, &mut stream(0, 4, 2)).unwrap();
        assert!(c.radius < 1.3 && c.radius > 0.1, "{}", c.radius);
    }

    #[test]
    fn sgdmax_is_deterministic_and_descends() {
        let p = scalar(vec![]);
        let config = OptimizerConfig {
            step_size: 0.01,
            smoothing_radius: 0.05,
            samples: 50,
            max_iterations: 100,
            ..OptimizerConfig::default()
        };
        let run = |seed| {
            let mut eval = ExactEvaluator::new(&p);
            sgdmax(&mut eval, &k1(0.0), &config, &mut stream(seed, 1, 0), Some(&p)).unwrap()
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.history.len(), 101);
        assert!(a.last().cost < a.history[0].cost);
        let mut eval = ExactEvaluator::new(&p);
        let free = OptimizerConfig {
            mode: Mode::ModelFree,
            ..config
        };
        assert!(sgdmax(&mut eval, &k1(0.0), &free, &mut stream(0, 1, 0), None).is_err());
    }

    #[test]
    fn parameter_rules() {
        let c = LocalConstants {
            lipschitz: 2.0,
            smoothness: 4.0,
            radius: 0.5,
            mu0: 0.125,
        };
        assert!((gdmax_step_bound(0.1, &c) - 0.01 / 64.0).abs() < 1e-15);
        let s = sgdmax_parameters(&c, 0.1, 40.0, 100, 1.0);
        assert_eq!(s.smoothing_radius, 0.5);
        let expected_eta = 0.01 / (40.0 * 4.0 * (4.0 + 16.0 * 0.25 / 100.0));
        assert!((s.step_size - expected_eta).abs() < 1e-15);
        assert!(s.iterations > 0);
    }
}
