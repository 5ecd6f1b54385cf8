//! Exact policy gradients over the structured entries and the zero-order
//! estimator built from black-box Lagrangian values.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::gains::{project_structure, sample_unit_perturbation, StructuredGain};
use crate::numlin::{solve_dlyap_with, LyapunovSettings};
use crate::objective::{stationary_moments, ConstraintSpec, CostSpec, Evaluation, Evaluator, Problem, StationaryMoments};
use crate::system::{LtiSystem, NoiseModel};

/// Averaged ZOPG output.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub gradient: StructuredGain,
    pub samples: usize,
    pub radius: f64,
    /// Perturbed gains that destabilized the loop and were dropped.
    pub failures: usize,
    /// Mean of the sampled `ℒ(K + rU, λ′)` over survivors.
    pub mean_value: f64,
}

/// Gradients of the base cost and of each constraint cost at one gain, so
/// that `∇ℒ(K, λ) = g₀ + Σ λᵢ gᵢ` for any `λ`.
#[derive(Debug, Clone)]
pub struct SpecGradients {
    pub evaluation: Evaluation,
    pub base: StructuredGain,
    pub constraints: Vec<StructuredGain>,
}

impl SpecGradients {
    pub fn combine(&self, lambda: &[f64]) -> StructuredGain {
        assert_eq!(lambda.len(), self.constraints.len(), "one multiplier per constraint");
        let mut out = self.base.clone();
        for (g, &l) in self.constraints.iter().zip(lambda) {
            if l != 0.0 {
                out.add_scaled_mut(g, l);
            }
        }
        out
    }
}

fn mean_cost(sys: &LtiSystem, mean_noise: &DVector<f64>, gain: &DMatrix<f64>, spec: &CostSpec) -> Result<f64> {
    let n = sys.n();
    let lhs = DMatrix::<f64>::identity(n, n) - sys.closed_loop(gain);
    let x = lhs.lu().solve(mean_noise).ok_or_else(|| Error::Numerical {
        context: "stationary mean",
        detail: "I − F is singular".into(),
    })?;
    let weight = &spec.q + gain.transpose() * &spec.r * gain;
    Ok(x.dot(&(&weight * &x)) + spec.linear.dot(&x))
}

/// Gradient of one spec's stationary cost given precomputed moments.
fn spec_gradient(
    sys: &LtiSystem,
    noise: &NoiseModel,
    moments: &StationaryMoments,
    gain: &StructuredGain,
    spec: &CostSpec,
    settings: &LyapunovSettings,
    fd_step: f64,
) -> Result<StructuredGain> {
    let k = gain.values();
    let f = &moments.closed_loop;
    let rk = &spec.r * k;
    let weight = &spec.q + k.transpose() * &rk;
    let p = solve_dlyap_with(f, &weight, true, settings)?;
    let dense = (rk - sys.b().transpose() * &p * f) * &moments.covariance * 2.0;
    let mut out = project_structure(&dense, gain.pattern())?.into_values();

    let mean_noise = &noise.statistics().mean;
    if mean_noise.iter().any(|&v| v != 0.0) {
        let mut probe = k.clone();
        for (i, j) in gain.pattern().positions() {
            let original = probe[(i, j)];
            probe[(i, j)] = original + fd_step;
            let up = mean_cost(sys, mean_noise, &probe, spec)?;
            probe[(i, j)] = original - fd_step;
            let down = mean_cost(sys, mean_noise, &probe, spec)?;
            probe[(i, j)] = original;
            out[(i, j)] += (up - down) / (2.0 * fd_step);
        }
    }
    StructuredGain::new(gain.pattern().clone(), out)
}

/// `∇𝒦ℒ(K, λ)` from the exact model: the covariance-driven part is analytic,
/// the mean-driven part uses central differences.
pub fn exact_policy_gradient(
    sys: &LtiSystem,
    noise: &NoiseModel,
    gain: &StructuredGain,
    base: &CostSpec,
    constraints: &[ConstraintSpec],
    lambda: &[f64],
) -> Result<StructuredGain> {
    check_dim("multiplier count", constraints.len(), lambda.len())?;
    let settings = LyapunovSettings::default();
    let moments = stationary_moments(sys, noise, gain.values(), &settings)?;
    let combined = CostSpec::combine(base, constraints, lambda);
    spec_gradient(sys, noise, &moments, gain, &combined, &settings, 1e-6)
}

impl Problem {
    /// Values and per-spec gradients at `gain`, sharing one moment solve.
    pub fn spec_gradients(&self, gain: &StructuredGain) -> Result<SpecGradients> {
        let moments = self.moments(gain)?;
        let evaluation = self.evaluation_from(&moments, gain);
        let grad = |spec: &CostSpec| {
            spec_gradient(
                &self.system,
                &self.noise,
                &moments,
                gain,
                spec,
                &self.numerics.lyapunov,
                self.numerics.fd_step,
            )
        };
        let base = grad(&self.base)?;
        let constraints = self.constraints.iter().map(|c| grad(&c.cost)).collect::<Result<Vec<_>>>()?;
        Ok(SpecGradients {
            evaluation,
            base,
            constraints,
        })
    }

    pub fn policy_gradient(&self, gain: &StructuredGain, lambda: &[f64]) -> Result<StructuredGain> {
        Ok(self.spec_gradients(gain)?.combine(lambda))
    }
}

/// Single-sample estimator `(n𝒦/r) ℒ(K + rU, λ′) U` with `λ′` from the
/// max-oracle at the perturbed gain. A destabilizing perturbation yields a
/// zero gradient and `failures = 1`.
pub fn zopg<E, R>(gain: &StructuredGain, radius: f64, evaluator: &mut E, cap: f64, rng: &mut R) -> GradientEstimate
where
    E: Evaluator + ?Sized,
    R: Rng + ?Sized,
{
    assert!(radius > 0.0, "smoothing radius must be positive");
    let scale = gain.pattern().nnz() as f64 / radius;
    let u = sample_unit_perturbation(gain.pattern(), rng);
    let value = evaluator.evaluate(&gain.add_scaled(&u, radius)).phi(cap);
    if value.is_finite() {
        GradientEstimate {
            gradient: u.scaled(scale * value),
            samples: 1,
            radius,
            failures: 0,
            mean_value: value,
        }
    } else {
        GradientEstimate {
            gradient: StructuredGain::zeros(gain.pattern().clone()),
            samples: 1,
            radius,
            failures: 1,
            mean_value: f64::INFINITY,
        }
    }
}

/// Mean of `samples` single-sample estimates over the survivors.
pub fn zopg_batch<E, R>(
    gain: &StructuredGain,
    radius: f64,
    evaluator: &mut E,
    cap: f64,
    samples: usize,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    E: Evaluator + ?Sized,
    R: Rng + ?Sized,
{
    if samples == 0 {
        return Err(Error::InvalidArgument("ZOPG batch needs at least one sample".into()));
    }
    let nnz = gain.pattern().nnz();
    let mut sum = vec![0.0; nnz];
    let mut value_sum = 0.0;
    let mut failures = 0;
    for _ in 0..samples {
        let est = zopg(gain, radius, evaluator, cap, rng);
        if est.failures > 0 {
            failures += 1;
            continue;
        }
        for (s, v) in sum.iter_mut().zip(est.gradient.nonzeros()) {
            *s += v;
        }
        value_sum += est.mean_value;
    }
    let survivors = samples - failures;
    if survivors == 0 {
        return Err(Error::BatchFailure { samples, radius });
    }
    let inv = 1.0 / survivors as f64;
    for s in sum.iter_mut() {
        *s *= inv;
    }
    Ok(GradientEstimate {
        gradient: StructuredGain::from_nonzeros(gain.pattern().clone(), &sum)?,
        samples,
        radius,
        failures,
        mean_value: value_sum * inv,
    })
}
