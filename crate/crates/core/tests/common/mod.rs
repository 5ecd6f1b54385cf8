#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rclqr_core::numlin::spectral_radius;
use rclqr_core::{CostSpec, LtiSystem, NoiseModel, Problem, SparsityPattern};

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random matrix rescaled to spectral radius `radius`.
pub fn stable_matrix<R: Rng>(n: usize, radius: f64, rng: &mut R) -> DMatrix<f64> {
    let a = gaussian_matrix(n, n, rng);
    let rho = spectral_radius(&a).unwrap();
    a * (radius / rho)
}

pub fn spd<R: Rng>(n: usize, floor: f64, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

/// Open-loop stable `n`-state, `m`-input problem with full feedback.
pub fn random_problem<R: Rng>(n: usize, m: usize, rng: &mut R) -> Problem {
    let radius = rng.random_range(0.3..0.9);
    let sys = LtiSystem::new(stable_matrix(n, radius, rng), gaussian_matrix(n, m, rng)).unwrap();
    let noise = NoiseModel::gaussian(DVector::zeros(n), &spd(n, 0.1, rng)).unwrap();
    let base = CostSpec::new(spd(n, 0.5, rng), spd(m, 0.5, rng)).unwrap();
    Problem::new(sys, noise, SparsityPattern::full(m, n), base, vec![]).unwrap()
}

/// `x⁺ = 0.5x + u + w`, `w ~ N(0, 1)`, `Q = R = 1`.
pub fn scalar_problem() -> Problem {
    let one = DMatrix::from_element(1, 1, 1.0);
    let sys = LtiSystem::new(DMatrix::from_element(1, 1, 0.5), one.clone()).unwrap();
    let noise = NoiseModel::gaussian(DVector::zeros(1), &one).unwrap();
    let base = CostSpec::new(one.clone(), one).unwrap();
    Problem::new(sys, noise, SparsityPattern::full(1, 1), base, vec![]).unwrap()
}

/// Two-state, one-input plant with the risk constraint set at `fraction` of the
/// Riccati gain's reformulated value.
pub fn two_state_problem(fraction: f64) -> (Problem, rclqr_core::StructuredGain) {
    use rclqr_core::numlin::solve_dare;
    use rclqr_core::objective::{build_risk_constraint, risk_offset};
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.3, 0.0, 0.8]);
    let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    let sys = LtiSystem::new(a.clone(), b.clone()).unwrap();
    let noise = NoiseModel::gaussian(DVector::zeros(2), &(DMatrix::identity(2, 2) * 0.1)).unwrap();
    let base = CostSpec::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
    let dare = solve_dare(&a, &b, &base.q, &base.r).unwrap();
    let k0 = rclqr_core::StructuredGain::new(SparsityPattern::full(1, 2), dare.gain).unwrap();
    let probe = build_risk_constraint(&base.q, 1, &noise, 0.0).unwrap();
    let rc = rclqr_core::objective::average_cost_exact(&sys, &noise, &k0, &probe.cost).unwrap();
    let delta = fraction * rc + risk_offset(&base.q, &noise).unwrap();
    let constraint = build_risk_constraint(&base.q, 1, &noise, delta).unwrap();
    let p = Problem::new(sys, noise, SparsityPattern::full(1, 2), base, vec![constraint]).unwrap();
    (p, k0)
}
