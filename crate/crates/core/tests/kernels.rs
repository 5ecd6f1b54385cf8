mod common;

use approx::assert_relative_eq;
use common::{gaussian_matrix, spd, stable_matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rclqr_core::numlin::{dare_residual, solve_dare, solve_dare_with, solve_dlyap, trace_product, RiccatiMethod, RiccatiSettings};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lyapunov_residual_is_tiny(seed in any::<u64>(), n in 1usize..20, radius in 0.05f64..0.97) {
        let mut r = rng(seed);
        let f = stable_matrix(n, radius, &mut r);
        let s = spd(n, 0.0, &mut r);
        for transpose in [false, true] {
            let x = solve_dlyap(&f, &s, transpose).unwrap();
            let fx = if transpose { f.transpose() * &x * &f } else { &f * &x * f.transpose() };
            let residual = (&x - fx - &s).norm() / (1.0 + x.norm());
            prop_assert!(residual <= 1e-9, "residual {residual}");
            prop_assert!((&x - x.transpose()).norm() <= 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn lyapunov_duality(seed in any::<u64>(), n in 1usize..10) {
        let mut r = rng(seed);
        let f = stable_matrix(n, 0.8, &mut r);
        let s1 = spd(n, 0.1, &mut r);
        let s2 = spd(n, 0.1, &mut r);
        let sigma = solve_dlyap(&f, &s1, false).unwrap();
        let p = solve_dlyap(&f, &s2, true).unwrap();
        let lhs = trace_product(&s2, &sigma);
        let rhs = trace_product(&p, &s1);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn dare_solution_is_stationary_and_stabilizing(seed in any::<u64>(), n in 1usize..8, m in 1usize..4) {
        let mut r = rng(seed);
        let a = gaussian_matrix(n, n, &mut r) * 0.6;
        let b = gaussian_matrix(n, m, &mut r);
        let q = spd(n, 0.1, &mut r);
        let rr = spd(m, 0.1, &mut r);
        let sol = solve_dare(&a, &b, &q, &rr).unwrap();
        prop_assert!(dare_residual(&a, &b, &q, &rr, &sol.p) <= 1e-9);
        let closed = &a - &b * &sol.gain;
        prop_assert!(rclqr_core::numlin::spectral_radius(&closed).unwrap() < 1.0);
    }
}

#[test]
fn scalar_dare_value() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let sol = solve_dare(&DMatrix::from_element(1, 1, 0.5), &one, &one, &one).unwrap();
    assert_relative_eq!(sol.p[(0, 0)], 1.132782218537319, epsilon = 1e-9);
    assert_relative_eq!(sol.gain[(0, 0)], 0.2655644370746375, epsilon = 1e-9);
}

#[test]
fn riccati_methods_agree() {
    let mut r = rng(7);
    let a = stable_matrix(5, 1.2, &mut r);
    let b = gaussian_matrix(5, 2, &mut r);
    let q = spd(5, 0.2, &mut r);
    let rr = spd(2, 0.2, &mut r);
    let doubling = solve_dare(&a, &b, &q, &rr).unwrap();
    let settings = RiccatiSettings {
        method: RiccatiMethod::FixedPoint,
        tolerance: 1e-13,
        ..Default::default()
    };
    let fixed = solve_dare_with(&a, &b, &q, &rr, &settings).unwrap();
    assert!((&doubling.p - &fixed.p).norm() <= 1e-8 * doubling.p.norm());
}

#[test]
fn unstable_lyapunov_is_rejected() {
    let f = DMatrix::from_element(1, 1, 1.01);
    assert!(solve_dlyap(&f, &DMatrix::identity(1, 1), false).is_err());
}

#[test]
fn zoh_and_euler_agree_to_second_order() {
    use rclqr_core::system::{discretize, Discretization};
    let mut r = rng(11);
    let ac = gaussian_matrix(4, 4, &mut r);
    let bu = gaussian_matrix(4, 2, &mut r);
    let bw = gaussian_matrix(4, 1, &mut r);
    let gap = |dt: f64| {
        let z = discretize(&ac, &bu, &bw, dt, Discretization::ZeroOrderHold).unwrap();
        let e = discretize(&ac, &bu, &bw, dt, Discretization::Euler).unwrap();
        ((z.system.a() - e.system.a()).norm() + (z.system.b() - e.system.b()).norm()) / dt
    };
    let ratio = gap(1e-2) / gap(1e-3);
    assert!((ratio - 10.0).abs() < 0.5, "ratio {ratio}");
}
