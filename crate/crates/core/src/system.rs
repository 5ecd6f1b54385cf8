//! Discrete-time LTI dynamics `x⁺ = A x + B u + w`, noise models and rollouts.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::gains::StructuredGain;
use crate::numlin::{expm, symmetrize, trace_product};

/// State norm beyond which a rollout is declared divergent.
pub const DIVERGENCE_CAP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        check_dim("LtiSystem (A square)", a.nrows(), a.ncols())?;
        check_dim("LtiSystem (B rows)", a.nrows(), b.nrows())?;
        if a.nrows() == 0 || b.ncols() == 0 {
            return Err(Error::InvalidArgument("system dimensions must be positive".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("system matrices must be finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Closed-loop matrix `A − B K`.
    pub fn closed_loop(&self, gain: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a - &self.b * gain
    }

    /// `A x + B u + w`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n(), "state dimension");
        assert_eq!(u.len(), self.m(), "input dimension");
        assert_eq!(w.len(), self.n(), "noise dimension");
        let mut out = DVector::zeros(self.n());
        self.step_into(x, u, w, &mut out);
        out
    }

    pub(crate) fn step_into(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        out.gemv(1.0, &self.a, x, 0.0);
        out.gemv(1.0, &self.b, u, 1.0);
        *out += w;
    }
}

/// Law of the additive disturbance.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDistribution {
    Zero { dim: usize },
    /// `w = mean + factor · ξ` with `ξ ~ N(0, I)`; covariance `factor·factorᵀ`.
    Gaussian { mean: DVector<f64>, factor: DMatrix<f64> },
    /// Independent coordinates `mean_i + U(−h_i, h_i)`.
    Uniform { mean: DVector<f64>, half_widths: DVector<f64> },
    /// Deterministic sum of steps: `w_t = Σ_{t_s ≤ t} v_s`.
    StepLoad { dim: usize, steps: Vec<(usize, DVector<f64>)> },
}

/// Moments `w̄`, `W`, `M₃`, `m₄` (the last two relative to `weight`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStatistics {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub third: DVector<f64>,
    pub fourth: f64,
    pub weight: DMatrix<f64>,
}

impl NoiseStatistics {
    fn zero(dim: usize, weight: DMatrix<f64>) -> Self {
        Self {
            mean: DVector::zeros(dim),
            covariance: DMatrix::zeros(dim, dim),
            third: DVector::zeros(dim),
            fourth: 0.0,
            weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    distribution: NoiseDistribution,
    stats: NoiseStatistics,
}

impl NoiseModel {
    pub fn zero(dim: usize) -> Self {
        Self::from_distribution(NoiseDistribution::Zero { dim }, DMatrix::identity(dim, dim))
            .expect("zero model is always valid")
    }

    pub fn gaussian(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        check_dim("gaussian covariance", n, covariance.nrows())?;
        check_dim("gaussian covariance", n, covariance.ncols())?;
        let mut cov = covariance.clone();
        symmetrize(&mut cov);
        let eig = nalgebra::SymmetricEigen::try_new(cov, f64::EPSILON, 0).ok_or_else(|| {
            Error::Numerical {
                context: "gaussian covariance factor",
                detail: "eigendecomposition failed".into(),
            }
        })?;
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let mut factor = eig.eigenvectors.clone();
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < -1e-10 * scale {
                return Err(Error::InvalidArgument("covariance must be positive semi-definite".into()));
            }
            let s = num_traits::Float::sqrt(lam.max(0.0));
            factor.column_mut(j).scale_mut(s);
        }
        Self::gaussian_factored(mean, factor)
    }

    pub fn gaussian_factored(mean: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        check_dim("gaussian factor rows", mean.len(), factor.nrows())?;
        let n = mean.len();
        Self::from_distribution(NoiseDistribution::Gaussian { mean, factor }, DMatrix::identity(n, n))
    }

    pub fn uniform(mean: DVector<f64>, half_widths: DVector<f64>) -> Result<Self> {
        check_dim("uniform half widths", mean.len(), half_widths.len())?;
        if half_widths.iter().any(|&h| !(h >= 0.0) || !h.is_finite()) {
            return Err(Error::InvalidArgument("half widths must be finite and nonnegative".into()));
        }
        let n = mean.len();
        Self::from_distribution(NoiseDistribution::Uniform { mean, half_widths }, DMatrix::identity(n, n))
    }

    pub fn step_load(dim: usize, mut steps: Vec<(usize, DVector<f64>)>) -> Result<Self> {
        for (_, v) in &steps {
            check_dim("step load magnitude", dim, v.len())?;
        }
        steps.sort_by_key(|(t, _)| *t);
        Self::from_distribution(NoiseDistribution::StepLoad { dim, steps }, DMatrix::identity(dim, dim))
    }

    fn from_distribution(distribution: NoiseDistribution, weight: DMatrix<f64>) -> Result<Self> {
        let stats = analytic_statistics(&distribution, weight)?;
        Ok(Self { distribution, stats })
    }

    /// Same distribution with `M₃`, `m₄` recomputed for a new weighting.
    pub fn reweighted(&self, weight: &DMatrix<f64>) -> Result<Self> {
        Self::from_distribution(self.distribution.clone(), weight.clone())
    }

    pub fn distribution(&self) -> &NoiseDistribution {
        &self.distribution
    }

    pub fn statistics(&self) -> &NoiseStatistics {
        &self.stats
    }

    pub fn dim(&self) -> usize {
        self.stats.mean.len()
    }

    /// One draw. `t` is only consulted by the time-indexed step-load law.
    pub fn sample<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        let mut scratch = Vec::new();
        self.sample_into(t, rng, &mut out, &mut scratch);
        out
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(
        &self,
        t: usize,
        rng: &mut R,
        out: &mut DVector<f64>,
        scratch: &mut Vec<f64>,
    ) {
        match &self.distribution {
            NoiseDistribution::Zero { .. } => out.fill(0.0),
            NoiseDistribution::Gaussian { mean, factor } => {
                let k = factor.ncols();
                scratch.clear();
                scratch.extend((0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
                out.copy_from(mean);
                for (j, &xi) in scratch.iter().enumerate() {
                    out.axpy(xi, &factor.column(j), 1.0);
                }
            }
            NoiseDistribution::Uniform { mean, half_widths } => {
                for i in 0..mean.len() {
                    let h = half_widths[i];
                    let u: f64 = rng.random::<f64>();
                    out[i] = mean[i] + h * (2.0 * u - 1.0);
                }
            }
            NoiseDistribution::StepLoad { steps, .. } => {
                out.fill(0.0);
                for (ts, v) in steps {
                    if *ts <= t {
                        *out += v;
                    }
                }
            }
        }
    }
}

fn analytic_statistics(dist: &NoiseDistribution, weight: DMatrix<f64>) -> Result<NoiseStatistics> {
    let n = match dist {
        NoiseDistribution::Zero { dim } | NoiseDistribution::StepLoad { dim, .. } => *dim,
        NoiseDistribution::Gaussian { mean, .. } | NoiseDistribution::Uniform { mean, .. } => mean.len(),
    };
    check_dim("noise weight rows", n, weight.nrows())?;
    check_dim("noise weight cols", n, weight.ncols())?;
    Ok(match dist {
        // The step schedule is a deterministic evaluation input, not a stationary law.
        NoiseDistribution::Zero { .. } | NoiseDistribution::StepLoad { .. } => {
            NoiseStatistics::zero(n, weight)
        }
        NoiseDistribution::Gaussian { mean, factor } => {
            let mut cov = factor * factor.transpose();
            symmetrize(&mut cov);
            let wq = &cov * &weight;
            let fourth = 2.0 * trace_product(&wq, &wq);
            NoiseStatistics {
                mean: mean.clone(),
                covariance: cov,
                third: DVector::zeros(n),
                fourth,
                weight,
            }
        }
        NoiseDistribution::Uniform { mean, half_widths } => {
            let var: Vec<f64> = half_widths.iter().map(|h| h * h / 3.0).collect();
            let quartic: Vec<f64> = half_widths.iter().map(|h| h * h * h * h / 5.0).collect();
            // Var(eᵀQe) for independent zero-mean coordinates.
            let mut fourth = 0.0;
            for i in 0..n {
                let qii = weight[(i, i)];
                fourth += qii * qii * (quartic[i] - var[i] * var[i]);
                for j in 0..n {
                    if i != j {
                        let qij = 0.5 * (weight[(i, j)] + weight[(j, i)]);
                        fourth += 2.0 * qij * qij * var[i] * var[j];
                    }
                }
            }
            NoiseStatistics {
                mean: mean.clone(),
                covariance: DMatrix::from_diagonal(&DVector::from_vec(var)),
                third: DVector::zeros(n),
                fourth,
                weight,
            }
        }
    })
}

/// Plug-in moments; the empirical mean and covariance are used inside `M₃`
/// and `m₄`.
pub fn estimate_noise_statistics(samples: &[DVector<f64>], weight: &DMatrix<f64>) -> Result<NoiseStatistics> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let n = samples[0].len();
    check_dim("noise weight", n, weight.nrows())?;
    let count = samples.len() as f64;
    let mut mean = DVector::zeros(n);
    for s in samples {
        check_dim("noise sample", n, s.len())?;
        mean += s;
    }
    mean /= count;
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        let e = s - &mean;
        cov.ger(1.0, &e, &e, 1.0);
    }
    cov /= count;
    symmetrize(&mut cov);
    let tr_wq = trace_product(&cov, weight);
    let mut third = DVector::zeros(n);
    let mut fourth = 0.0;
    for s in samples {
        let e = s - &mean;
        let quad = e.dot(&(weight * &e));
        third.axpy(quad, &e, 1.0);
        let d = quad - tr_wq;
        fourth += d * d;
    }
    third /= count;
    fourth /= count;
    Ok(NoiseStatistics {
        mean,
        covariance: cov,
        third,
        fourth,
        weight: weight.clone(),
    })
}

/// States, actions and noises of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
    pub noises: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

/// Drive `u_t = −K x_t` for `horizon` steps, calling `visit(t, x_t, u_t, w_t)`
/// for each `t`.
pub fn simulate<R, F>(
    sys: &LtiSystem,
    gain: &StructuredGain,
    x0: &DVector<f64>,
    horizon: usize,
    noise: &NoiseModel,
    rng: &mut R,
    mut visit: F,
) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &DVector<f64>, &DVector<f64>, &DVector<f64>),
{
    check_dim("rollout x0", sys.n(), x0.len())?;
    check_dim("rollout gain rows", sys.m(), gain.values().nrows())?;
    check_dim("rollout gain cols", sys.n(), gain.values().ncols())?;
    check_dim("rollout noise", sys.n(), noise.dim())?;
    let k = gain.values();
    let mut x = x0.clone();
    let mut next = DVector::zeros(sys.n());
    let mut u = DVector::zeros(sys.m());
    let mut w = DVector::zeros(sys.n());
    let mut scratch = Vec::new();
    for t in 0..horizon {
        let norm = x.norm();
        if !(norm <= DIVERGENCE_CAP) {
            return Err(Error::Divergence { step: t, cap: DIVERGENCE_CAP });
        }
        u.gemv(-1.0, k, &x, 0.0);
        noise.sample_into(t, rng, &mut w, &mut scratch);
        visit(t, &x, &u, &w);
        sys.step_into(&x, &u, &w, &mut next);
        core::mem::swap(&mut x, &mut next);
    }
    Ok(())
}

pub fn rollout<R: Rng + ?Sized>(
    sys: &LtiSystem,
    gain: &StructuredGain,
    x0: &DVector<f64>,
    horizon: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        noises: Vec::with_capacity(horizon),
    };
    simulate(sys, gain, x0, horizon, noise, rng, |_, x, u, w| {
        traj.states.push(x.clone());
        traj.actions.push(u.clone());
        traj.noises.push(w.clone());
    })?;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    Euler,
    ZeroOrderHold,
}

/// Discrete system plus the map from the continuous disturbance input to the
/// per-step noise `w`.
#[derive(Debug, Clone)]
pub struct Discretized {
    pub system: LtiSystem,
    pub noise_map: DMatrix<f64>,
}

pub fn discretize(
    ac: &DMatrix<f64>,
    bu: &DMatrix<f64>,
    bw: &DMatrix<f64>,
    dt: f64,
    method: Discretization,
) -> Result<Discretized> {
    let n = ac.nrows();
    check_dim("discretize (A square)", n, ac.ncols())?;
    check_dim("discretize (Bu rows)", n, bu.nrows())?;
    check_dim("discretize (Bw rows)", n, bw.nrows())?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let (m, k) = (bu.ncols(), bw.ncols());
    let (a, b, g) = match method {
        Discretization::Euler => (DMatrix::identity(n, n) + ac * dt, bu * dt, bw * dt),
        Discretization::ZeroOrderHold => {
            let size = n + m + k;
            let mut aug = DMatrix::zeros(size, size);
            aug.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
            aug.view_mut((0, n), (n, m)).copy_from(&(bu * dt));
            aug.view_mut((0, n + m), (n, k)).copy_from(&(bw * dt));
            let e = expm(&aug);
            (
                e.view((0, 0), (n, n)).into_owned(),
                e.view((0, n), (n, m)).into_owned(),
                e.view((0, n + m), (n, k)).into_owned(),
            )
        }
    };
    Ok(Discretized {
        system: LtiSystem::new(a, b)?,
        noise_map: g,
    })
}

/// `n` i.i.d. draws.
pub fn draw_samples<R: Rng + ?Sized>(noise: &NoiseModel, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let mut out = vec![DVector::zeros(noise.dim()); count];
    let mut scratch = Vec::new();
    for (t, o) in out.iter_mut().enumerate() {
        noise.sample_into(t, rng, o, &mut scratch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gains::SparsityPattern;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn scalar(a: f64, b: f64) -> LtiSystem {
        LtiSystem::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)).unwrap()
    }

    fn scalar_gain(k: f64) -> StructuredGain {
        StructuredGain::new(SparsityPattern::full(1, 1), DMatrix::from_element(1, 1, k)).unwrap()
    }

    #[test]
    fn step_examples() {
        let sys = LtiSystem::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let z = DVector::zeros(2);
        assert_eq!(sys.step(&z, &z, &z), z);

        let sys = LtiSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let x = DVector::from_vec(vec![3.0, -7.0]);
        assert_eq!(sys.step(&x, &e1, &z), e1);

        let out = scalar(0.5, 1.0).step(
            &DVector::from_element(1, 2.0),
            &DVector::from_element(1, -0.5),
            &DVector::from_element(1, 0.1),
        );
        assert_relative_eq!(out[0], 0.6, epsilon = 1e-15);
    }

    #[test]
    #[should_panic(expected = "input dimension")]
    fn step_dimension_mismatch() {
        let sys = LtiSystem::new(DMatrix::identity(2, 2), DMatrix::identity(2, 1)).unwrap();
        let z = DVector::zeros(2);
        sys.step(&z, &z, &z);
    }

    #[test]
    fn zero_and_step_noise() {
        let mut rng = stream(1, 0, 0);
        let zero = NoiseModel::zero(3);
        for t in 0..10 {
            assert_eq!(zero.sample(t, &mut rng), DVector::zeros(3));
        }
        let step = NoiseModel::step_load(2, vec![(5, DVector::from_vec(vec![0.1, 0.0]))]).unwrap();
        for t in 0..10 {
            let w = step.sample(t, &mut rng);
            let expect = if t >= 5 { 0.1 } else { 0.0 };
            assert_eq!(w, DVector::from_vec(vec![expect, 0.0]));
        }
    }

    #[test]
    fn gaussian_sample_mean() {
        let noise = NoiseModel::gaussian(DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        let mut rng = stream(7, 0, 0);
        let n = 100_000;
        let samples = draw_samples(&noise, n, &mut rng);
        let mut mean = DVector::zeros(2);
        for s in &samples {
            mean += s;
        }
        mean /= n as f64;
        let bound = 4.0 / (n as f64).sqrt();
        assert!(mean.amax() < bound, "{mean}");
    }

    #[test]
    fn statistics_degenerate_and_two_point() {
        let c = DVector::from_vec(vec![1.0, -2.0]);
        let stats = estimate_noise_statistics(&[c.clone(), c.clone(), c.clone()], &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(stats.mean, c);
        assert_eq!(stats.covariance, DMatrix::zeros(2, 2));
        assert_eq!(stats.third, DVector::zeros(2));
        assert_eq!(stats.fourth, 0.0);

        let pts = [DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)];
        let stats = estimate_noise_statistics(&pts, &DMatrix::identity(1, 1)).unwrap();
        assert_eq!(stats.mean[0], 0.0);
        assert_eq!(stats.covariance[(0, 0)], 1.0);
        assert_eq!(stats.third[0], 0.0);
        assert_eq!(stats.fourth, 0.0);

        assert!(estimate_noise_statistics(&pts[..1], &DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn gaussian_fourth_moment_estimate() {
        let noise = NoiseModel::gaussian(DVector::zeros(1), &DMatrix::identity(1, 1)).unwrap();
        assert_relative_eq!(noise.statistics().fourth, 2.0);
        let mut rng = stream(3, 0, 0);
        let samples = draw_samples(&noise, 1_000_000, &mut rng);
        let stats = estimate_noise_statistics(&samples, &DMatrix::identity(1, 1)).unwrap();
        assert!((stats.fourth - 2.0).abs() < 0.05, "m4 = {}", stats.fourth);
    }

    #[test]
    fn uniform_analytic_fourth_matches_estimate() {
        let noise = NoiseModel::uniform(DVector::zeros(2), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let noise = noise.reweighted(&q).unwrap();
        let mut rng = stream(11, 0, 0);
        let samples = draw_samples(&noise, 400_000, &mut rng);
        let est = estimate_noise_statistics(&samples, &q).unwrap();
        let exact = noise.statistics();
        assert_relative_eq!(est.covariance, exact.covariance, epsilon = 0.02);
        assert_relative_eq!(est.fourth, exact.fourth, max_relative = 0.02);
    }

    #[test]
    fn rollout_examples() {
        let mut rng = stream(0, 0, 0);
        let sys = scalar(0.5, 1.0);
        let traj = rollout(&sys, &scalar_gain(0.7), &DVector::zeros(1), 20, &NoiseModel::zero(1), &mut rng).unwrap();
        assert!(traj.states.iter().all(|x| x[0] == 0.0));
        assert!(traj.actions.iter().all(|u| u[0] == 0.0));

        let traj = rollout(&sys, &scalar_gain(0.5), &DVector::from_element(1, 1.0), 5, &NoiseModel::zero(1), &mut rng).unwrap();
        let xs: Vec<f64> = traj.states.iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![1.0, 0.0, 0.0, 0.0, 0.0]);

        let res = rollout(&scalar(2.0, 0.0), &scalar_gain(1.0), &DVector::from_element(1, 1.0), 50, &NoiseModel::zero(1), &mut rng);
        assert!(matches!(res, Err(Error::Divergence { .. })));
    }

    #[test]
    fn discretize_examples() {
        let bc = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let d = discretize(&DMatrix::zeros(2, 2), &bc, &DMatrix::zeros(2, 1), 0.3, Discretization::Euler).unwrap();
        assert_eq!(d.system.a(), &DMatrix::identity(2, 2));
        assert_eq!(d.system.b(), &(bc * 0.3));

        let one = DMatrix::from_element(1, 1, 1.0);
        let d = discretize(&DMatrix::from_element(1, 1, -1.0), &one, &one, 0.1, Discretization::ZeroOrderHold).unwrap();
        assert_relative_eq!(d.system.a()[(0, 0)], (-0.1f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(d.system.b()[(0, 0)], 1.0 - (-0.1f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(d.noise_map[(0, 0)], 1.0 - (-0.1f64).exp(), epsilon = 1e-15);

        assert!(discretize(&one, &one, &one, 0.0, Discretization::Euler).is_err());
    }
}
