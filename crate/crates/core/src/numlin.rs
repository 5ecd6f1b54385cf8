//! Dense kernels: spectral radius, discrete Lyapunov and Riccati solvers,
//! matrix exponential.

use alloc::format;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use nalgebra::{DMatrix, Hessenberg};

use crate::error::{check_dim, Error, Result};

/// Iteration controls for [`solve_dlyap_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Required gap below one for the spectral radius.
    pub stability_margin: f64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 200,
            stability_margin: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiccatiMethod {
    /// Structured doubling; quadratically convergent.
    Doubling,
    /// Plain value iteration on the Riccati map.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiSettings {
    pub method: RiccatiMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RiccatiSettings {
    fn default() -> Self {
        Self {
            method: RiccatiMethod::Doubling,
            tolerance: 1e-11,
            max_iterations: 100_000,
        }
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(f: &DMatrix<f64>) -> Result<f64> {
    check_dim("spectral_radius (square)", f.nrows(), f.ncols())?;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            context: "spectral_radius",
            detail: format!("non-finite entries ({}x{})", f.nrows(), f.ncols()),
        });
    }
    if f.nrows() == 1 {
        return Ok(f[(0, 0)].abs());
    }
    let values = eigenvalues(f)?;
    Ok(values.iter().map(|&(re, im)| re.hypot(im)).fold(0.0, f64::max))
}

/// Eigenvalues as `(re, im)` pairs via balancing, Hessenberg reduction and
/// shifted double-step QR.
pub fn eigenvalues(f: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    check_dim("eigenvalues (square)", f.nrows(), f.ncols())?;
    let mut h = balance(f);
    if h.nrows() > 2 {
        h = Hessenberg::new(h).h();
    }
    hessenberg_qr(&mut h).ok_or_else(|| Error::Numerical {
        context: "eigenvalues",
        detail: format!(
            "QR iteration failed (n = {}, frobenius norm = {:e}, max abs entry = {:e})",
            f.nrows(),
            f.norm(),
            f.amax()
        ),
    })
}

/// Diagonal similarity with power-of-two scalings equalizing row and column norms.
fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut g = r / 2.0;
            let mut scale = 1.0;
            while c < g {
                scale *= 2.0;
                c *= 4.0;
            }
            g = r * 2.0;
            while c > g {
                scale /= 2.0;
                c /= 4.0;
            }
            if (c + r) / scale < 0.95 * total {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= scale;
                    m[(j, i)] *= scale;
                }
            }
        }
    }
    m
}

fn with_sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix (destroyed in the process).
fn hessenberg_qr(a: &mut DMatrix<f64>) -> Option<Vec<(f64, f64)>> {
    let n = a.nrows();
    let mut out = alloc::vec![(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    if anorm == 0.0 {
        return Some(out);
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 1 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() + s == s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nu, nu)];
            if l == nu {
                out[nu] = (x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[(nu - 1, nu - 1)];
            let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + with_sign(z, p);
                    let hi = x + z;
                    let lo = if z != 0.0 { x - w / z } else { hi };
                    out[nu - 1] = (hi, 0.0);
                    out[nu] = (lo, 0.0);
                } else {
                    out[nu - 1] = (x + p, -z);
                    out[nu] = (x + p, z);
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return None;
            }
            if its == 10 || its == 20 || its == 40 {
                t += x;
                for i in 0..=nu {
                    a[(i, i)] -= x;
                }
                let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[(m, m)];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - r - s;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            let mut k = m;
            while k + 1 <= nu {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k + 1 != nu { a[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = with_sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                        if k + 1 != nu {
                            pp += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pp * z;
                        }
                        a[(k + 1, j)] -= pp * y;
                        a[(k, j)] -= pp * x;
                    }
                    let top = nu.min(k + 3);
                    for i in l..=top {
                        let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k + 1 != nu {
                            pp += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pp * r;
                        }
                        a[(i, k + 1)] -= pp * q;
                        a[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Some(out)
}

/// Average a matrix with its transpose in place.
pub fn symmetrize(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
}

/// Relative Frobenius asymmetry `‖X − Xᵀ‖ / max(‖X‖, tiny)`.
pub fn asymmetry(x: &DMatrix<f64>) -> f64 {
    let norm = x.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (x - x.transpose()).norm() / norm
}

/// True when `x` is symmetric to `1e-10` and its smallest eigenvalue is at
/// least `−1e-10·‖x‖`.
pub fn is_psd(x: &DMatrix<f64>) -> bool {
    if !x.is_square() || asymmetry(x) > 1e-10 {
        return false;
    }
    if x.nrows() == 0 {
        return true;
    }
    let mut s = x.clone();
    symmetrize(&mut s);
    let norm = s.norm();
    match nalgebra::SymmetricEigen::try_new(s, f64::EPSILON, 0) {
        Some(eig) => eig.eigenvalues.iter().all(|&l| l >= -1e-10 * norm),
        None => false,
    }
}

/// `tr(A·B)` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Solve `X = F X Fᵀ + S` (or `X = Fᵀ X F + S` when `transpose`).
pub fn solve_dlyap(f: &DMatrix<f64>, s: &DMatrix<f64>, transpose: bool) -> Result<DMatrix<f64>> {
    solve_dlyap_with(f, s, transpose, &LyapunovSettings::default())
}

/// Doubling iteration `X ← X + Fₖ X Fₖᵀ`, `Fₖ₊₁ = Fₖ²`.
pub fn solve_dlyap_with(
    f: &DMatrix<f64>,
    s: &DMatrix<f64>,
    transpose: bool,
    settings: &LyapunovSettings,
) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    check_dim("solve_dlyap (F square)", n, f.ncols())?;
    check_dim("solve_dlyap (S rows)", n, s.nrows())?;
    check_dim("solve_dlyap (S cols)", n, s.ncols())?;
    let radius = spectral_radius(f)?;
    if radius >= 1.0 - settings.stability_margin {
        return Err(Error::Stability { radius });
    }
    let mut fk = if transpose { f.transpose() } else { f.clone() };
    let mut x = s.clone();
    symmetrize(&mut x);
    for _ in 0..settings.max_iterations {
        let increment = &fk * &x * fk.transpose();
        x += &increment;
        let scale = x.norm().max(f64::MIN_POSITIVE);
        if increment.norm() <= settings.tolerance * scale {
            symmetrize(&mut x);
            return Ok(x);
        }
        fk = &fk * &fk;
    }
    Err(Error::Numerical {
        context: "solve_dlyap",
        detail: format!(
            "doubling did not converge in {} iterations (spectral radius {radius})",
            settings.max_iterations
        ),
    })
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    /// Optimal feedback for `u = −K x`.
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution> {
    solve_dare_with(a, b, q, r, &RiccatiSettings::default())
}

pub fn solve_dare_with(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    settings: &RiccatiSettings,
) -> Result<DareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    check_dim("solve_dare (A square)", n, a.ncols())?;
    check_dim("solve_dare (B rows)", n, b.nrows())?;
    check_dim("solve_dare (Q)", n, q.nrows())?;
    check_dim("solve_dare (R)", m, r.nrows())?;
    let r_inv = r.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
        Error::InvalidArgument(format!("R must be positive definite ({m}x{m})"))
    })?;

    let (p, iterations) = match settings.method {
        RiccatiMethod::Doubling => dare_doubling(a, b, q, &r_inv, settings)?,
        RiccatiMethod::FixedPoint => dare_fixed_point(a, b, q, r, settings)?,
    };
    let gain = riccati_gain(a, b, r, &p)?;
    let closed = a - b * &gain;
    let radius = spectral_radius(&closed)?;
    if radius >= 1.0 {
        return Err(Error::Stabilizability { iterations });
    }
    Ok(DareSolution { p, gain, iterations })
}

/// `(R + BᵀPB)⁻¹ BᵀPA`.
pub fn riccati_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let btp = b.transpose() * p;
    let lhs = r + &btp * b;
    let rhs = &btp * a;
    lhs.lu().solve(&rhs).ok_or_else(|| Error::Numerical {
        context: "riccati_gain",
        detail: format!("R + BᵀPB is singular ({}x{})", r.nrows(), r.ncols()),
    })
}

fn not_finite(x: &DMatrix<f64>) -> bool {
    x.iter().any(|v| !v.is_finite()) || x.amax() > 1e150
}

fn dare_doubling(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    settings: &RiccatiSettings,
) -> Result<(DMatrix<f64>, usize)> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r_inv * b.transpose();
    symmetrize(&mut gk);
    let mut hk = q.clone();
    symmetrize(&mut hk);
    // Doubling needs at most a few dozen steps when it converges at all.
    let cap = settings.max_iterations.min(200);
    for it in 1..=cap {
        let w = &eye + &gk * &hk;
        let lu = w.lu();
        let w_inv_a = lu.solve(&ak).ok_or(Error::Stabilizability { iterations: it })?;
        let w_inv_g = lu.solve(&gk).ok_or(Error::Stabilizability { iterations: it })?;
        let next_a = &ak * &w_inv_a;
        let mut next_g = &gk + &ak * w_inv_g * ak.transpose();
        let mut next_h = &hk + ak.transpose() * &hk * &w_inv_a;
        symmetrize(&mut next_g);
        symmetrize(&mut next_h);
        if not_finite(&next_h) || not_finite(&next_a) {
            return Err(Error::Stabilizability { iterations: it });
        }
        let delta = (&next_h - &hk).norm();
        let scale = next_h.norm().max(f64::MIN_POSITIVE);
        ak = next_a;
        gk = next_g;
        hk = next_h;
        if delta <= settings.tolerance * scale {
            return Ok((hk, it));
        }
    }
    Err(Error::Stabilizability { iterations: cap })
}

fn dare_fixed_point(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    settings: &RiccatiSettings,
) -> Result<(DMatrix<f64>, usize)> {
    let mut p = q.clone();
    symmetrize(&mut p);
    let at = a.transpose();
    for it in 1..=settings.max_iterations {
        let k = riccati_gain(a, b, r, &p).map_err(|_| Error::Stabilizability { iterations: it })?;
        let atpa = &at * &p * a;
        let atpb = &at * &p * b;
        let mut next = q + atpa - atpb * k;
        symmetrize(&mut next);
        if not_finite(&next) {
            return Err(Error::Stabilizability { iterations: it });
        }
        let delta = (&next - &p).norm();
        let scale = next.norm().max(f64::MIN_POSITIVE);
        p = next;
        if delta <= settings.tolerance * scale {
            return Ok((p, it));
        }
    }
    Err(Error::Stabilizability {
        iterations: settings.max_iterations,
    })
}

/// Residual `‖P − (Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA)‖ / (1 + ‖P‖)`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let at = a.transpose();
    let rhs = match riccati_gain(a, b, r, p) {
        Ok(k) => q + &at * p * a - &at * p * b * k,
        Err(_) => return f64::INFINITY,
    };
    (p - rhs).norm() / (1.0 + p.norm())
}

/// Matrix exponential by scaling and squaring around a truncated Taylor
/// series.
pub fn expm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    assert!(x.is_square(), "expm needs a square matrix");
    let norm1 = (0..n)
        .map(|j| x.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let y = x * scale;
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=18 {
        term = &term * &y / (k as f64);
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalues_of_companion_matrix() {
        // roots 0.5, -0.3, 0.9 ± 0.1i, 2
        let roots_re = [0.5, -0.3, 0.9, 0.9, 2.0];
        let mut coeffs = alloc::vec![1.0];
        let push = |a: f64, b: f64, c: &mut alloc::vec::Vec<f64>| {
            let mut next = alloc::vec![0.0; c.len() + 1];
            for (i, v) in c.iter().enumerate() {
                next[i] += v * a;
                next[i + 1] += v * b;
            }
            *c = next;
        };
        push(1.0, -0.5, &mut coeffs);
        push(1.0, 0.3, &mut coeffs);
        push(1.0, -2.0, &mut coeffs);
        let quad = [1.0, -1.8, 0.82];
        let mut full = alloc::vec![0.0; coeffs.len() + 2];
        for (i, c) in coeffs.iter().enumerate() {
            for (j, q) in quad.iter().enumerate() {
                full[i + j] += c * q;
            }
        }
        let n = full.len() - 1;
        let mut comp = DMatrix::zeros(n, n);
        for j in 0..n {
            comp[(0, j)] = -full[j + 1];
        }
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        let mut found = eigenvalues(&comp).unwrap();
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
        let mut expected: alloc::vec::Vec<(f64, f64)> = roots_re.iter().map(|&r| (r, 0.0)).collect();
        expected[2].1 = -0.1;
        expected[3].1 = 0.1;
        expected.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
        for (f, e) in found.iter().zip(&expected) {
            assert!((f.0 - e.0).abs() < 1e-9 && (f.1 - e.1).abs() < 1e-9, "{found:?}");
        }
        assert_relative_eq!(spectral_radius(&comp).unwrap(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn eigenvalues_of_rotation_and_repeated_blocks() {
        let (c, s) = (0.6, 0.8);
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let block = DMatrix::<f64>::identity(5, 5).kronecker(&(rot * 0.9));
        assert_relative_eq!(spectral_radius(&block).unwrap(), 0.9, epsilon = 1e-12);
        let jordan = DMatrix::from_row_slice(3, 3, &[0.7, 1.0, 0.0, 0.0, 0.7, 1.0, 0.0, 0.0, 0.7]);
        assert!((spectral_radius(&jordan).unwrap() - 0.7).abs() < 1e-5);
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&DMatrix::zeros(2, 2)).unwrap(), 0.0);
        let d = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.2]);
        assert_relative_eq!(spectral_radius(&d).unwrap(), 0.5, epsilon = 1e-14);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.25, 0.0]);
        assert_relative_eq!(spectral_radius(&rot).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_rejects_nan() {
        let m = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(matches!(spectral_radius(&m), Err(Error::Numerical { .. })));
    }

    #[test]
    fn dlyap_examples() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let x = solve_dlyap(&DMatrix::zeros(2, 2), &s, false).unwrap();
        assert_eq!(x, s);

        let x = solve_dlyap(&DMatrix::from_element(1, 1, 0.5), &DMatrix::from_element(1, 1, 1.0), false)
            .unwrap();
        assert_relative_eq!(x[(0, 0)], 4.0 / 3.0, epsilon = 1e-13);

        let f = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.2]);
        let x = solve_dlyap(&f, &DMatrix::identity(2, 2), true).unwrap();
        assert_relative_eq!(x[(0, 0)], 4.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(x[(1, 1)], 25.0 / 24.0, epsilon = 1e-13);
        assert_eq!(x[(0, 1)], 0.0);
    }

    #[test]
    fn dlyap_rejects_unstable() {
        let f = DMatrix::from_element(1, 1, 1.5);
        match solve_dlyap(&f, &DMatrix::identity(1, 1), false) {
            Err(Error::Stability { radius }) => assert_relative_eq!(radius, 1.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dare_examples() {
        let sol = solve_dare(
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(2, 2),
            &DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            &DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_relative_eq!(sol.p[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(sol.p[(0, 1)], 0.5, epsilon = 1e-12);
        assert!(sol.gain.amax() < 1e-14);

        let one = DMatrix::from_element(1, 1, 1.0);
        for method in [RiccatiMethod::Doubling, RiccatiMethod::FixedPoint] {
            let settings = RiccatiSettings { method, ..Default::default() };
            let sol = solve_dare_with(&DMatrix::from_element(1, 1, 0.5), &one, &one, &one, &settings)
                .unwrap();
            let p = (0.25 + 4.0625f64.sqrt()) / 2.0;
            assert_relative_eq!(sol.p[(0, 0)], p, epsilon = 1e-9);
            assert_relative_eq!(sol.gain[(0, 0)], 0.5 * p / (1.0 + p), epsilon = 1e-9);
            assert!((sol.p[(0, 0)] - 1.13278).abs() < 1e-5);
            assert!((sol.gain[(0, 0)] - 0.26557).abs() < 1e-5);
        }
    }

    #[test]
    fn dare_uncontrollable_unstable() {
        let one = DMatrix::from_element(1, 1, 1.0);
        for method in [RiccatiMethod::Doubling, RiccatiMethod::FixedPoint] {
            let settings = RiccatiSettings { method, ..Default::default() };
            let res = solve_dare_with(
                &DMatrix::from_element(1, 1, 2.0),
                &DMatrix::zeros(1, 1),
                &one,
                &one,
                &settings,
            );
            assert!(matches!(res, Err(Error::Stabilizability { .. })), "{method:?}: {res:?}");
        }
    }

    #[test]
    fn expm_scalar_and_nilpotent() {
        let e = expm(&DMatrix::from_element(1, 1, -0.1));
        assert_relative_eq!(e[(0, 0)], (-0.1f64).exp(), epsilon = 1e-15);
        let big = expm(&DMatrix::from_element(1, 1, 5.0));
        assert_relative_eq!(big[(0, 0)], 5.0f64.exp(), max_relative = 1e-13);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let e = expm(&nil);
        assert_relative_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn psd_check() {
        assert!(is_psd(&DMatrix::identity(3, 3)));
        assert!(is_psd(&DMatrix::zeros(2, 2)));
        assert!(!is_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])));
        assert!(!is_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])));
    }
}
