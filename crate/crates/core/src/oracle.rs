//! Brute-force reference implementations used to check the production code.
//!
//! Nothing in this module calls the closed-form kernels or the production
//! special functions: the Faddeeva function follows Poppe & Wijers (TOMS
//! 680), erf/erfc use a power series and a continued fraction, the
//! GP-mRNA kernels are trapezoid quadratures of their defining integrals,
//! and the GP-Protein kernels are finite differences of the SE prior. The
//! code favours transparency over speed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// erf by its everywhere-convergent series
/// `erf(x) = (2/√π)·e^{-x²}·Σ 2ⁿx^{2n+1} / (1·3·…·(2n+1))`, all terms positive.
pub fn erf_series(x: f64) -> f64 {
    if x == 0.0 {
        return x;
    }
    let ax = x.abs();
    let x2 = ax * ax;
    let mut term = ax;
    let mut sum = ax;
    let mut n = 0.0;
    while term > sum * 1e-17 {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    (2.0 / SQRT_PI * (-x2).exp() * sum).copysign(x)
}

/// erfc(x) for x > 0 by the Laplace continued fraction
/// `√π·e^{x²}·erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))`,
/// evaluated bottom-up. Accurate to rounding for x ≥ 2.
pub fn erfc_continued_fraction(x: f64) -> f64 {
    assert!(x > 0.0, "continued fraction needs x > 0");
    let depth = 400;
    let mut tail = x;
    for k in (1..=depth).rev() {
        tail = x + (k as f64 / 2.0) / tail;
    }
    (-x * x).exp() / (SQRT_PI * tail)
}

/// erfc from whichever oracle is accurate at `x`.
pub fn erfc_oracle(x: f64) -> f64 {
    if x >= 2.0 {
        erfc_continued_fraction(x)
    } else if x <= -2.0 {
        2.0 - erfc_continued_fraction(-x)
    } else {
        1.0 - erf_series(x)
    }
}

/// Faddeeva function `w(z) = e^{-z²}·erfc(-iz)` by the algorithm of
/// Poppe & Wijers (ACM TOMS 680): a Taylor series near the origin, a
/// continued fraction far from it, and a truncated Laplace-type sum in
/// between; the lower half-plane follows from `w(z) = 2e^{-z²} − w(−z)`.
pub fn faddeeva_toms680(z: Complex64) -> Complex64 {
    const FACTOR: f64 = std::f64::consts::FRAC_2_SQRT_PI;
    let (xi, yi) = (z.re, z.im);
    let xabs = xi.abs();
    let yabs = yi.abs();
    let x = xabs / 6.3;
    let y = yabs / 4.4;
    let mut qrho = x * x + y * y;
    let xabsq = xabs * xabs;
    let mut xquad = xabsq - yabs * yabs;
    let yquad = 2.0 * xabs * yabs;
    let a = qrho < 0.085264;
    let (mut u, mut v);
    let (mut u2, mut v2) = (0.0, 0.0);
    if a {
        qrho = (1.0 - 0.85 * y) * qrho.sqrt();
        let n = (6.0 + 72.0 * qrho).round() as i64;
        let mut j = 2 * n + 1;
        let mut xsum = 1.0 / j as f64;
        let mut ysum = 0.0;
        for i in (1..=n).rev() {
            j -= 2;
            let xaux = (xsum * xquad - ysum * yquad) / i as f64;
            ysum = (xsum * yquad + ysum * xquad) / i as f64;
            xsum = xaux + 1.0 / j as f64;
        }
        let u1 = -FACTOR * (xsum * yabs + ysum * xabs) + 1.0;
        let v1 = FACTOR * (xsum * xabs - ysum * yabs);
        let daux = (-xquad).exp();
        u2 = daux * yquad.cos();
        v2 = -daux * yquad.sin();
        u = u1 * u2 - v1 * v2;
        v = u1 * v2 + v1 * u2;
    } else {
        let (h, kapn, nu);
        if qrho > 1.0 {
            h = 0.0;
            kapn = 0i64;
            qrho = qrho.sqrt();
            nu = (3.0 + 1442.0 / (26.0 * qrho + 77.0)) as i64;
        } else {
            qrho = (1.0 - y) * (1.0 - qrho).sqrt();
            h = 1.88 * qrho;
            kapn = (7.0 + 34.0 * qrho).round() as i64;
            nu = (16.0 + 26.0 * qrho).round() as i64;
        }
        let h2 = 2.0 * h;
        let b = h > 0.0;
        let mut qlambda = if b { h2.powi(kapn as i32) } else { 0.0 };
        let (mut rx, mut ry, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0);
        for n in (0..=nu).rev() {
            let np1 = (n + 1) as f64;
            let tx = yabs + h + np1 * rx;
            let ty = xabs - np1 * ry;
            let c = 0.5 / (tx * tx + ty * ty);
            rx = c * tx;
            ry = c * ty;
            if b && n <= kapn {
                let tx = qlambda + sx;
                sx = rx * tx - ry * sy;
                sy = ry * tx + rx * sy;
                qlambda /= h2;
            }
        }
        if h == 0.0 {
            u = FACTOR * rx;
            v = FACTOR * ry;
        } else {
            u = FACTOR * sx;
            v = FACTOR * sy;
        }
        if yabs == 0.0 {
            u = (-xabs * xabs).exp();
        }
    }
    if yi < 0.0 {
        if a {
            u2 *= 2.0;
            v2 *= 2.0;
        } else {
            xquad = -xquad;
            let w1 = 2.0 * xquad.exp();
            u2 = w1 * yquad.cos();
            v2 = -w1 * yquad.sin();
        }
        u = u2 - u;
        v = v2 - v;
        if xi > 0.0 {
            v = -v;
        }
    } else if xi < 0.0 {
        v = -v;
    }
    Complex64::new(u, v)
}

/// Parameters of the oracle problems, kept separate from the production types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub sigma2: f64,
    pub theta_x: f64,
    pub theta_t: f64,
    pub s_rate: f64,
    pub lambda: f64,
    pub diff: f64,
    pub domain_len: f64,
    pub n_terms: usize,
}

impl OracleParams {
    /// σ² = 1, θx = θt = 0.3, S = 1, λ = 0.1, D = 0.01, l = 1.
    pub fn toy(n_terms: usize) -> Self {
        Self { sigma2: 1.0, theta_x: 0.3, theta_t: 0.3, s_rate: 1.0, lambda: 0.1, diff: 0.01, domain_len: 1.0, n_terms }
    }

    fn omega(&self, n: usize) -> f64 {
        n as f64 * std::f64::consts::PI / self.domain_len
    }

    fn beta(&self, n: usize) -> f64 {
        self.lambda + self.diff * self.omega(n).powi(2)
    }
}

/// A quadrature value together with its self-convergence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Richardson-extrapolated value from resolutions r and 2r.
    pub value: f64,
    /// Plain trapezoid values at r and 2r.
    pub coarse: f64,
    pub fine: f64,
    /// |extrapolated − fine|, an estimate of the remaining error.
    pub error_estimate: f64,
}

impl Quadrature {
    fn from_pair(coarse: f64, fine: f64) -> Self {
        let value = (4.0 * fine - coarse) / 3.0;
        Self { value, coarse, fine, error_estimate: (value - fine).abs() }
    }
}

/// Trapezoid nodes and weights on `[a, b]` with `r` intervals.
fn trapezoid(a: f64, b: f64, r: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / r as f64;
    let nodes = (0..=r).map(|i| a + h * i as f64).collect();
    let weights = (0..=r).map(|i| if i == 0 || i == r { 0.5 * h } else { h }).collect();
    (nodes, weights)
}

fn sq_exp(d: f64, theta: f64) -> f64 {
    (-(d * d) / (theta * theta)).exp()
}

fn check_resolution(r: usize) -> Result<()> {
    if r < 32 {
        return Err(Error::Config(format!("quadrature resolution must be >= 32, got {r}")));
    }
    Ok(())
}

/// Trapezoid rule for `σ²S ∫₀ᵗ∫₀ˡ G(x, ξ, t−τ)·k(ξ, x')·k(τ, t') dξ dτ`.
///
/// `G` is the Green's function truncated to `n_terms`; since it is a sum of
/// separable terms the double integral is a sum of products of 1-D rules.
pub fn quad_kyu(py: (f64, f64), pu: (f64, f64), p: &OracleParams, resolution: usize) -> Result<Quadrature> {
    check_resolution(resolution)?;
    let eval = |r: usize| {
        let (x, t) = py;
        let (xp, tp) = pu;
        if t <= 0.0 {
            return 0.0;
        }
        let (xs, wx) = trapezoid(0.0, p.domain_len, r);
        let (ts, wt) = trapezoid(0.0, t, r);
        let mut total = 0.0;
        for n in 1..=p.n_terms {
            let (w, b) = (p.omega(n), p.beta(n));
            let space: f64 = xs.iter().zip(&wx).map(|(xi, wi)| wi * (w * xi).sin() * sq_exp(xi - xp, p.theta_x)).sum();
            let time: f64 = ts.iter().zip(&wt).map(|(tau, wi)| wi * (-b * (t - tau)).exp() * sq_exp(tau - tp, p.theta_t)).sum();
            total += (w * x).sin() * space * time;
        }
        p.sigma2 * p.s_rate * 2.0 / p.domain_len * total
    };
    Ok(Quadrature::from_pair(eval(resolution), eval(2 * resolution)))
}

/// Trapezoid rule for
/// `σ²S² ∫∫∫∫ G(x, ξ, t−τ)·G(x', ξ', t'−τ')·k(ξ, ξ')·k(τ, τ')`.
///
/// Per series pair (n, m) the integrand factors into a 2-D spatial and a
/// 2-D temporal integral, each a bilinear form `aᵀ·K·b` in the nodal values.
pub fn quad_kyy(p1: (f64, f64), p2: (f64, f64), p: &OracleParams, resolution: usize) -> Result<Quadrature> {
    check_resolution(resolution)?;
    let eval = |r: usize| {
        let (x, t) = p1;
        let (xp, tp) = p2;
        if t <= 0.0 || tp <= 0.0 {
            return 0.0;
        }
        let nt = p.n_terms;
        let (xs, wx) = trapezoid(0.0, p.domain_len, r);
        let kx = DMatrix::from_fn(r + 1, r + 1, |i, j| sq_exp(xs[i] - xs[j], p.theta_x));
        let sines = DMatrix::from_fn(r + 1, nt, |i, n| wx[i] * (p.omega(n + 1) * xs[i]).sin());
        let space = sines.transpose() * &kx * &sines;

        let (ta, wa) = trapezoid(0.0, t, r);
        let (tb, wb) = trapezoid(0.0, tp, r);
        let kt = DMatrix::from_fn(r + 1, r + 1, |i, j| sq_exp(ta[i] - tb[j], p.theta_t));
        let ea = DMatrix::from_fn(r + 1, nt, |i, n| wa[i] * (-p.beta(n + 1) * (t - ta[i])).exp());
        let eb = DMatrix::from_fn(r + 1, nt, |i, m| wb[i] * (-p.beta(m + 1) * (tp - tb[i])).exp());
        let time = ea.transpose() * kt * eb;

        let mut total = 0.0;
        for n in 0..nt {
            for m in 0..nt {
                total += (p.omega(n + 1) * x).sin() * (p.omega(m + 1) * xp).sin() * space[(n, m)] * time[(n, m)];
            }
        }
        p.sigma2 * (p.s_rate * 2.0 / p.domain_len).powi(2) * total
    };
    Ok(Quadrature::from_pair(eval(resolution), eval(2 * resolution)))
}

/// Separable SE prior `σ²·exp(−(x−x')²/θx²)·exp(−(t−t')²/θt²)` as a surface.
pub fn se_surface(p: &OracleParams) -> impl Fn(f64, f64, f64, f64) -> f64 + Copy {
    let (s, tx, tt) = (p.sigma2, p.theta_x, p.theta_t);
    move |x, t, xp, tp| s * sq_exp(x - xp, tx) * sq_exp(t - tp, tt)
}

/// Which argument pair of a surface `f(x, t, x', t')` the operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgPair {
    First,
    Second,
    Both,
}

fn d1_5pt(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
}

fn d2_5pt(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
}

/// `(1/S)[∂ₜ + λ − D∂ₓₓ]` applied to the first argument pair of `f` by
/// five-point central differences with steps `hx`, `ht`.
fn op_first(f: &dyn Fn(f64, f64, f64, f64) -> f64, p: &OracleParams, hx: f64, ht: f64, a: [f64; 4]) -> f64 {
    let [x, t, xp, tp] = a;
    let dt = d1_5pt(|e| f(x, t + e, xp, tp), ht);
    let dxx = d2_5pt(|e| f(x + e, t, xp, tp), hx);
    (dt + p.lambda * f(x, t, xp, tp) - p.diff * dxx) / p.s_rate
}

fn swap(f: &dyn Fn(f64, f64, f64, f64) -> f64) -> impl Fn(f64, f64, f64, f64) -> f64 + '_ {
    move |x, t, xp, tp| f(xp, tp, x, t)
}

fn op_apply(f: &dyn Fn(f64, f64, f64, f64) -> f64, which: ArgPair, p: &OracleParams, hx: f64, ht: f64, a: [f64; 4]) -> f64 {
    let [x, t, xp, tp] = a;
    match which {
        ArgPair::First => op_first(f, p, hx, ht, a),
        ArgPair::Second => op_first(&swap(f), p, hx, ht, [xp, tp, x, t]),
        ArgPair::Both => {
            let inner = |x: f64, t: f64, xp: f64, tp: f64| op_first(f, p, hx, ht, [x, t, xp, tp]);
            let swapped = swap(&inner);
            op_first(&swapped, p, hx, ht, [xp, tp, x, t])
        }
    }
}

/// The PDE operator `(1/S)[∂ₜ + λ − D∂ₓₓ]` applied to `f(x, t, x', t')` in the
/// selected argument pair(s), with steps `rel_step·θx` and `rel_step·θt` and
/// one Richardson step (h and h/2) on top of the fourth-order stencils.
pub fn fd_operator_apply(
    f: &dyn Fn(f64, f64, f64, f64) -> f64,
    which: ArgPair,
    p: &OracleParams,
    rel_step: f64,
    at: [f64; 4],
) -> f64 {
    let (hx, ht) = (rel_step * p.theta_x, rel_step * p.theta_t);
    let coarse = op_apply(f, which, p, hx, ht, at);
    let fine = op_apply(f, which, p, hx / 2.0, ht / 2.0, at);
    (16.0 * fine - coarse) / 15.0
}

/// Uniform space-time grid on `[0, l] × [0, t_max]`; values are stored
/// time-major (`value[j·nx + i]` at `x_i`, `t_j`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub nx: usize,
    pub nt: usize,
    pub domain_len: f64,
    pub t_max: f64,
}

impl PdeGrid {
    pub fn x(&self, i: usize) -> f64 {
        self.domain_len * i as f64 / (self.nx - 1) as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t_max * j as f64 / (self.nt - 1) as f64
    }
}

/// Thomas algorithm for a tridiagonal system (`lower[0]` and `upper[n−1]` unused).
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(Error::Overflow { context: "singular tridiagonal system".into() });
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom.abs() < 1e-300 {
            return Err(Error::Overflow { context: "singular tridiagonal system".into() });
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Crank–Nicolson solution of `y_t = S·u − λy + D·y_xx` with `y = 0` at
/// `t = 0` and at `x ∈ {0, l}`, given `u` on the same grid.
pub fn pde_solve(u: &[f64], grid: &PdeGrid, s_rate: f64, lambda: f64, diff: f64) -> Result<Vec<f64>> {
    let PdeGrid { nx, nt, .. } = *grid;
    if nx < 3 || nt < 2 {
        return Err(Error::Config("PDE grid needs nx >= 3 and nt >= 2".into()));
    }
    if u.len() != nx * nt {
        return Err(Error::Shape(format!("u has {} values, grid has {}", u.len(), nx * nt)));
    }
    let dx = grid.domain_len / (nx - 1) as f64;
    let dt = grid.t_max / (nt - 1) as f64;
    let m = nx - 2;
    let r = diff * dt / (dx * dx);
    let lower = vec![-0.5 * r; m];
    let upper = vec![-0.5 * r; m];
    let diag = vec![1.0 + r + 0.5 * lambda * dt; m];
    let mut y = vec![0.0; nx * nt];
    for j in 1..nt {
        let (prev, next) = (&u[(j - 1) * nx..j * nx], &u[j * nx..(j + 1) * nx]);
        let yp = &y[(j - 1) * nx..j * nx];
        let rhs: Vec<f64> = (1..=m)
            .map(|i| {
                let lap = yp[i - 1] - 2.0 * yp[i] + yp[i + 1];
                yp[i] * (1.0 - 0.5 * lambda * dt) + 0.5 * r * lap + 0.5 * dt * s_rate * (prev[i] + next[i])
            })
            .collect();
        let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        y[j * nx + 1..j * nx + 1 + m].copy_from_slice(&sol);
    }
    Ok(y)
}

/// `−½vᵀK⁻¹v − ½log|K| − (n/2)log 2π` via an explicit LU inverse and determinant.
pub fn naive_log_likelihood(k: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    let inv = k.clone().try_inverse().ok_or_else(|| Error::Overflow { context: "singular matrix".into() })?;
    let det = k.determinant();
    if det.is_nan() || det <= 0.0 {
        return Err(Error::NotPositiveDefinite { jitter: 0.0, min_eigenvalue: f64::NAN });
    }
    let n = v.len() as f64;
    Ok(-0.5 * (v.transpose() * inv * v)[(0, 0)] - 0.5 * det.ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn erf_series_anchors() {
        assert_eq!(erf_series(0.0), 0.0);
        assert_relative_eq!(erf_series(1.0), 0.842_700_792_949_714_9, max_relative = 1e-15);
        assert_relative_eq!(erf_series(-0.5), -0.520_499_877_813_046_5, max_relative = 1e-15);
    }

    #[test]
    fn erfc_cf_anchor() {
        assert_relative_eq!(erfc_continued_fraction(5.0), 1.537_459_794_428_034_8e-12, max_relative = 1e-14);
        assert_relative_eq!(erfc_oracle(2.0), 1.0 - erf_series(2.0), max_relative = 1e-12);
    }

    #[test]
    fn toms680_known_values() {
        assert_relative_eq!(faddeeva_toms680(Complex64::new(0.0, 0.0)).re, 1.0, max_relative = 1e-14);
        // w(iy) = erfcx(y)
        let y = 1.0;
        let v = faddeeva_toms680(Complex64::new(0.0, y));
        assert_relative_eq!(v.re, (y * y).exp() * erfc_oracle(y), max_relative = 1e-13);
        assert!(v.im.abs() < 1e-15);
        // Re w(x) = exp(-x²) on the real axis
        assert_relative_eq!(faddeeva_toms680(Complex64::new(1.5, 0.0)).re, (-2.25f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn toms680_symmetry() {
        for &(x, y) in &[(0.3, 0.7), (2.0, -1.0), (-3.5, 0.2), (5.0, 5.0)] {
            let z = Complex64::new(x, y);
            let a = faddeeva_toms680(-z.conj());
            let b = faddeeva_toms680(z).conj();
            assert_relative_eq!(a.re, b.re, max_relative = 1e-13);
            assert_relative_eq!(a.im, b.im, max_relative = 1e-13);
        }
    }

    #[test]
    fn quadrature_zero_time() {
        let p = OracleParams::toy(5);
        assert_eq!(quad_kyu((0.5, 0.0), (0.5, 0.5), &p, 64).unwrap().value, 0.0);
        assert_eq!(quad_kyy((0.5, 0.0), (0.5, 0.5), &p, 64).unwrap().value, 0.0);
        assert!(quad_kyu((0.5, 0.5), (0.5, 0.5), &p, 16).is_err());
    }

    #[test]
    fn quad_kyy_symmetric() {
        let p = OracleParams::toy(3);
        let a = quad_kyy((0.3, 0.4), (0.6, 0.8), &p, 64).unwrap().value;
        let b = quad_kyy((0.6, 0.8), (0.3, 0.4), &p, 64).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn trapezoid_converges_quadratically() {
        let p = OracleParams::toy(5);
        let q1 = quad_kyu((0.5, 0.8), (0.5, 0.5), &p, 64).unwrap();
        let q2 = quad_kyu((0.5, 0.8), (0.5, 0.5), &p, 128).unwrap();
        let ratio = (q1.coarse - q1.fine).abs() / (q2.coarse - q2.fine).abs();
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn fd_operator_constant_surface() {
        let p = OracleParams { lambda: 0.0, ..OracleParams::toy(1) };
        let f = |_: f64, _: f64, _: f64, _: f64| 3.0;
        for w in [ArgPair::First, ArgPair::Second, ArgPair::Both] {
            assert!(fd_operator_apply(&f, w, &p, 1e-3, [0.1, 0.2, 0.3, 0.4]).abs() < 1e-9);
        }
    }

    #[test]
    fn pde_zero_forcing() {
        let g = PdeGrid { nx: 11, nt: 11, domain_len: 1.0, t_max: 1.0 };
        assert!(pde_solve(&vec![0.0; 121], &g, 1.0, 0.1, 0.01).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pde_steady_state_eigenfunction() {
        let (s, d) = (1.0, 0.5);
        let g = PdeGrid { nx: 81, nt: 801, domain_len: 1.0, t_max: 4.0 };
        let u: Vec<f64> = (0..g.nt).flat_map(|_| (0..g.nx).map(move |i| (std::f64::consts::PI * i as f64 / 80.0).sin())).collect();
        let y = pde_solve(&u, &g, s, 0.0, d).unwrap();
        let mid = y[(g.nt - 1) * g.nx + 40];
        assert_relative_eq!(mid, s / (d * std::f64::consts::PI.powi(2)), max_relative = 1e-3);
    }

    #[test]
    fn pde_second_order_in_space_and_time() {
        // error against a fine reference shrinks by ~4x per refinement
        let (s, lam, d) = (1.0, 0.1, 0.05);
        let forcing = |x: f64, t: f64| (3.0 * x).sin() * (1.0 + t);
        let run = |n: usize| {
            let g = PdeGrid { nx: n + 1, nt: n + 1, domain_len: 1.0, t_max: 1.0 };
            let u: Vec<f64> = (0..g.nt).flat_map(|j| (0..g.nx).map(move |i| forcing(g.x(i), g.t(j)))).collect();
            pde_solve(&u, &g, s, lam, d).unwrap()[n * (n + 1) + n / 2]
        };
        let reference = run(320);
        let e1 = (run(20) - reference).abs();
        let e2 = (run(40) - reference).abs();
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn naive_likelihood_1x1() {
        let k = DMatrix::from_element(1, 1, 2.0);
        let v = DVector::from_element(1, 0.0);
        let expected = -0.5 * 2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(naive_log_likelihood(&k, &v).unwrap(), expected, max_relative = 1e-14);
    }
}
