//! Covariances of the model with the GP prior on the mRNA (driving force).
//!
//! The protein field solves `∂y/∂t = S·u − λ·y + D·∂²y/∂x²` on `[0, l]` with
//! zero initial and Dirichlet boundary values, so `y = S·(G ∗ u)` with the
//! truncated Green's function
//!
//! ```text
//! G(x, ξ, t) = (2/l) Σₙ sin(ωₙx)·sin(ωₙξ)·exp(-βₙt),   ωₙ = nπ/l,  βₙ = λ + D·ωₙ²
//! ```
//!
//! Integrating the separable SE prior on `u` against `G` gives closed forms
//! built from a temporal factor (erf sums) and a spatial factor (Faddeeva
//! values). Every `exp((βθ/2)²)·erf(…)` product is rewritten through
//! `erfcx` so that no intermediate overflows as βₙ grows quadratically in n.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_se::{separable_prior, KernelParams, SpaceTimePoint};
use crate::scalar::{KahanSum, Scalar};
use crate::specfun::{erf_raw, erfcx_raw, faddeeva_raw};

/// Default number of Green's-function terms.
pub const DEFAULT_N_TERMS: usize = 20;

/// Constants of the reaction–diffusion equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanisticParams<T> {
    /// Translation rate S.
    pub s_rate: T,
    /// Decay rate λ.
    pub lambda: T,
    /// Diffusion rate D.
    pub diff: T,
}

impl<T: Scalar> MechanisticParams<T> {
    pub fn new(s_rate: T, lambda: T, diff: T) -> Result<Self> {
        let m = Self { s_rate, lambda, diff };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_rate.is_finite() && self.s_rate > T::zero()) {
            return Err(Error::param(format!("s_rate must be > 0, got {}", self.s_rate)));
        }
        if !(self.lambda.is_finite() && self.lambda >= T::zero()) {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.diff.is_finite() && self.diff >= T::zero()) {
            return Err(Error::param(format!("diff must be >= 0, got {}", self.diff)));
        }
        Ok(())
    }
}

/// Spatial domain length and truncation of the Green's-function series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreensConfig<T> {
    pub domain_len: T,
    pub n_terms: usize,
}

impl<T: Scalar> Default for GreensConfig<T> {
    fn default() -> Self {
        Self { domain_len: T::one(), n_terms: DEFAULT_N_TERMS }
    }
}

impl<T: Scalar> GreensConfig<T> {
    pub fn new(domain_len: T, n_terms: usize) -> Result<Self> {
        let c = Self { domain_len, n_terms };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.domain_len.is_finite() && self.domain_len > T::zero()) {
            return Err(Error::param(format!("domain_len must be > 0, got {}", self.domain_len)));
        }
        if self.n_terms == 0 {
            return Err(Error::param("n_terms must be >= 1"));
        }
        Ok(())
    }

    /// ωₙ = nπ/l for n ≥ 1.
    pub fn omega(&self, n: usize) -> T {
        T::lit(n as f64) * T::PI() / self.domain_len
    }

    /// βₙ = λ + D·ωₙ².
    pub fn beta(&self, n: usize, mech: &MechanisticParams<T>) -> T {
        let w = self.omega(n);
        mech.lambda + mech.diff * w * w
    }

    /// Snaps a coordinate within rounding distance of `[0, l]` onto it.
    fn check_x(&self, x: T, what: &'static str) -> Result<T> {
        let tol = T::lit(1e-12) * self.domain_len;
        if !x.is_finite() || x < -tol || x > self.domain_len + tol {
            return Err(Error::Domain { func: what, arg: format!("x = {x} outside [0, {}]", self.domain_len) });
        }
        Ok(x.max(T::zero()).min(self.domain_len))
    }
}

fn check_t<T: Scalar>(t: T, what: &'static str) -> Result<T> {
    if !t.is_finite() || t < T::lit(-1e-12) {
        return Err(Error::Domain { func: what, arg: format!("t = {t} is negative") });
    }
    Ok(t.max(T::zero()))
}

/// Truncated Green's function `G(x, ξ, t)` of the homogeneous problem.
pub fn greens<T: Scalar>(x: T, xi: T, t: T, cfg: &GreensConfig<T>, mech: &MechanisticParams<T>) -> Result<T> {
    cfg.validate()?;
    mech.validate()?;
    let x = cfg.check_x(x, "greens")?;
    let xi = cfg.check_x(xi, "greens")?;
    let t = check_t(t, "greens")?;
    let mut acc = KahanSum::new();
    for n in 1..=cfg.n_terms {
        let w = cfg.omega(n);
        acc.add((w * x).sin() * (w * xi).sin() * (-cfg.beta(n, mech) * t).exp());
    }
    Ok(T::lit(2.0) / cfg.domain_len * acc.value())
}

/// `exp(ν² − β·d)·[erf(d/θ − ν) + erf(s/θ + ν)]` with `ν = βθ/2`.
///
/// This is the convolution `∫₀^{d+s} exp(−β(d+s−τ))·k(τ, s) dτ` up to the
/// factor `θ√π/2`. For the usual `d/θ ≤ ν` case the erf sum is rewritten as
/// `erfc(−A) − erfc(B)` and each erfc scaled by erfcx, leaving only
/// non-positive exponents.
#[inline]
pub(crate) fn scaled_erf_sum<T: Scalar>(beta: T, theta: T, d: T, s: T) -> T {
    let nu = beta * theta / T::lit(2.0);
    let a = d / theta - nu;
    let b = s / theta + nu;
    if a <= T::zero() && b >= T::zero() {
        let th2 = theta * theta;
        erfcx_raw(-a) * (-d * d / th2).exp() - erfcx_raw(b) * (-beta * (d + s) - s * s / th2).exp()
    } else {
        (nu * nu - beta * d).exp() * (erf_raw(a) + erf_raw(b))
    }
}

/// `∫₀^a erf(u) du`.
fn erf_antiderivative<T: Scalar>(a: T) -> T {
    a * erf_raw(a) + ((-a * a).exp() - T::one()) / T::PI().sqrt()
}

/// Covariance machinery of the mRNA-prior model for fixed parameters.
///
/// Construction tabulates the spatial overlaps `C(n, m)`, which depend only
/// on θx and l; each kernel evaluation then costs O(N) special-function
/// calls plus an O(N²) arithmetic sum.
#[derive(Debug, Clone)]
pub struct MrnaKernel<T> {
    kp: KernelParams<T>,
    mech: MechanisticParams<T>,
    cfg: GreensConfig<T>,
    omega: Vec<T>,
    beta: Vec<T>,
    /// C(n, m), row-major over n, m = 1..=N.
    overlap: Vec<T>,
}

impl<T: Scalar> MrnaKernel<T> {
    pub fn new(kp: KernelParams<T>, mech: MechanisticParams<T>, cfg: GreensConfig<T>) -> Result<Self> {
        kp.validate()?;
        mech.validate()?;
        cfg.validate()?;
        let n = cfg.n_terms;
        let omega: Vec<T> = (1..=n).map(|i| cfg.omega(i)).collect();
        let beta: Vec<T> = (1..=n).map(|i| cfg.beta(i, &mech)).collect();
        let mut k = Self { kp, mech, cfg, omega, beta, overlap: vec![T::zero(); n * n] };
        k.overlap = k.tabulate_overlap()?;
        Ok(k)
    }

    pub fn kernel_params(&self) -> &KernelParams<T> {
        &self.kp
    }

    pub fn mechanistic(&self) -> &MechanisticParams<T> {
        &self.mech
    }

    pub fn greens_config(&self) -> &GreensConfig<T> {
        &self.cfg
    }

    /// W(n) = w(−θωₙ/2) − exp(−(l/θ)²)·(−1)ⁿ·w(i·l/θ − θωₙ/2).
    fn w_space(&self, n: usize) -> Complex<T> {
        let th = self.kp.theta_x;
        let len = self.cfg.domain_len;
        let half = th * self.omega[n - 1] / T::lit(2.0);
        let sign = if n.is_multiple_of(2) { T::one() } else { -T::one() };
        let r = len / th;
        faddeeva_raw(Complex::new(-half, T::zero()))
            - faddeeva_raw(Complex::new(-half, r)) * ((-r * r).exp() * sign)
    }

    fn tabulate_overlap(&self) -> Result<Vec<T>> {
        let n_terms = self.cfg.n_terms;
        let th = self.kp.theta_x;
        let len = self.cfg.domain_len;
        let sqrt_pi = T::PI().sqrt();
        let w: Vec<Complex<T>> = (1..=n_terms).map(|n| self.w_space(n)).collect();
        let edge = (-(len / th) * (len / th)).exp();
        let mut out = vec![T::zero(); n_terms * n_terms];
        for n in 1..=n_terms {
            for m in 1..=n_terms {
                let v = if n == m {
                    let wn = w[n - 1];
                    let nf = T::lit(n as f64);
                    let sign = if n.is_multiple_of(2) { T::one() } else { -T::one() };
                    th * sqrt_pi * len / T::lit(2.0)
                        * (wn.re - wn.im * (th * th * nf * T::PI() / (T::lit(2.0) * len * len) + T::one() / (nf * T::PI())))
                        + th * th / T::lit(2.0) * (edge * sign - T::one())
                } else if (n + m) % 2 == 1 {
                    T::zero()
                } else {
                    let nf = T::lit(n as f64);
                    let mf = T::lit(m as f64);
                    th * len / (sqrt_pi * (mf * mf - nf * nf)) * (nf * w[m - 1].im - mf * w[n - 1].im)
                };
                if !v.is_finite() {
                    return Err(Error::Overflow { context: format!("spatial overlap C(n={n}, m={m})") });
                }
                out[(n - 1) * n_terms + (m - 1)] = v;
            }
        }
        Ok(out)
    }

    /// Spatial overlap `C(n, m) = ∫∫ sin(ωₙξ)·sin(ωₘξ')·k(ξ, ξ') dξ dξ'` (1-based n, m).
    pub fn spatial_overlap(&self, n: usize, m: usize) -> T {
        self.overlap[(n - 1) * self.cfg.n_terms + (m - 1)]
    }

    /// Temporal factor `K(t, t', n, m) = ∫₀ᵗ∫₀^{t'} e^{−βₙ(t−τ)}·e^{−βₘ(t'−τ')}·k(τ, τ') dτ' dτ`.
    pub fn temporal_overlap(&self, n: usize, m: usize, t: T, tp: T) -> T {
        let th = self.kp.theta_t;
        let bn = self.beta[n - 1];
        let bm = self.beta[m - 1];
        let pre = th * T::PI().sqrt() / T::lit(2.0);
        if bn + bm <= T::lit(1e-9) {
            return pre * th * (erf_antiderivative(tp / th) + erf_antiderivative(t / th) - erf_antiderivative((tp - t) / th));
        }
        let h_mn = (scaled_erf_sum(bm, th, tp - t, t) - (-bn * t).exp() * scaled_erf_sum(bm, th, tp, T::zero())) / (bm + bn);
        let h_nm = (scaled_erf_sum(bn, th, t - tp, tp) - (-bm * tp).exp() * scaled_erf_sum(bn, th, t, T::zero())) / (bm + bn);
        pre * (h_mn + h_nm)
    }

    /// `∫₀ᵗ e^{−βₙ(t−τ)}·k(τ, t') dτ`.
    pub fn temporal_cross(&self, n: usize, t: T, tp: T) -> T {
        let th = self.kp.theta_t;
        th * T::PI().sqrt() / T::lit(2.0) * scaled_erf_sum(self.beta[n - 1], th, t - tp, tp)
    }

    /// `∫₀ˡ sin(ωₙξ)·k(ξ, x') dξ`, evaluated with Faddeeva arguments in the upper half plane.
    pub fn spatial_cross(&self, n: usize, xp: T) -> T {
        let th = self.kp.theta_x;
        let len = self.cfg.domain_len;
        let w = self.omega[n - 1];
        let half = w * th / T::lit(2.0);
        let two = T::lit(2.0);
        let sign = if n.is_multiple_of(2) { T::one() } else { -T::one() };
        let lo = xp / th;
        let hi = (len - xp) / th;
        let bulk = two * (-half * half).exp() * (w * xp).sin();
        let left = faddeeva_raw(Complex::new(-half, lo)).im * (-lo * lo).exp();
        let right = faddeeva_raw(Complex::new(half, hi)).im * (-hi * hi).exp() * sign;
        th * T::PI().sqrt() / two * (bulk - left - right)
    }

    /// Prior covariance of the mRNA channel.
    pub fn kuu(&self, p1: SpaceTimePoint<T>, p2: SpaceTimePoint<T>) -> T {
        separable_prior(p1, p2, &self.kp)
    }

    /// `sin(ωₙx)` for n = 1..=N.
    pub fn sine_vector(&self, x: T) -> Result<Vec<T>> {
        let x = self.cfg.check_x(x, "mrna_kernel")?;
        Ok(self.omega.iter().map(|w| (*w * x).sin()).collect())
    }

    /// Row-major N×N block `B` with `k_yy((x,t), (x',t')) = Σₙₘ sin(ωₙx)·Bₙₘ·sin(ωₘx')`;
    /// `Bₙₘ = (4σ²S²/l²)·K(t, t', n, m)·C(n, m)` depends on the times only.
    pub fn kyy_time_block(&self, t: T, tp: T) -> Result<Vec<T>> {
        let t = check_t(t, "kyy_mrna")?;
        let tp = check_t(tp, "kyy_mrna")?;
        let n_terms = self.cfg.n_terms;
        let th = self.kp.theta_t;
        let a: Vec<T> = self.beta.iter().map(|b| scaled_erf_sum(*b, th, tp - t, t)).collect();
        let b: Vec<T> = self.beta.iter().map(|b| scaled_erf_sum(*b, th, tp, T::zero())).collect();
        let c: Vec<T> = self.beta.iter().map(|b| scaled_erf_sum(*b, th, t - tp, tp)).collect();
        let d: Vec<T> = self.beta.iter().map(|b| scaled_erf_sum(*b, th, t, T::zero())).collect();
        let dec_t: Vec<T> = self.beta.iter().map(|b| (-*b * t).exp()).collect();
        let dec_tp: Vec<T> = self.beta.iter().map(|b| (-*b * tp).exp()).collect();
        let pre_t = th * T::PI().sqrt() / T::lit(2.0);
        let len = self.cfg.domain_len;
        let s = self.mech.s_rate;
        let scale = T::lit(4.0) * self.kp.sigma2 * s * s / (len * len);

        let mut out = vec![T::zero(); n_terms * n_terms];
        for n in 0..n_terms {
            for m in 0..n_terms {
                let cnm = self.overlap[n * n_terms + m];
                if cnm == T::zero() {
                    continue;
                }
                let bsum = self.beta[n] + self.beta[m];
                let knm = if bsum <= T::lit(1e-9) {
                    self.temporal_overlap(n + 1, m + 1, t, tp)
                } else {
                    pre_t * ((a[m] - dec_t[n] * b[m]) + (c[n] - dec_tp[m] * d[n])) / bsum
                };
                let v = scale * knm * cnm;
                if !v.is_finite() {
                    return Err(Error::Overflow { context: format!("k_yy series term (n={}, m={})", n + 1, m + 1) });
                }
                out[n * n_terms + m] = v;
            }
        }
        Ok(out)
    }

    /// `Σₙₘ sx[n]·block[n][m]·sxp[m]` with compensated summation.
    pub fn kyy_from_parts(&self, sx: &[T], block: &[T], sxp: &[T]) -> T {
        let n_terms = self.cfg.n_terms;
        let mut acc = KahanSum::new();
        for n in 0..n_terms {
            if sx[n] == T::zero() {
                continue;
            }
            for m in 0..n_terms {
                acc.add(sx[n] * block[n * n_terms + m] * sxp[m]);
            }
        }
        acc.value()
    }

    /// Covariance of the protein channel, `cov(y(p1), y(p2))`.
    pub fn kyy(&self, p1: SpaceTimePoint<T>, p2: SpaceTimePoint<T>) -> Result<T> {
        let sx = self.sine_vector(p1.x)?;
        let sxp = self.sine_vector(p2.x)?;
        let block = self.kyy_time_block(p1.t, p2.t)?;
        Ok(self.kyy_from_parts(&sx, &block, &sxp))
    }

    /// `(2σ²S/l)·∫₀ᵗ e^{−βₙ(t−τ)}·k(τ, t') dτ` for n = 1..=N.
    pub fn kyu_time_vector(&self, t: T, tp: T) -> Result<Vec<T>> {
        let t = check_t(t, "kyu_mrna")?;
        let tp = check_t(tp, "kyu_mrna")?;
        let scale = T::lit(2.0) * self.kp.sigma2 * self.mech.s_rate / self.cfg.domain_len;
        (1..=self.cfg.n_terms)
            .map(|n| {
                let v = scale * self.temporal_cross(n, t, tp);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Overflow { context: format!("k_yu series term (n={n})") })
                }
            })
            .collect()
    }

    /// `∫₀ˡ sin(ωₙξ)·k(ξ, x') dξ` for n = 1..=N.
    pub fn kyu_space_vector(&self, xp: T) -> Result<Vec<T>> {
        let xp = self.cfg.check_x(xp, "kyu_mrna")?;
        Ok((1..=self.cfg.n_terms).map(|n| self.spatial_cross(n, xp)).collect())
    }

    /// `Σₙ sx[n]·time[n]·space[n]` with compensated summation.
    pub fn kyu_from_parts(&self, sx: &[T], time: &[T], space: &[T]) -> T {
        let mut acc = KahanSum::new();
        for n in 0..self.cfg.n_terms {
            if sx[n] != T::zero() {
                acc.add(sx[n] * time[n] * space[n]);
            }
        }
        acc.value()
    }

    /// Cross-covariance `cov(y(py), u(pu))`.
    pub fn kyu(&self, py: SpaceTimePoint<T>, pu: SpaceTimePoint<T>) -> Result<T> {
        let sx = self.sine_vector(py.x)?;
        let space = self.kyu_space_vector(pu.x)?;
        let time = self.kyu_time_vector(py.t, pu.t)?;
        Ok(self.kyu_from_parts(&sx, &time, &space))
    }
}

pub fn kyy_mrna<T: Scalar>(
    p1: SpaceTimePoint<T>,
    p2: SpaceTimePoint<T>,
    kp: &KernelParams<T>,
    mech: &MechanisticParams<T>,
    cfg: &GreensConfig<T>,
) -> Result<T> {
    MrnaKernel::new(*kp, *mech, *cfg)?.kyy(p1, p2)
}

pub fn kyu_mrna<T: Scalar>(
    py: SpaceTimePoint<T>,
    pu: SpaceTimePoint<T>,
    kp: &KernelParams<T>,
    mech: &MechanisticParams<T>,
    cfg: &GreensConfig<T>,
) -> Result<T> {
    MrnaKernel::new(*kp, *mech, *cfg)?.kyu(py, pu)
}
