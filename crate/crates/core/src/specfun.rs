//! Real error functions and the complex Faddeeva function.
//!
//! `erf`, `erfc` and the scaled `erfcx(x) = exp(x²)·erfc(x)` use W. J. Cody's
//! rational Chebyshev approximations. The Faddeeva function
//! `w(z) = exp(-z²)·erfc(-iz)` uses Weideman's rational expansion with 40
//! terms in the upper half plane and the reflection
//! `w(z) = 2·exp(-z²) - w(-z)` below the real axis.
//!
//! The checked entry points reject non-finite input and report overflow.
//! The `*_raw` variants skip validation for the kernel inner loops; they
//! propagate non-finite values instead of failing.

// coefficient tables are kept exactly as published
#![allow(clippy::excessive_precision)]

use std::sync::OnceLock;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Complex argument / value of the Faddeeva function.
pub type ComplexValue<T> = Complex<T>;

const THRESHOLD: f64 = 0.46875;
const XBIG: f64 = 26.543;
const XNEG: f64 = -26.628_735_713_751_4;
const FRAC_1_SQRT_PI: f64 = 0.5 * std::f64::consts::FRAC_2_SQRT_PI;

// erf on |x| <= 0.46875
const A: [f64; 5] = [
    3.161_123_743_870_565_6,
    113.864_154_151_050_156,
    377.485_237_685_302_021,
    3_209.377_589_138_469_47,
    0.185_777_706_184_603_153,
];
const B: [f64; 4] = [
    23.601_290_952_344_120_9,
    244.024_637_934_444_173,
    1_282.616_526_077_372_28,
    2_844.236_833_439_170_62,
];
// erfcx on 0.46875 < x <= 4
const C: [f64; 9] = [
    0.564_188_496_988_670_089,
    8.883_149_794_388_375_94,
    66.119_190_637_141_629_5,
    298.635_138_197_400_131,
    881.952_221_241_769_09,
    1_712.047_612_634_070_58,
    2_051.078_377_826_071_47,
    1_230.339_354_797_997_25,
    2.153_115_354_744_038_46e-8,
];
const D: [f64; 8] = [
    15.744_926_110_709_834_7,
    117.693_950_891_312_499,
    537.181_101_862_009_858,
    1_621.389_574_566_690_19,
    3_290.799_235_733_459_63,
    4_362.619_090_143_247_16,
    3_439.367_674_143_721_64,
    1_230.339_354_803_749_42,
];
// erfcx on x > 4, in powers of 1/x²
const P: [f64; 6] = [
    0.305_326_634_961_232_344,
    0.360_344_899_949_804_439,
    0.125_781_726_111_229_246,
    0.016_083_785_148_742_276_6,
    6.587_491_615_298_378_03e-4,
    0.016_315_387_137_302_097_8,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822_42,
    1.872_952_849_923_460_47,
    0.527_905_102_951_428_412,
    0.060_518_341_312_441_319_1,
    0.002_335_204_976_268_691_85,
];

#[inline]
fn l<T: Scalar>(x: f64) -> T {
    T::lit(x)
}

#[inline]
fn small_ratio<T: Scalar>(z: T) -> T {
    let num = (((l::<T>(A[4]) * z + l(A[0])) * z + l(A[1])) * z + l(A[2])) * z + l(A[3]);
    let den = (((z + l(B[0])) * z + l(B[1])) * z + l(B[2])) * z + l(B[3]);
    num / den
}

#[inline]
fn mid_ratio<T: Scalar>(y: T) -> T {
    let mut num = l::<T>(C[8]) * y;
    for c in &C[..7] {
        num = (num + l(*c)) * y;
    }
    num = num + l(C[7]);
    let mut den = y;
    for d in &D[..7] {
        den = (den + l(*d)) * y;
    }
    den = den + l(D[7]);
    num / den
}

#[inline]
fn tail_ratio<T: Scalar>(z: T) -> T {
    let num = z
        * (((((l::<T>(P[5]) * z + l(P[0])) * z + l(P[1])) * z + l(P[2])) * z + l(P[3])) * z
            + l(P[4]));
    let den = ((((z + l(Q[0])) * z + l(Q[1])) * z + l(Q[2])) * z + l(Q[3])) * z + l(Q[4]);
    num / den
}

/// exp(-y²) split so the rounding of y² does not leak into the result.
#[inline]
fn exp_neg_sq<T: Scalar>(y: T) -> T {
    let sixteen = l::<T>(16.0);
    let yt = (y * sixteen).trunc() / sixteen;
    (-yt * yt).exp() * (-(y - yt) * (y + yt)).exp()
}

#[inline]
fn exp_pos_sq<T: Scalar>(y: T) -> T {
    let sixteen = l::<T>(16.0);
    let yt = (y * sixteen).trunc() / sixteen;
    (yt * yt).exp() * ((y - yt) * (y + yt)).exp()
}

/// erfcx(y) for y > 0.46875.
#[inline]
fn erfcx_upper<T: Scalar>(y: T) -> T {
    if y <= l(4.0) {
        mid_ratio(y)
    } else {
        let z = T::one() / (y * y);
        (l::<T>(FRAC_1_SQRT_PI) - tail_ratio(z)) / y
    }
}

/// erfc(|x|) for |x| > 0.46875.
#[inline]
fn erfc_abs_upper<T: Scalar>(y: T) -> T {
    if y >= l(XBIG) {
        T::zero()
    } else {
        erfcx_upper(y) * exp_neg_sq(y)
    }
}

pub fn erf_raw<T: Scalar>(x: T) -> T {
    let y = x.abs();
    if y <= l(THRESHOLD) {
        return x * small_ratio(y * y);
    }
    let ec = erfc_abs_upper(y);
    if x < T::zero() {
        ec - T::one()
    } else {
        T::one() - ec
    }
}

pub fn erfc_raw<T: Scalar>(x: T) -> T {
    let y = x.abs();
    if y <= l(THRESHOLD) {
        return T::one() - x * small_ratio(y * y);
    }
    let ec = erfc_abs_upper(y);
    if x < T::zero() {
        l::<T>(2.0) - ec
    } else {
        ec
    }
}

pub fn erfcx_raw<T: Scalar>(x: T) -> T {
    let y = x.abs();
    if y <= l(THRESHOLD) {
        let z = y * y;
        return z.exp() * (T::one() - x * small_ratio(z));
    }
    if x < l(XNEG) {
        return T::infinity();
    }
    let r = erfcx_upper(y);
    if x < T::zero() {
        l::<T>(2.0) * exp_pos_sq(x) - r
    } else {
        r
    }
}

fn check_finite<T: Scalar>(func: &'static str, x: T) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { func, arg: format!("{x}") })
    }
}

/// Error function, absolute error below 1e-15 in double precision.
pub fn erf<T: Scalar>(x: T) -> Result<T> {
    check_finite("erf", x)?;
    Ok(erf_raw(x))
}

/// Complementary error function without cancellation for large positive x.
pub fn erfc<T: Scalar>(x: T) -> Result<T> {
    check_finite("erfc", x)?;
    Ok(erfc_raw(x))
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Bounded by 1 for x ≥ 0 and decays like `1/(x√π)`; overflows for
/// x below about -26.6.
pub fn erfcx<T: Scalar>(x: T) -> Result<T> {
    check_finite("erfcx", x)?;
    let v = erfcx_raw(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow { context: format!("erfcx({x})") })
    }
}

const WEIDEMAN_TERMS: usize = 40;

struct Weideman {
    l: f64,
    coeffs: [f64; WEIDEMAN_TERMS],
}

fn weideman() -> &'static Weideman {
    static TABLE: OnceLock<Weideman> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = WEIDEMAN_TERMS;
        let m = 2 * n;
        let m2 = 2 * m;
        let l = (n as f64 / std::f64::consts::SQRT_2).sqrt();
        // samples f_k for k = -m+1..m-1, preceded by a zero, then fftshifted
        let mut f = vec![0.0f64; m2];
        for (idx, k) in (-(m as i64) + 1..m as i64).enumerate() {
            let theta = k as f64 * std::f64::consts::PI / m as f64;
            let t = l * (theta / 2.0).tan();
            f[idx + 1] = (-t * t).exp() * (l * l + t * t);
        }
        let shifted: Vec<f64> = (0..m2).map(|i| f[(i + m) % m2]).collect();
        let mut coeffs = [0.0; WEIDEMAN_TERMS];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let freq = (j + 1) as f64;
            let re: f64 = shifted
                .iter()
                .enumerate()
                .map(|(k, v)| v * (2.0 * std::f64::consts::PI * freq * k as f64 / m2 as f64).cos())
                .sum();
            *c = re / m2 as f64;
        }
        Weideman { l, coeffs }
    })
}

/// w(z) for Im z >= 0.
fn faddeeva_upper<T: Scalar>(z: Complex<T>) -> Complex<T> {
    let tab = weideman();
    let lw = l::<T>(tab.l);
    let i = Complex::new(T::zero(), T::one());
    let den = Complex::new(lw, T::zero()) - i * z;
    let zz = (Complex::new(lw, T::zero()) + i * z) / den;
    let mut p = Complex::new(T::zero(), T::zero());
    for c in tab.coeffs.iter().rev() {
        p = p * zz + Complex::new(l::<T>(*c), T::zero());
    }
    let two = l::<T>(2.0);
    p * two / (den * den) + Complex::new(l::<T>(FRAC_1_SQRT_PI), T::zero()) / den
}

pub fn faddeeva_raw<T: Scalar>(z: Complex<T>) -> Complex<T> {
    if z.im >= T::zero() {
        faddeeva_upper(z)
    } else {
        let two = l::<T>(2.0);
        (-(z * z)).exp() * two - faddeeva_upper(-z)
    }
}

/// Faddeeva function `w(z) = exp(-z²)·erfc(-iz)`.
///
/// Relative error is below 1e-13 across the upper half plane. In the lower
/// half plane `w` grows like `exp(y² - x²)`; arguments where that overflows
/// return [`Error::Overflow`] naming `z`.
pub fn faddeeva<T: Scalar>(z: ComplexValue<T>) -> Result<ComplexValue<T>> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain { func: "faddeeva", arg: format!("{z}") });
    }
    let w = faddeeva_raw(z);
    if w.re.is_finite() && w.im.is_finite() {
        Ok(w)
    } else {
        Err(Error::Overflow { context: format!("faddeeva({z})") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn erf_origin_and_odd() {
        assert_eq!(erf(0.0f64).unwrap(), 0.0);
        for x in [0.5, 2.0] {
            assert_eq!(erf(-x).unwrap(), -erf(x).unwrap());
        }
    }

    #[test]
    fn erfc_reflection() {
        assert_eq!(erfc(0.0f64).unwrap(), 1.0);
        for x in [0.1, 0.7, 1.5, 3.0, 6.0] {
            assert_relative_eq!(erfc(-x).unwrap(), 2.0 - erfc(x).unwrap(), epsilon = 1e-15);
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(erf(f64::NAN), Err(Error::Domain { .. })));
        assert!(matches!(erfc(f64::INFINITY), Err(Error::Domain { .. })));
        assert!(matches!(erfcx(f64::NEG_INFINITY), Err(Error::Domain { .. })));
        assert!(faddeeva(Complex::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn erfcx_overflow_reported() {
        assert!(matches!(erfcx(-30.0f64), Err(Error::Overflow { .. })));
        assert!(erfcx(-26.0f64).is_ok());
    }

    #[test]
    fn faddeeva_overflow_names_argument() {
        let err = faddeeva(Complex::new(0.0f64, -40.0)).unwrap_err();
        assert!(err.to_string().contains("-40"), "{err}");
    }

    #[test]
    fn faddeeva_at_origin() {
        let w = faddeeva(Complex::new(0.0f64, 0.0)).unwrap();
        assert_relative_eq!(w.re, 1.0, epsilon = 1e-14);
        assert!(w.im.abs() < 1e-15);
    }

    #[test]
    fn erfcx_matches_unscaled_where_safe() {
        for x in [-3.0f64, -0.3, 0.0, 0.2, 0.47, 1.0, 3.9, 4.1, 10.0] {
            let direct = (x * x).exp() * erfc(x).unwrap();
            assert_relative_eq!(erfcx(x).unwrap(), direct, max_relative = 1e-13);
        }
    }

    #[test]
    fn f32_instantiation_is_close() {
        let a = erf(0.8f32).unwrap() as f64;
        assert!((a - erf(0.8f64).unwrap()).abs() < 1e-6);
        let w = faddeeva(Complex::new(1.0f32, 0.5)).unwrap();
        let w64 = faddeeva(Complex::new(1.0f64, 0.5)).unwrap();
        assert!((w.re as f64 - w64.re).abs() < 1e-5);
    }
}
