//! Prediction-quality scores: SMSE, Q² = 1 − SMSE, and coverage of k-σ intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_lengths<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Metric("empty input".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Metric(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Mean squared error standardised by the (biased, 1/n) variance of `truth`.
///
/// Predicting the constant mean of `truth` gives exactly 1.
pub fn smse<T: Scalar>(truth: &[T], mean: &[T]) -> Result<T> {
    check_lengths(truth, mean)?;
    let n = T::lit(truth.len() as f64);
    let mu = truth.iter().fold(T::zero(), |a, v| a + *v) / n;
    let var = truth.iter().fold(T::zero(), |a, v| a + (*v - mu) * (*v - mu)) / n;
    if var.is_nan() || var <= T::zero() {
        return Err(Error::Metric("truth has zero variance".into()));
    }
    let mse = truth.iter().zip(mean).fold(T::zero(), |a, (t, m)| a + (*t - *m) * (*t - *m)) / n;
    Ok(mse / var)
}

pub fn q2<T: Scalar>(truth: &[T], mean: &[T]) -> Result<T> {
    Ok(T::one() - smse(truth, mean)?)
}

/// Fraction of points with `|truth − mean| ≤ k_sigma·√variance` (boundary counts as covered).
pub fn coverage<T: Scalar>(truth: &[T], mean: &[T], variance: &[T], k_sigma: T) -> Result<T> {
    check_lengths(truth, mean)?;
    check_lengths(truth, variance)?;
    if variance.iter().any(|v| *v < T::zero() || !v.is_finite()) {
        return Err(Error::Metric("variance must be finite and >= 0".into()));
    }
    let hit = truth
        .iter()
        .zip(mean)
        .zip(variance)
        .filter(|((t, m), v)| (**t - **m).abs() <= k_sigma * v.sqrt())
        .count();
    Ok(T::lit(hit as f64) / T::lit(truth.len() as f64))
}

/// Scores for one channel, as reported in JSON output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScores {
    pub q2: f64,
    pub smse: f64,
    pub ca: f64,
}

impl ChannelScores {
    pub fn compute(truth: &[f64], mean: &[f64], variance: &[f64]) -> Result<Self> {
        let s = smse(truth, mean)?;
        Ok(Self { q2: 1.0 - s, smse: s, ca: coverage(truth, mean, variance, 1.0)? })
    }
}
