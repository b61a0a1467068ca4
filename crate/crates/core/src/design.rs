//! Maximin Latin hypercube designs.
//!
//! A random LHD places exactly one point in each of the `n` strata of every
//! axis. Simulated annealing then swaps two entries within a single column,
//! which keeps every column a permutation of its strata, and keeps the
//! best design seen under the "distance between the two closest points"
//! criterion.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::SpaceTimeDesign;
use crate::kernel_se::SpaceTimePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhdConfig {
    pub n_points: usize,
    pub dims: usize,
    pub sa_iterations: usize,
    /// Initial temperature; `None` uses 0.1 × the starting min-distance.
    pub initial_temperature: Option<f64>,
    /// Geometric cooling factor applied every iteration.
    pub decay: f64,
    pub seed: u64,
}

impl LhdConfig {
    pub fn new(n_points: usize, dims: usize, seed: u64) -> Self {
        Self { n_points, dims, sa_iterations: 10_000, initial_temperature: None, decay: 0.995, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::Config("n_points must be >= 1".into()));
        }
        if self.dims == 0 {
            return Err(Error::Config("dims must be >= 1".into()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1), got {}", self.decay)));
        }
        if let Some(t) = self.initial_temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("initial temperature must be > 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// Points in `[0, 1)^dims`, one row per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDesign {
    pub dims: usize,
    pub points: Vec<Vec<f64>>,
}

impl UnitDesign {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest Euclidean distance between two distinct points (∞ for n < 2).
    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                best = best.min(dist(&self.points[i], &self.points[j]));
            }
        }
        best
    }

    /// True when every axis has exactly one point per stratum of width 1/n.
    pub fn is_latin(&self) -> bool {
        let n = self.points.len();
        (0..self.dims).all(|d| {
            let mut seen = vec![false; n];
            self.points.iter().all(|p| {
                let v = p[d];
                if !(0.0..1.0).contains(&v) {
                    return false;
                }
                let s = ((v * n as f64).floor() as usize).min(n - 1);
                !std::mem::replace(&mut seen[s], true)
            })
        })
    }

    /// Maps a 2-D unit design onto `[x0, x1] × [t0, t1]`.
    pub fn to_box(&self, x_range: (f64, f64), t_range: (f64, f64)) -> Result<SpaceTimeDesign> {
        if self.dims != 2 {
            return Err(Error::Shape(format!("space-time design needs 2 dims, have {}", self.dims)));
        }
        Ok(SpaceTimeDesign::new(
            self.points
                .iter()
                .map(|p| {
                    SpaceTimePoint::new(
                        x_range.0 + p[0] * (x_range.1 - x_range.0),
                        t_range.0 + p[1] * (t_range.1 - t_range.0),
                    )
                })
                .collect(),
        ))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn random_lhd(cfg: &LhdConfig) -> Result<UnitDesign> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(random_lhd_with(cfg.n_points, cfg.dims, &mut rng))
}

fn random_lhd_with(n: usize, dims: usize, rng: &mut impl Rng) -> UnitDesign {
    let mut points = vec![vec![0.0; dims]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..dims {
        perm.shuffle(rng);
        for (i, p) in points.iter_mut().enumerate() {
            let v = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
            // guard against rounding up to the next stratum
            p[d] = v.min((perm[i] as f64 + 1.0) / n as f64 - f64::EPSILON);
        }
    }
    UnitDesign { dims, points }
}

/// Outcome of [`maximin_sa`].
#[derive(Debug, Clone)]
pub struct MaximinResult {
    pub design: UnitDesign,
    pub min_distance: f64,
    /// Best-seen min-distance after each iteration.
    pub best_history: Vec<f64>,
}

/// Simulated-annealing improvement of an LHD under the maximin criterion.
pub fn maximin_sa(design: &UnitDesign, cfg: &LhdConfig) -> Result<MaximinResult> {
    cfg.validate()?;
    if !design.is_latin() {
        return Err(Error::Config("maximin_sa requires a valid Latin hypercube as input".into()));
    }
    let n = design.len();
    let mut current = design.clone();
    let mut current_d = current.min_distance();
    let mut best = current.clone();
    let mut best_d = current_d;
    let mut history = Vec::with_capacity(cfg.sa_iterations);
    if n < 2 || cfg.sa_iterations == 0 {
        return Ok(MaximinResult { design: best, min_distance: best_d, best_history: history });
    }
    // independent stream from the one random_lhd uses for the same seed
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut temp = cfg.initial_temperature.unwrap_or(0.1 * current_d);
    for _ in 0..cfg.sa_iterations {
        let col = rng.random_range(0..current.dims);
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        swap_entry(&mut current, i, j, col);
        let cand_d = current.min_distance();
        let delta = cand_d - current_d;
        let accept = delta >= 0.0 || (temp > 0.0 && rng.random::<f64>() < (delta / temp).exp());
        if accept {
            current_d = cand_d;
            if current_d > best_d {
                best_d = current_d;
                best = current.clone();
            }
        } else {
            swap_entry(&mut current, i, j, col);
        }
        temp *= cfg.decay;
        history.push(best_d);
    }
    Ok(MaximinResult { design: best, min_distance: best_d, best_history: history })
}

fn swap_entry(d: &mut UnitDesign, i: usize, j: usize, col: usize) {
    let tmp = d.points[i][col];
    d.points[i][col] = d.points[j][col];
    d.points[j][col] = tmp;
}

/// Random LHD followed by maximin annealing.
pub fn maximin_lhd(cfg: &LhdConfig) -> Result<UnitDesign> {
    let start = random_lhd(cfg)?;
    Ok(maximin_sa(&start, cfg)?.design)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let d = random_lhd(&LhdConfig::new(1, 3, 7)).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.points[0].iter().all(|v| (0.0..1.0).contains(v)));
        assert!(d.is_latin());
    }

    #[test]
    fn stratification_and_reproducibility() {
        let cfg = LhdConfig::new(10, 2, 42);
        let a = random_lhd(&cfg).unwrap();
        assert!(a.is_latin());
        assert_eq!(a, random_lhd(&cfg).unwrap());
        assert_ne!(a, random_lhd(&LhdConfig::new(10, 2, 43)).unwrap());
    }

    #[test]
    fn zero_iterations_is_identity() {
        let mut cfg = LhdConfig::new(8, 2, 1);
        let d = random_lhd(&cfg).unwrap();
        cfg.sa_iterations = 0;
        let r = maximin_sa(&d, &cfg).unwrap();
        assert_eq!(r.design, d);
    }

    #[test]
    fn annealing_keeps_latin_property_and_best_is_monotone() {
        let mut cfg = LhdConfig::new(12, 3, 5);
        cfg.sa_iterations = 2_000;
        let d = random_lhd(&cfg).unwrap();
        let r = maximin_sa(&d, &cfg).unwrap();
        assert!(r.design.is_latin());
        assert!(r.min_distance >= d.min_distance());
        assert!(r.best_history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.min_distance, r.design.min_distance());
    }

    #[test]
    fn rejects_bad_config_and_non_latin_input() {
        let mut cfg = LhdConfig::new(5, 2, 0);
        cfg.decay = 1.0;
        assert!(random_lhd(&cfg).is_err());
        let bad = UnitDesign { dims: 2, points: vec![vec![0.1, 0.1], vec![0.15, 0.9]] };
        assert!(maximin_sa(&bad, &LhdConfig::new(2, 2, 0)).is_err());
    }

    #[test]
    fn maps_to_box() {
        let d = UnitDesign { dims: 2, points: vec![vec![0.5, 0.25]] };
        let s = d.to_box((0.0, 2.0), (10.0, 14.0)).unwrap();
        assert_eq!(s.points[0], SpaceTimePoint::new(1.0, 11.0));
    }
}
