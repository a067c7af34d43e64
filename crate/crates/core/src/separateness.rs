//! Ratio of the largest to the smallest pairwise distance of a point set.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::rational;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatenessReport {
    pub min_sq_dist: BigRational,
    pub max_sq_dist: BigRational,
    /// `max_sq_dist / min_sq_dist`, or 1 for a single point.
    pub ratio_sq: BigRational,
    /// `½·log2(ratio_sq)` rounded up to six decimals.
    pub log2_delta: f64,
}

impl SeparatenessReport {
    /// Strict test `max² < Δ²·min²`.
    pub fn is_separated(&self, delta: &BigRational) -> bool {
        if self.min_sq_dist.is_zero() {
            return true;
        }
        self.max_sq_dist < delta * delta * &self.min_sq_dist
    }

    pub fn to_json(&self) -> Value {
        json!({
            "min_sq_dist": rational::to_fraction_string(&self.min_sq_dist),
            "max_sq_dist": rational::to_fraction_string(&self.max_sq_dist),
            "ratio_sq": rational::to_fraction_string(&self.ratio_sq),
            "log2_delta": self.log2_delta,
        })
    }
}

pub fn sq_dist(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter().zip(b).fold(BigRational::zero(), |acc, (x, y)| {
        let d = x - y;
        acc + &d * &d
    })
}

fn round_up_6(x: f64) -> f64 {
    (x * 1e6).ceil() / 1e6
}

/// Exact all-pairs squared distances.
pub fn measure(ds: &Dataset) -> Result<SeparatenessReport> {
    let pts = ds.points();
    if pts.len() == 1 {
        return Ok(SeparatenessReport {
            min_sq_dist: BigRational::zero(),
            max_sq_dist: BigRational::zero(),
            ratio_sq: BigRational::one(),
            log2_delta: 0.0,
        });
    }
    let per_row: Vec<(BigRational, usize, BigRational)> = (0..pts.len() - 1)
        .into_par_iter()
        .map(|i| {
            let mut lo: Option<(BigRational, usize)> = None;
            let mut hi = BigRational::zero();
            for j in i + 1..pts.len() {
                let d = sq_dist(&pts[i], &pts[j]);
                if lo.as_ref().is_none_or(|(m, _)| d < *m) {
                    lo = Some((d.clone(), j));
                }
                if d > hi {
                    hi = d;
                }
            }
            let (lo, j) = lo.expect("at least one pair");
            (lo, j, hi)
        })
        .collect();
    let mut min_sq: Option<BigRational> = None;
    let mut max_sq = BigRational::zero();
    for (i, (lo, j, hi)) in per_row.into_iter().enumerate() {
        if lo.is_zero() {
            return Err(Error::DuplicateInput { first: i, second: j });
        }
        if min_sq.as_ref().is_none_or(|m| lo < *m) {
            min_sq = Some(lo);
        }
        if hi > max_sq {
            max_sq = hi;
        }
    }
    let min_sq = min_sq.expect("at least one pair");
    let ratio_sq = &max_sq / &min_sq;
    let log2_delta = round_up_6(0.5 * ratio_sq.to_f64().unwrap_or(f64::INFINITY).log2());
    Ok(SeparatenessReport { min_sq_dist: min_sq, max_sq_dist: max_sq, ratio_sq, log2_delta })
}

/// `log2((levels−1)·√(channels·a·b))`, the largest separateness ratio of
/// distinct images on an integer intensity grid.
pub fn image_bound(a: u64, b: u64, channels: u64, levels: u64) -> f64 {
    ((levels.saturating_sub(1)) as f64 * ((channels * a * b) as f64).sqrt()).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianReport {
    pub success_rate: f64,
    pub bound: f64,
    pub successes: usize,
    pub trials: usize,
}

/// `(N/√δ)^{2/d}·√(3e + (5e/d)·ln(N/√δ))`
pub fn gaussian_bound(n: usize, d: usize, delta: f64) -> f64 {
    let e = std::f64::consts::E;
    let q = n as f64 / delta.sqrt();
    let d = d as f64;
    q.powf(2.0 / d) * (3.0 * e + (5.0 * e / d) * q.ln()).sqrt()
}

/// Samples `trials` sets of `n` i.i.d. standard normal points in `d`
/// dimensions and reports how often their distance ratio is within
/// [`gaussian_bound`].
pub fn gaussian_check(n: usize, d: usize, delta: f64, trials: usize, seed: u64) -> Result<GaussianReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} must lie in (0, 1)")));
    }
    let bound = gaussian_bound(n, d, delta);
    let successes = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let pts: Vec<Vec<f64>> =
                (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..n {
                for j in i + 1..n {
                    let s: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
            }
            (hi / lo).sqrt() <= bound
        })
        .count();
    Ok(GaussianReport { success_rate: successes as f64 / trials as f64, bound, successes, trials })
}
