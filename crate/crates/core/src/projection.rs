//! Random one-dimensional projection onto well-separated scalars.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::{AffineLayer, Network, Neuron};
use crate::scalar::rational;
use crate::separateness::SeparatenessReport;

/// Bits of the dyadic denominator used for sampled directions.
pub const DIRECTION_BITS: u32 = 60;

/// Scalars whose floors are distinct integers in `[0, bound)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarizedDataset {
    pub values: Vec<BigRational>,
    pub bound: u64,
    pub labels: Vec<usize>,
    /// `(v, b)` with `values[i] = v·x_i + b`, when produced by a projection.
    pub affine: Option<(Vec<BigRational>, BigRational)>,
}

impl ScalarizedDataset {
    pub fn new(values: Vec<BigRational>, bound: u64, labels: Vec<usize>) -> Result<Self> {
        let s = ScalarizedDataset { values, bound, labels, affine: None };
        if s.values.len() != s.labels.len() {
            return Err(Error::InvalidArgument("values and labels differ in length".into()));
        }
        if !s.is_well_separated() {
            return Err(Error::InvalidArgument(format!("floors are not distinct integers in [0, {bound})")));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn floors(&self) -> Vec<u64> {
        self.values.iter().map(|v| rational::floor_u64(v).unwrap_or(u64::MAX)).collect()
    }

    /// Distinct floors, all nonnegative and below the bound.
    pub fn is_well_separated(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.values.len());
        self.values
            .iter()
            .all(|v| !v.is_negative() && rational::floor_u64(v).is_some_and(|f| f < self.bound && seen.insert(f)))
    }

    /// Shrinks the bound to one past the largest floor.
    pub fn tightened(mut self) -> Self {
        self.bound = self.floors().into_iter().max().map_or(1, |m| m + 1);
        self
    }

    pub fn max_floor(&self) -> u64 {
        self.floors().into_iter().max().unwrap_or(0)
    }

    /// The projection as a network with no hidden layers.
    pub fn projection_network(&self, input_dim: usize) -> Option<Network<BigRational>> {
        let (v, b) = self.affine.as_ref()?;
        let layer = AffineLayer::dense(input_dim, vec![Neuron::id(b.clone(), v.iter().cloned().enumerate().collect())]);
        Network::new(input_dim, vec![layer]).ok()
    }
}

fn dot(u: &[BigRational], x: &[BigRational]) -> BigRational {
    u.iter().zip(x).fold(BigRational::zero(), |acc, (a, b)| acc + a * b)
}

/// Smallest gap between sorted projections and their total range.
fn gap_and_range(proj: &[BigRational]) -> (BigRational, BigRational) {
    let mut sorted: Vec<&BigRational> = proj.iter().collect();
    sorted.sort();
    let gap = sorted.windows(2).map(|w| w[1] - w[0]).min().unwrap_or_else(BigRational::zero);
    let range = sorted[sorted.len() - 1] - sorted[0];
    (gap, range)
}

/// `range/gap < N²Δ·√(π·d/8)`, compared after squaring with π bounded below.
fn accepts(proj: &[BigRational], n: usize, dim: usize, ratio_sq: &BigRational) -> bool {
    let (gap, range) = gap_and_range(proj);
    if gap.is_zero() {
        return false;
    }
    let (pi_lo, _) = rational::pi_bounds();
    let n4 = rational::uint((n as u64).pow(4));
    let lhs = &range * &range * rational::int(8);
    let rhs = n4 * ratio_sq * pi_lo * rational::uint(dim as u64) * &gap * &gap;
    lhs < rhs
}

fn sample_direction(dim: usize, seed: u64, attempt: u64) -> Vec<BigRational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt);
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.iter().map(|x| rational::from_f64_dyadic(x / norm, DIRECTION_BITS)).collect();
        }
    }
}

/// Draws directions until the projected gap ratio passes the exact test.
pub fn find_direction(
    ds: &Dataset,
    report: &SeparatenessReport,
    max_attempts: usize,
    seed: u64,
) -> Result<Vec<BigRational>> {
    let dim = ds.dim();
    let mut e1 = vec![BigRational::zero(); dim];
    e1[0] = rational::int(1);
    if ds.len() == 1 || dim == 1 {
        return Ok(e1);
    }
    for attempt in 0..max_attempts as u64 {
        let u = sample_direction(dim, seed, attempt);
        let proj: Vec<BigRational> = ds.points().iter().map(|x| dot(&u, x)).collect();
        if accepts(&proj, ds.len(), dim, &report.ratio_sq) {
            return Ok(u);
        }
    }
    Err(Error::DirectionSearch(format!("{max_attempts} attempts rejected")))
}

/// `⌈N²Δ√(πd/8)⌉ + 1`, computed from an upper bound on π.
pub fn projection_bound(n: usize, dim: usize, ratio_sq: &BigRational) -> u64 {
    let (_, pi_hi) = rational::pi_bounds();
    let q = rational::uint((n as u64).pow(4)) * ratio_sq * pi_hi * rational::uint(dim as u64) / rational::int(8);
    let k: BigInt = rational::ceil_sqrt(&q) + 1;
    k.to_u64().unwrap_or(u64::MAX)
}

/// Normalizes the projections onto `u` so the smallest gap is 1 and the
/// smallest value is 0.
pub fn scalarize(ds: &Dataset, report: &SeparatenessReport, u: &[BigRational]) -> Result<ScalarizedDataset> {
    if u.len() != ds.dim() {
        return Err(Error::InputShape { expected: ds.dim(), got: u.len() });
    }
    let proj: Vec<BigRational> = ds.points().iter().map(|x| dot(u, x)).collect();
    let bound = projection_bound(ds.len(), ds.dim(), &report.ratio_sq);
    let min = proj.iter().min().expect("nonempty").clone();
    if ds.len() == 1 {
        let v = vec![BigRational::zero(); ds.dim()];
        return Ok(ScalarizedDataset {
            values: vec![BigRational::zero()],
            bound,
            labels: ds.labels().to_vec(),
            affine: Some((v, BigRational::zero())),
        });
    }
    let (gap, _) = gap_and_range(&proj);
    if gap.is_zero() {
        return Err(Error::DirectionSearch("two points project to the same value".into()));
    }
    let values: Vec<BigRational> = proj.iter().map(|p| (p - &min) / &gap).collect();
    let v: Vec<BigRational> = u.iter().map(|c| c / &gap).collect();
    let b = -(&min / &gap);
    let out = ScalarizedDataset { values, bound, labels: ds.labels().to_vec(), affine: Some((v, b)) };
    if !out.is_well_separated() {
        return Err(Error::DirectionSearch(format!(
            "projected range exceeds the bound {bound}; direction was not accepted"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational::{int, ratio};
    use crate::separateness::measure;

    fn ds_1d(xs: &[BigRational]) -> Dataset {
        Dataset::new(xs.iter().map(|x| vec![x.clone()]).collect(), vec![0; xs.len()]).unwrap()
    }

    #[test]
    fn uniform_spacing_becomes_integers() {
        let ds = ds_1d(&[int(0), ratio(5, 2), int(5)]);
        let rep = measure(&ds).unwrap();
        let u = find_direction(&ds, &rep, 10, 0).unwrap();
        assert_eq!(u, vec![int(1)]);
        let s = scalarize(&ds, &rep, &u).unwrap();
        assert_eq!(s.values, vec![int(0), int(1), int(2)]);
        assert_eq!(s.floors(), vec![0, 1, 2]);
    }

    #[test]
    fn uneven_spacing() {
        let ds = ds_1d(&[int(0), int(1), int(10)]);
        let rep = measure(&ds).unwrap();
        let s = scalarize(&ds, &rep, &[int(1)]).unwrap();
        assert_eq!(s.values, vec![int(0), int(1), int(10)]);
        assert!(s.bound >= 11);
        assert!(s.is_well_separated());
        assert_eq!(s.clone().tightened().bound, 11);
    }

    #[test]
    fn singleton() {
        let ds = ds_1d(&[int(4)]);
        let rep = measure(&ds).unwrap();
        let u = find_direction(&ds, &rep, 1, 0).unwrap();
        let s = scalarize(&ds, &rep, &u).unwrap();
        assert_eq!(s.values, vec![int(0)]);
    }

    #[test]
    fn two_basis_vectors_accept_most_directions() {
        let ds = Dataset::new(vec![vec![int(1), int(0)], vec![int(0), int(1)]], vec![0, 1]).unwrap();
        let rep = measure(&ds).unwrap();
        let accepted = (0..200)
            .filter(|&a| {
                let u = sample_direction(2, 9, a);
                let proj: Vec<_> = ds.points().iter().map(|x| dot(&u, x)).collect();
                accepts(&proj, 2, 2, &rep.ratio_sq)
            })
            .count();
        assert!(accepted > 100, "{accepted}");
    }

    #[test]
    fn projected_values_respect_bound_in_higher_dimensions() {
        let pts: Vec<Vec<BigRational>> = (0..12).map(|i| vec![int(i % 3), int(i / 3), int((i * 7) % 5)]).collect();
        let ds = Dataset::new(pts, (0..12).map(|i| i % 2).collect()).unwrap();
        let rep = measure(&ds).unwrap();
        let u = find_direction(&ds, &rep, 100, 5).unwrap();
        let s = scalarize(&ds, &rep, &u).unwrap();
        assert!(s.is_well_separated());
        assert!(s.values.iter().any(|v| v.is_zero()));
        let net = s.projection_network(3).unwrap();
        for (x, v) in ds.points().iter().zip(&s.values) {
            assert_eq!(&net.evaluate(x).unwrap()[0], v);
        }
        assert_eq!(s.labels, ds.labels());
    }
}
