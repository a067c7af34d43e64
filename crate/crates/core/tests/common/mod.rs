#![allow(dead_code)]

use std::collections::HashSet;

use memnet::dataset::Dataset;
use memnet::scalar::rational::int;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` distinct points of the integer grid `[0, side)^dim` with random labels
/// covering every class when `n ≥ classes`.
pub fn random_grid(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize, side: i64) -> Dataset {
    assert!((side as f64).powi(dim as i32) >= n as f64, "grid too small");
    let mut seen = HashSet::new();
    let mut points: Vec<Vec<BigRational>> = Vec::with_capacity(n);
    while points.len() < n {
        let p: Vec<i64> = (0..dim).map(|_| rng.gen_range(0..side)).collect();
        if seen.insert(p.clone()) {
            points.push(p.into_iter().map(int).collect());
        }
    }
    let labels = (0..n).map(|i| if i < classes { i } else { rng.gen_range(0..classes) }).collect();
    Dataset::with_classes(points, labels, classes).unwrap()
}

/// First `n` points of the integer grid in row-major order, labels cycling.
pub fn grid(n: usize, dim: usize, classes: usize) -> Dataset {
    let side = (n as f64).powf(1.0 / dim as f64).ceil() as usize;
    let points = (0..n)
        .map(|i| {
            let mut k = i;
            (0..dim)
                .map(|_| {
                    let c = k % side;
                    k /= side;
                    int(c as i64)
                })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|i| (i * 7 + 3) % classes).collect();
    Dataset::with_classes(points, labels, classes).unwrap()
}
