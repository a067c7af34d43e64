//! Sufficient conditions for a given architecture to memorize every
//! separated set of a given size, and a builder realizing a certificate.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::compression::{halve_step, squeeze_step, SqueezeLayout};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::memorizer::{bit_extract_width3, encode_labels, param_extract};
use crate::network::{AffineLayer, Network, Neuron};
use crate::pipeline::{verify, DIRECTION_ATTEMPTS};
use crate::projection::{find_direction, scalarize};
use crate::scalar::rational::{ceil_log2, ceil_sqrt, pi_bounds, uint};
use crate::separateness::measure;

type Q = BigRational;

/// Cut points `0 < L_1 < … < L_K < L` splitting the hidden layers into a
/// halving part, `K−2` squeeze parts, a parameter part and an extraction
/// part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CapacityCertificate {
    pub k: usize,
    pub cuts: Vec<usize>,
}

/// `⌈10⁶·√(2π·d_x)⌉ / 10⁶`, computed from an upper bound on π.
pub fn sqrt_2pi_dx_upper(dx: usize) -> Q {
    let (_, pi_hi) = pi_bounds();
    let scale = BigInt::from(10u64).pow(6);
    let radicand = pi_hi * uint(2 * dx as u64) * Q::from_integer(&scale * &scale);
    Q::new(ceil_sqrt(&radicand), scale)
}

fn check_widths(arch: &[usize]) -> Result<()> {
    if let Some(i) = arch.iter().position(|&d| d < 3) {
        return Err(Error::Architecture(format!("hidden layer {} has width {} < 3", i + 1, arch[i])));
    }
    if arch.is_empty() {
        return Err(Error::Architecture("architecture has no hidden layers".into()));
    }
    Ok(())
}

fn halving_product(arch: &[usize]) -> BigInt {
    arch.iter().fold(BigInt::one(), |p, &d| p * BigInt::from(d.div_ceil(2)))
}

fn spare(arch: &[usize]) -> u64 {
    arch.iter().map(|&d| (d - 2) as u64).sum()
}

/// `∏⌊(d_ℓ+1)/2⌋ ≥ Δ·√(2π d_x)` over the first `l1` layers, squared.
fn first_condition(arch: &[usize], l1: usize, delta_sq: &Q, s: &Q) -> bool {
    let p = Q::from_integer(halving_product(&arch[..l1]));
    &p * &p >= delta_sq * s * s
}

/// `⌊(L−L_K)/(2⌈log2 C⌉+1)⌋`
fn extraction_blocks(tail: usize, classes: usize) -> u64 {
    (tail / (2 * ceil_log2(classes as u64) as usize + 1)) as u64
}

fn third_value(arch: &[usize], k: usize, l_prev: usize, l_k: usize, classes: usize) -> BigInt {
    (BigInt::from(spare(&arch[l_prev..l_k])) * extraction_blocks(arch.len() - l_k, classes)) << k
}

/// `⌊log2 N⌋`
fn floor_log2(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        (usize::BITS - 1 - n.leading_zeros()) as usize
    }
}

/// Evaluates the three sufficient conditions exactly.
pub fn check(
    arch: &[usize],
    delta_sq: &Q,
    dx: usize,
    classes: usize,
    n: usize,
    cert: &CapacityCertificate,
) -> Result<bool> {
    check_widths(arch)?;
    let l = arch.len();
    let k = cert.k;
    if k < 2 || k > floor_log2(n) || cert.cuts.len() != k {
        return Ok(false);
    }
    if cert.cuts[0] == 0 || cert.cuts.windows(2).any(|w| w[0] >= w[1]) || cert.cuts[k - 1] >= l {
        return Ok(false);
    }
    let cuts = &cert.cuts;
    if !first_condition(arch, cuts[0], delta_sq, &sqrt_2pi_dx_upper(dx)) {
        return Ok(false);
    }
    for i in 2..k {
        // parts are 1-based: part i spans layers L_{i−1}+1 ..= L_i
        if spare(&arch[cuts[i - 2]..cuts[i - 1]]) < 1u64 << (i + 3) {
            return Ok(false);
        }
    }
    let lhs = third_value(arch, k, cuts[k - 2], cuts[k - 1], classes);
    let nn = BigInt::from(n);
    Ok(lhs >= &nn * &nn + 4)
}

/// Greedy certificate for a fixed `K`: smallest `L_1`, smallest squeeze
/// parts, then the `L_K` maximizing the third condition's left side.
fn greedy(arch: &[usize], delta_sq: &Q, dx: usize, classes: usize, k: usize) -> Option<(CapacityCertificate, BigInt)> {
    if k < 2 {
        return None;
    }
    let l = arch.len();
    let s = sqrt_2pi_dx_upper(dx);
    let l1 = (1..l).find(|&l1| first_condition(arch, l1, delta_sq, &s))?;
    let mut cuts = vec![l1];
    for i in 2..k {
        let start = *cuts.last().expect("nonempty");
        let need = 1u64 << (i + 3);
        let mut acc = 0u64;
        let end = (start + 1..l).find(|&e| {
            acc += (arch[e - 1] - 2) as u64;
            acc >= need
        })?;
        cuts.push(end);
    }
    let prev = *cuts.last().expect("nonempty");
    let (best_lk, value) = (prev + 1..l)
        .map(|lk| (lk, third_value(arch, k, prev, lk, classes)))
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))?;
    cuts.push(best_lk);
    Some((CapacityCertificate { k, cuts }, value))
}

/// Largest `N` some certificate admits, with that certificate.
///
/// For a fixed `K` the greedy certificate maximizes the third condition's
/// left side `V`, so `N = ⌊√(V−4)⌋` when `N ≥ 2^K`.
pub fn max_memorizable(
    arch: &[usize],
    delta_sq: &Q,
    dx: usize,
    classes: usize,
) -> Result<(usize, Option<CapacityCertificate>)> {
    check_widths(arch)?;
    let mut best: (usize, Option<CapacityCertificate>) = (0, None);
    for k in 2..arch.len().clamp(2, 62) {
        let Some((cert, value)) = greedy(arch, delta_sq, dx, classes, k) else {
            break;
        };
        if value < BigInt::from(4) {
            continue;
        }
        let n: BigInt = ceil_sqrt(&Q::from_integer(&value - 3)) - 1;
        let n: usize = n.try_into().unwrap_or(usize::MAX);
        if n >> k == 0 {
            continue;
        }
        if n > best.0 {
            best = (n, Some(cert));
        }
    }
    Ok(best)
}

/// The greedy certificate with exactly `k` parts, if the first two
/// conditions can be met.
pub fn certificate_for_k(
    arch: &[usize],
    delta_sq: &Q,
    dx: usize,
    classes: usize,
    k: usize,
) -> Result<Option<CapacityCertificate>> {
    check_widths(arch)?;
    Ok(greedy(arch, delta_sq, dx, classes, k).map(|(c, _)| c))
}

/// Some certificate for exactly `n` points, trying every admissible `K`.
pub fn certify(
    arch: &[usize],
    delta_sq: &Q,
    dx: usize,
    classes: usize,
    n: usize,
) -> Result<Option<CapacityCertificate>> {
    check_widths(arch)?;
    for k in 2..=floor_log2(n).min(arch.len().saturating_sub(1)) {
        if let Some((cert, _)) = greedy(arch, delta_sq, dx, classes, k) {
            if check(arch, delta_sq, dx, classes, n, &cert)? {
                return Ok(Some(cert));
            }
        }
    }
    Ok(None)
}

/// Identity on `(w, x)` through hidden layers of the given widths.
fn passthrough2(widths: &[usize]) -> Network<Q> {
    let mut layers = Vec::with_capacity(widths.len() + 1);
    let mut in_dim = 2;
    for &d in widths {
        let mut neurons = vec![Neuron::id(Q::zero(), vec![(0, Q::one())]), Neuron::id(Q::zero(), vec![(1, Q::one())])];
        neurons.resize_with(d, Neuron::dummy);
        layers.push(AffineLayer::dense(in_dim, neurons));
        in_dim = d;
    }
    layers.push(AffineLayer::dense(
        in_dim,
        vec![Neuron::id(Q::zero(), vec![(0, Q::one())]), Neuron::id(Q::zero(), vec![(1, Q::one())])],
    ));
    Network::new(2, layers).expect("well formed")
}

/// Constant `value` through hidden layers of the given widths.
fn constant_shaped(dx: usize, widths: &[usize], value: usize) -> Network<Q> {
    let mut layers = Vec::with_capacity(widths.len() + 1);
    let mut in_dim = dx;
    for &d in widths {
        layers.push(AffineLayer::dense(in_dim, (0..d).map(|_| Neuron::dummy()).collect()));
        in_dim = d;
    }
    layers.push(AffineLayer::dense(in_dim, vec![Neuron::id(uint(value as u64), Vec::new())]));
    Network::new(dx, layers).expect("well formed")
}

/// Builds a STEP+ID network with hidden widths exactly `arch` that
/// memorizes `ds`, following the certificate's partition.
pub fn build_from_certificate(arch: &[usize], cert: &CapacityCertificate, ds: &Dataset) -> Result<Network<Q>> {
    check_widths(arch)?;
    let y0 = ds.labels()[0];
    if ds.labels().iter().all(|&y| y == y0) {
        return Ok(constant_shaped(ds.dim(), arch, y0));
    }
    let rep = measure(ds)?;
    if !check(arch, &rep.ratio_sq, ds.dim(), ds.classes(), ds.len(), cert)? {
        return Err(Error::Certificate(format!("conditions fail for K={} cuts {:?}", cert.k, cert.cuts)));
    }
    let cuts = &cert.cuts;
    let k = cert.k;
    let u = find_direction(ds, &rep, DIRECTION_ATTEMPTS, 0)?;
    let s = scalarize(ds, &rep, &u)?;
    let mut net = s.projection_network(ds.dim()).expect("scalarize records its map");
    let mut cur = s.tightened();

    for &d in &arch[..cuts[0]] {
        let step = halve_step(&cur, d)?;
        net = net.compose(step.fragment)?;
        cur = step.out;
    }
    for i in 2..k {
        let widths = &arch[cuts[i - 2]..cuts[i - 1]];
        let c = spare(widths).div_ceil(2).max(1);
        let step = squeeze_step(&cur, c, &SqueezeLayout::Exact(widths.to_vec()))?;
        net = net.compose(step.fragment)?;
        cur = step.out;
    }
    let cur = cur.tightened();

    let extract_widths = &arch[cuts[k - 2]..cuts[k - 1]];
    let a = spare(extract_widths) as usize;
    let d = ceil_log2(ds.classes() as u64).max(1);
    let b = (cur.bound as usize).div_ceil(a).max(1);
    let tail = &arch[cuts[k - 1]..];
    let chain_len = (2 * d as usize + 1) * b;
    if chain_len > tail.len() {
        return Err(Error::Certificate(format!(
            "bound {} needs {chain_len} extraction layers, {} available",
            cur.bound,
            tail.len()
        )));
    }
    let labels = cur.floors().into_iter().zip(cur.labels.iter().copied()).collect();
    let enc = encode_labels(&labels, a, b, d)?;
    net = net.compose(param_extract(&enc, extract_widths)?)?;
    let (pad, chain) = tail.split_at(tail.len() - chain_len);
    if !pad.is_empty() {
        net = net.compose(passthrough2(pad))?;
    }
    net = net.compose(bit_extract_width3(b, d)?.pad_hidden(chain)?)?;

    if net.hidden_widths() != arch {
        return Err(Error::Certificate("assembled widths differ from the architecture".into()));
    }
    let report = verify(&net, ds, &Q::zero())?;
    if !report.pass {
        return Err(Error::Certificate("assembled network misses a label".into()));
    }
    Ok(net)
}
