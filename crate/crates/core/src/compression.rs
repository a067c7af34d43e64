//! Shrinking the integer range of well-separated scalars while keeping
//! their floors distinct.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{AffineLayer, Network, Neuron};
use crate::projection::ScalarizedDataset;
use crate::scalar::rational::{ceil_int, uint};

type Q = BigRational;

/// Summary of one compression round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub kind: &'static str,
    pub bound_in: u64,
    pub bound_out: u64,
    pub offsets: Vec<u64>,
    pub hidden_layers: usize,
    pub params: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub fragment: Network<Q>,
    pub out: ScalarizedDataset,
    pub offsets: Vec<u64>,
}

impl StepOutcome {
    fn report(&self, kind: &'static str, bound_in: u64) -> RoundReport {
        let s = self.fragment.stats();
        RoundReport {
            kind,
            bound_in,
            bound_out: self.out.bound,
            offsets: self.offsets.clone(),
            hidden_layers: s.hidden_layers,
            params: s.param_count,
        }
    }
}

fn div_ceil(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// `⌊N²/4⌋ + 1`
pub fn pair_floor(n: usize) -> u64 {
    (n as u64 * n as u64) / 4 + 1
}

/// `⌈x / a⌉` for rationals.
pub fn ceil_div(x: &Q, a: &Q) -> BigInt {
    ceil_int(&(x / a))
}

/// Smallest `b ∈ [0, t)` such that `(f + b) mod t` avoids `occupied` for
/// every floor `f` in `block`.
fn smallest_offset(block: &[u64], t: u64, occupied: &HashSet<u64>) -> Option<u64> {
    let mut forbidden = HashSet::with_capacity(block.len() * occupied.len());
    for &f in block {
        for &s in occupied {
            forbidden.insert((s + t - f % t) % t);
        }
    }
    (0..t).find(|b| !forbidden.contains(b))
}

fn id_in(col: usize) -> Vec<(usize, Q)> {
    vec![(col, Q::one())]
}

/// One hidden layer passing `x` through, padded to `width`.
fn identity_layer_net(width: usize) -> Network<Q> {
    let mut neurons = vec![Neuron::id(Q::zero(), id_in(0))];
    neurons.resize_with(width.max(1), Neuron::dummy);
    let hidden = AffineLayer::dense(1, neurons);
    let out = AffineLayer::dense(width.max(1), vec![Neuron::id(Q::zero(), id_in(0))]);
    Network::new(1, vec![hidden, out]).expect("well formed")
}

/// Folds every chunk `[iT, (i+1)T)` of the range onto `[0, T)` with a
/// shift `b_i`, using one hidden layer of the given width.
pub fn halve_step(values: &ScalarizedDataset, width: usize) -> Result<StepOutcome> {
    let n = values.len();
    let k = values.bound;
    let halves = (width as u64).div_ceil(2);
    let t = div_ceil(k, halves.max(1)).max(pair_floor(n));
    if k <= t || width < 3 {
        return Ok(StepOutcome { fragment: identity_layer_net(width), out: values.clone(), offsets: Vec::new() });
    }
    let chunks = (width as u64 - 1) / 2;
    let floors = values.floors();
    let mut occupied: HashSet<u64> = floors.iter().copied().filter(|&f| f < t).collect();
    let mut offsets = Vec::with_capacity(chunks as usize);
    for i in 1..=chunks {
        let block: Vec<u64> = floors.iter().copied().filter(|&f| f / t == i).collect();
        let b = smallest_offset(&block, t, &occupied)
            .ok_or_else(|| Error::CompressionInfeasible(format!("halving chunk {i} with T={t}")))?;
        occupied.extend(block.iter().map(|f| (f + b) % t));
        offsets.push(b);
    }

    let tq = uint(t);
    let new_values = values
        .values
        .iter()
        .zip(&floors)
        .map(|(x, &f)| {
            let i = f / t;
            if i == 0 {
                return x.clone();
            }
            let b = uint(offsets[i as usize - 1]);
            let mut y = x + &b - uint(i) * &tq;
            if x + &b >= uint(i + 1) * &tq {
                y -= &tq;
            }
            y
        })
        .collect();

    // x + Σ_j (b_j − b_{j−1})·1[x ≥ jT] − T·1[x ≥ T] − T·Σ_j 1[x + b_j ≥ (j+1)T]
    let mut neurons = vec![Neuron::id(Q::zero(), id_in(0))];
    let mut out_weights = vec![(0usize, Q::one())];
    let mut prev = 0u64;
    for (j, &b) in (1..=chunks).zip(&offsets) {
        neurons.push(Neuron::step(-(uint(j) * &tq), id_in(0)));
        let mut coeff = uint(b) - uint(prev);
        if j == 1 {
            coeff -= &tq;
        }
        out_weights.push((neurons.len() - 1, coeff));
        prev = b;
    }
    for (j, &b) in (1..=chunks).zip(&offsets) {
        neurons.push(Neuron::step(uint(b) - uint(j + 1) * &tq, id_in(0)));
        out_weights.push((neurons.len() - 1, -tq.clone()));
    }
    neurons.resize_with(width, Neuron::dummy);
    let hidden = AffineLayer::dense(1, neurons);
    let out = AffineLayer::dense(width, vec![Neuron::id(Q::zero(), out_weights)]);
    let fragment = Network::new(1, vec![hidden, out])?;

    Ok(StepOutcome {
        fragment,
        out: ScalarizedDataset { values: new_values, bound: t, labels: values.labels.clone(), affine: None },
        offsets,
    })
}

/// How a squeeze round spreads its indicator neurons over layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SqueezeLayout {
    /// A single hidden layer just wide enough.
    OneLayer,
    /// As many layers of this width as needed.
    Width(usize),
    /// Exactly these layer widths.
    Exact(Vec<usize>),
}

/// Indicator `1[x ≥ threshold]` contributing `coeff` to the output.
struct Indicator {
    threshold: Q,
    coeff: Q,
}

/// Running-sum network over the given widths: every layer but the last
/// carries `[x copy, accumulator, indicators...]`, the last carries
/// `[accumulator, indicators...]`.
fn accumulate_net(widths: &[usize], indicators: &[Indicator]) -> Result<Network<Q>> {
    let l = widths.len();
    let slots: usize = widths
        .iter()
        .enumerate()
        .map(|(i, &d)| if i + 1 == l { d.saturating_sub(1) } else { d.saturating_sub(2) })
        .sum();
    if widths.iter().any(|&d| d < 2) && l > 1 || widths.is_empty() || widths[l - 1] < 1 {
        return Err(Error::Architecture(format!("layer widths {widths:?} too narrow")));
    }
    if slots < indicators.len() {
        return Err(Error::Architecture(format!("{} indicators do not fit in widths {widths:?}", indicators.len())));
    }
    let mut layers = Vec::with_capacity(l + 1);
    let mut next = indicators.iter();
    // (column of x, column of accumulator, indicator columns with coefficients) in the previous layer
    let mut x_col = 0usize;
    let mut acc_in: Vec<(usize, Q)> = vec![(0, Q::one())];
    let mut in_dim = 1usize;
    for (i, &d) in widths.iter().enumerate() {
        let last = i + 1 == l;
        let mut neurons = Vec::with_capacity(d);
        if !last {
            neurons.push(Neuron::id(Q::zero(), id_in(x_col)));
        }
        neurons.push(Neuron::id(Q::zero(), acc_in.clone()));
        let acc_col = neurons.len() - 1;
        let mut fresh = Vec::new();
        while neurons.len() < d {
            match next.next() {
                Some(ind) => {
                    neurons.push(Neuron::step(-ind.threshold.clone(), id_in(x_col)));
                    fresh.push((neurons.len() - 1, ind.coeff.clone()));
                }
                None => neurons.push(Neuron::dummy()),
            }
        }
        layers.push(AffineLayer::dense(in_dim, neurons));
        acc_in = vec![(acc_col, Q::one())];
        acc_in.extend(fresh);
        x_col = 0;
        in_dim = d;
    }
    layers.push(AffineLayer::dense(in_dim, vec![Neuron::id(Q::zero(), acc_in)]));
    Network::new(1, layers)
}

/// Moves the values above `T` into `[0, T)` block by block, each block
/// `[M_i, M_{i+1})` holding at most `⌈N/C⌉` points and receiving its own
/// shift `b_i`.
pub fn squeeze_step(values: &ScalarizedDataset, c_param: u64, layout: &SqueezeLayout) -> Result<StepOutcome> {
    if c_param == 0 {
        return Err(Error::InvalidArgument("C must be positive".into()));
    }
    let n = values.len() as u64;
    let k = values.bound;
    let per_block = div_ceil(n, c_param);
    let t = k.min((n * per_block).max(div_ceil(k, 2)));
    if let SqueezeLayout::Exact(w) = layout {
        let useful: usize = w.iter().map(|d| d.saturating_sub(2)).sum();
        if (useful as u64) + 1 < 2 * c_param {
            return Err(Error::Architecture(format!(
                "widths {w:?} hold {useful} indicators, C={c_param} needs {}",
                2 * c_param - 1
            )));
        }
    }

    let floors = values.floors();
    let mut upper: Vec<u64> = floors.iter().copied().filter(|&f| f >= t).collect();
    upper.sort_unstable();
    let blocks: Vec<&[u64]> = if t < k { upper.chunks(per_block as usize).collect() } else { Vec::new() };

    let mut starts: Vec<u64> = blocks.iter().map(|b| b[0]).collect();
    if let Some(first) = starts.first_mut() {
        *first = t;
    }
    starts.push(k);

    let mut occupied: HashSet<u64> = floors.iter().copied().filter(|&f| f < t).collect();
    let mut offsets = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let b = smallest_offset(block, t, &occupied)
            .ok_or_else(|| Error::CompressionInfeasible(format!("squeeze block {} with T={t}", i + 1)))?;
        occupied.extend(block.iter().map(|f| (f + b) % t));
        offsets.push(b);
    }

    let tq = uint(t);
    let mut indicators = Vec::with_capacity(2 * blocks.len());
    for i in 0..blocks.len() {
        let b = uint(offsets[i]);
        let coeff = if i == 0 { &b - &tq } else { &tq + &b - uint(offsets[i - 1]) };
        indicators.push(Indicator { threshold: uint(starts[i]), coeff });
        let theta = (2 * t - offsets[i]).clamp(starts[i], starts[i + 1]);
        indicators.push(Indicator { threshold: uint(theta), coeff: -tq.clone() });
    }

    let widths = match layout {
        SqueezeLayout::OneLayer => vec![indicators.len() + 1],
        SqueezeLayout::Width(d) => {
            let d = (*d).max(3);
            let mut w = vec![d];
            let mut room = d - 1;
            while room < indicators.len() {
                w.push(d);
                room += d - 2;
            }
            w
        }
        SqueezeLayout::Exact(w) => w.clone(),
    };
    let fragment = accumulate_net(&widths, &indicators)?;

    let new_values = values
        .values
        .iter()
        .zip(&floors)
        .map(|(x, &f)| {
            if f < t {
                return x.clone();
            }
            let i = blocks.iter().position(|b| b.contains(&f)).expect("assigned to a block");
            let b = uint(offsets[i]);
            let mut y = x + &b - &tq;
            if *x >= uint(2) * &tq - &b {
                y -= &tq;
            }
            y
        })
        .collect();

    Ok(StepOutcome {
        fragment,
        out: ScalarizedDataset { values: new_values, bound: t, labels: values.labels.clone(), affine: None },
        offsets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// Every hidden layer has width 3.
    Width3,
    /// Squeeze rounds use one wide layer followed by a width-1 layer.
    Budget,
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    /// `None` when no round was needed.
    pub segment: Option<Network<Q>>,
    pub out: ScalarizedDataset,
    pub rounds: Vec<RoundReport>,
}

fn append(segment: Option<Network<Q>>, fragment: Network<Q>) -> Result<Option<Network<Q>>> {
    Ok(Some(match segment {
        None => fragment,
        Some(s) => s.compose(fragment)?,
    }))
}

/// A network with no hidden layers computing `x ↦ x`.
fn passthrough() -> Network<Q> {
    let out = AffineLayer::dense(1, vec![Neuron::id(Q::zero(), id_in(0))]);
    Network::new(1, vec![out]).expect("well formed")
}

/// `⌈4N²/K⌉`
pub fn squeeze_param(n: usize, k: u64) -> u64 {
    div_ceil(4 * (n as u64) * (n as u64), k.max(1))
}

fn squeeze_round(cur: &ScalarizedDataset, mode: ChainMode) -> Result<StepOutcome> {
    let c = squeeze_param(cur.len(), cur.bound);
    match mode {
        ChainMode::Budget => {
            let mut step = squeeze_step(cur, c, &SqueezeLayout::OneLayer)?;
            step.fragment = step.fragment.stack(passthrough())?;
            Ok(step)
        }
        ChainMode::Width3 => squeeze_step(cur, c, &SqueezeLayout::Width(3)),
    }
}

/// Halves at width 3 down to `⌊N²/4⌋+1`, then squeezes with
/// `C = ⌈4N²/K⌉` until the bound is at most `target`.
pub fn compress_chain(values: &ScalarizedDataset, target: u64, mode: ChainMode) -> Result<ChainOutcome> {
    let n = values.len();
    if target < n as u64 {
        return Err(Error::InvalidTarget { target, n });
    }
    let (segment, cur, mut rounds) = halving_chain(values, target)?;
    let mut segment = segment;
    let mut cur = cur;
    while cur.bound > target {
        let k = cur.bound;
        let step = squeeze_round(&cur, mode)?;
        if step.out.bound >= k {
            return Err(Error::CompressionInfeasible(format!("squeeze made no progress at K={k}")));
        }
        rounds.push(step.report("squeeze", k));
        segment = append(segment, step.fragment)?;
        cur = step.out;
    }
    Ok(ChainOutcome { segment, out: cur, rounds })
}

type Partial = (Option<Network<Q>>, ScalarizedDataset, Vec<RoundReport>);

/// Width-3 halving rounds until the bound is at most `max(⌊N²/4⌋+1, target)`.
pub fn halving_chain(values: &ScalarizedDataset, target: u64) -> Result<Partial> {
    let floor = pair_floor(values.len()).max(target);
    let mut segment = None;
    let mut cur = values.clone();
    let mut rounds = Vec::new();
    while cur.bound > floor {
        let k = cur.bound;
        let step = halve_step(&cur, 3)?;
        rounds.push(step.report("halve", k));
        segment = append(segment, step.fragment)?;
        cur = step.out;
    }
    Ok((segment, cur, rounds))
}

/// Up to `count` squeeze rounds with `C = ⌈4N²/K⌉`, stopping early once a
/// round can no longer shrink the bound.
pub fn squeeze_rounds(values: &ScalarizedDataset, count: usize, mode: ChainMode) -> Result<Partial> {
    let mut segment = None;
    let mut cur = values.clone();
    let mut rounds = Vec::new();
    for _ in 0..count {
        let k = cur.bound;
        let n = cur.len() as u64;
        let c = squeeze_param(cur.len(), k);
        let t = k.min((n * div_ceil(n, c)).max(div_ceil(k, 2)));
        if t >= k {
            break;
        }
        let step = squeeze_round(&cur, mode)?;
        rounds.push(step.report("squeeze", k));
        segment = append(segment, step.fragment)?;
        cur = step.out;
    }
    Ok((segment, cur, rounds))
}

/// Number of halving rounds the chain needs from `k` down to `floor`.
pub fn halving_rounds(mut k: u64, floor: u64) -> usize {
    let mut r = 0;
    while k > floor {
        k = div_ceil(k, 2).max(floor);
        r += 1;
    }
    r
}

/// True when `⌈x/(a·b)⌉ = ⌈⌈x/a⌉/b⌉`.
pub fn nested_ceil_holds(x: &Q, a: &Q, b: u64) -> bool {
    let bq = uint(b);
    let direct = ceil_div(x, &(a * &bq));
    let nested = ceil_div(&Q::from_integer(ceil_div(x, a)), &bq);
    direct == nested
}

pub fn to_u64(n: &BigInt) -> u64 {
    n.to_u64().unwrap_or(u64::MAX)
}
