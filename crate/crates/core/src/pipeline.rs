//! End-to-end constructions, regression labels and verification.

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::compression::{compress_chain, halving_chain, squeeze_rounds, ChainMode, RoundReport};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::memorizer::{memorize_block, memorize_with_shape, BlockShape, MemorizerMode};
use crate::network::{Network, NetworkStats};
use crate::projection::{find_direction, scalarize, ScalarizedDataset};
use crate::scalar::rational::{ceil_int, floor_int, to_fraction_string, uint};
use crate::scalar::Scalar;
use crate::separateness::measure;

type Q = BigRational;

/// Projection directions tried before giving up.
pub const DIRECTION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub hidden_layers: usize,
    pub width: usize,
    pub params: usize,
}

impl StageReport {
    fn of(stage: impl Into<String>, net: &Network<Q>) -> Self {
        let s = net.stats();
        StageReport { stage: stage.into(), hidden_layers: s.hidden_layers, width: s.width, params: s.param_count }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub mode: &'static str,
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    pub seed: u64,
    pub w: Option<f64>,
    pub log2_delta: f64,
    pub projection_bound: u64,
    pub tightened_bound: u64,
    pub target: Option<u64>,
    pub rounds: Vec<RoundReport>,
    pub memorizer: Option<BlockShape>,
    pub stages: Vec<StageReport>,
    pub total: NetworkStats,
    pub exact: bool,
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub net: Network<Q>,
    pub report: BuildReport,
}

/// `max(N, ⌈N^{2−w}⌉)`
pub fn sublinear_target(n: usize, w: f64) -> u64 {
    let t = ((n as f64).powf(2.0 - w) - 1e-9).ceil().max(1.0) as u64;
    t.max(n as u64)
}

/// Smallest `b` with `b³ ≥ N²`, i.e. `⌈N^{2/3}⌉`.
pub fn cube_root_sq(n: usize) -> u64 {
    let n2 = (n as u128) * (n as u128);
    let mut b = (n2 as f64).cbrt().floor() as u128;
    while b * b * b < n2 {
        b += 1;
    }
    while b > 1 && (b - 1).pow(3) >= n2 {
        b -= 1;
    }
    b.max(1) as u64
}

fn constant_label(ds: &Dataset) -> Option<usize> {
    let y0 = ds.labels()[0];
    ds.labels().iter().all(|&y| y == y0).then_some(y0)
}

struct Prefix {
    proj: Network<Q>,
    values: ScalarizedDataset,
    log2_delta: f64,
    projection_bound: u64,
}

fn project(ds: &Dataset, seed: u64) -> Result<Prefix> {
    let rep = measure(ds)?;
    let u = find_direction(ds, &rep, DIRECTION_ATTEMPTS, seed)?;
    let s = scalarize(ds, &rep, &u)?;
    let projection_bound = s.bound;
    let proj = s.projection_network(ds.dim()).expect("scalarize records its map");
    Ok(Prefix { proj, values: s.tightened(), log2_delta: rep.log2_delta, projection_bound })
}

fn then(net: Network<Q>, next: Option<Network<Q>>) -> Result<Network<Q>> {
    match next {
        Some(n) => net.compose(n),
        None => Ok(net),
    }
}

fn trivial(ds: &Dataset, mode: &'static str, seed: u64, w: Option<f64>, y: usize) -> BuildOutcome {
    let mut net = Network::constant(ds.dim(), uint(y as u64));
    net.meta.insert("mode".into(), json!(mode));
    let report = BuildReport {
        mode,
        n: ds.len(),
        dim: ds.dim(),
        classes: ds.classes(),
        seed,
        w,
        log2_delta: 0.0,
        projection_bound: 0,
        tightened_bound: 0,
        target: None,
        rounds: Vec::new(),
        memorizer: None,
        stages: vec![StageReport::of("constant", &net)],
        total: net.stats(),
        exact: true,
    };
    BuildOutcome { net, report }
}

fn finish(ds: &Dataset, mut net: Network<Q>, mut report: BuildReport) -> Result<BuildOutcome> {
    let check = verify(&net, ds, &Q::zero())?;
    if !check.pass {
        return Err(Error::Verification(format!(
            "{} build misses a label by {}",
            report.mode,
            to_fraction_string(&check.max_error)
        )));
    }
    report.total = net.stats();
    report.exact = true;
    net.meta.insert("mode".into(), json!(report.mode));
    net.meta.insert("seed".into(), json!(report.seed));
    Ok(BuildOutcome { net, report })
}

/// Projection, budget-mode compression to `max(N, ⌈N^{2−w}⌉)`, then the
/// gadget memorizer with `p = w/(2−w)`.
pub fn build_sublinear(ds: &Dataset, w: f64, seed: u64) -> Result<BuildOutcome> {
    if !(2.0 / 3.0 - 1e-12..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!("w = {w} is outside [2/3, 1]")));
    }
    if let Some(y) = constant_label(ds) {
        return Ok(trivial(ds, "theorem1", seed, Some(w), y));
    }
    let n = ds.len();
    let pre = project(ds, seed)?;
    let target = sublinear_target(n, w);
    let chain = compress_chain(&pre.values, target, ChainMode::Budget)?;
    let values = chain.out.clone().tightened();
    let (memo, shape) = memorize_block(&values, ds.classes(), w / (2.0 - w), MemorizerMode::Gadget)?;

    let mut stages = vec![StageReport::of("projection", &pre.proj)];
    if let Some(seg) = &chain.segment {
        stages.push(StageReport::of("compression", seg));
    }
    stages.push(StageReport::of("memorizer", &memo));
    let net = then(pre.proj, chain.segment)?.compose(memo)?;
    let report = BuildReport {
        mode: "theorem1",
        n,
        dim: ds.dim(),
        classes: ds.classes(),
        seed,
        w: Some(w),
        log2_delta: pre.log2_delta,
        projection_bound: pre.projection_bound,
        tightened_bound: pre.values.bound,
        target: Some(target),
        rounds: chain.rounds,
        memorizer: shape,
        stages,
        total: net.stats(),
        exact: false,
    };
    finish(ds, net, report)
}

/// Every hidden layer has width at most 3: width-3 halving to
/// `⌊N²/4⌋+1`, `⌈(2/3)·log2 N⌉` width-3 squeeze rounds, then narrow
/// parameter extraction with `B = ⌈N^{2/3}⌉` and the width-3 bit chain.
pub fn build_width3(ds: &Dataset, seed: u64) -> Result<BuildOutcome> {
    if let Some(y) = constant_label(ds) {
        return Ok(trivial(ds, "width3", seed, None, y));
    }
    let n = ds.len();
    let pre = project(ds, seed)?;
    let (halve_seg, cur, mut rounds) = halving_chain(&pre.values, 0)?;
    let extra = ((2.0 / 3.0) * (n as f64).log2()).ceil().max(0.0) as usize;
    let (squeeze_seg, cur, more) = squeeze_rounds(&cur, extra, ChainMode::Width3)?;
    rounds.extend(more);
    let values = cur.tightened();

    let b = cube_root_sq(n).min(values.bound);
    let a = values.bound.div_ceil(b);
    let d = crate::scalar::rational::ceil_log2(ds.classes() as u64).max(1);
    let shape = BlockShape { k: values.bound, a: a as usize, b: b as usize, d, r: 1 };
    let (memo, _) = memorize_with_shape(&values, ds.classes(), shape, MemorizerMode::Width3, None)?;

    let mut stages = vec![StageReport::of("projection", &pre.proj)];
    if let Some(seg) = &halve_seg {
        stages.push(StageReport::of("halving", seg));
    }
    if let Some(seg) = &squeeze_seg {
        stages.push(StageReport::of("squeeze", seg));
    }
    stages.push(StageReport::of("memorizer", &memo));
    let net = then(then(pre.proj, halve_seg)?, squeeze_seg)?.compose(memo)?;
    let report = BuildReport {
        mode: "width3",
        n,
        dim: ds.dim(),
        classes: ds.classes(),
        seed,
        w: None,
        log2_delta: pre.log2_delta,
        projection_bound: pre.projection_bound,
        tightened_bound: pre.values.bound,
        target: None,
        rounds,
        memorizer: Some(shape),
        stages,
        total: net.stats(),
        exact: false,
    };
    finish(ds, net, report)
}

/// Targets in `[0, 1]` snapped to the class grid `c·eps`, `c < ⌈1/eps⌉`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionLabels {
    pub labels: Vec<usize>,
    pub classes: usize,
    pub eps: Q,
}

impl RegressionLabels {
    pub fn decode(&self, class: usize) -> Q {
        uint(class as u64) * &self.eps
    }
}

/// Nearest grid class for each target, ties going to the smaller class.
pub fn regression_wrap(targets: &[Q], eps: &Q) -> Result<RegressionLabels> {
    if !eps.is_positive() {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let one = Q::from_integer(1.into());
    let classes =
        ceil_int(&(&one / eps)).to_usize().ok_or_else(|| Error::InvalidArgument("eps is too small".into()))?;
    let labels = targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.is_negative() || *t > one {
                return Err(Error::InvalidArgument(format!("target {i} is outside [0, 1]")));
            }
            let lo = floor_int(&(t / eps)).to_usize().expect("nonnegative");
            let below = t - uint(lo as u64) * eps;
            let above = uint(lo as u64 + 1) * eps - t;
            let c = if above < below { lo + 1 } else { lo };
            Ok(c.min(classes - 1))
        })
        .collect::<Result<_>>()?;
    Ok(RegressionLabels { labels, classes, eps: eps.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub max_error: Q,
    pub per_point: Vec<Q>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn max_error_f64(&self) -> f64 {
        Scalar::to_f64(&self.max_error)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "max_error": to_fraction_string(&self.max_error),
            "max_error_f64": self.max_error_f64(),
            "per_point": self.per_point.iter().map(Scalar::to_f64).collect::<Vec<_>>(),
            "pass": self.pass,
        })
    }
}

/// `|f(x_i) − y_i|` for every point. With `eps = 0` the pass test is
/// exact equality; otherwise `max_error ≤ eps`.
pub fn verify<S: Scalar>(net: &Network<S>, ds: &Dataset, eps: &Q) -> Result<VerifyReport> {
    if net.input_dim() != ds.dim() {
        return Err(Error::InputShape { expected: net.input_dim(), got: ds.dim() });
    }
    if net.output_dim() != 1 {
        return Err(Error::Malformed(format!("network has {} outputs, expected 1", net.output_dim())));
    }
    let per_point = ds
        .points()
        .par_iter()
        .zip(ds.labels().par_iter())
        .map(|(x, &y)| {
            let input: Vec<S> = x.iter().map(S::from_rational).collect();
            let out = net.evaluate(&input)?;
            let value = out[0].to_rational().ok_or(Error::NumericOverflow { layer: net.layers().len() - 1 })?;
            Ok((value - uint(y as u64)).abs())
        })
        .collect::<Result<Vec<Q>>>()?;
    let max_error = per_point.iter().max().cloned().unwrap_or_else(Q::zero);
    let pass = if eps.is_zero() { max_error.is_zero() } else { max_error <= *eps };
    Ok(VerifyReport { max_error, per_point, pass })
}
