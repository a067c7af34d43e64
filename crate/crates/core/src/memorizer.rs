//! Mapping well-separated scalars to labels by reading them back out of
//! the binary expansions of a few stored parameters.

use std::collections::HashMap;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{AffineLayer, Network, Neuron};
use crate::projection::ScalarizedDataset;
use crate::scalar::rational::{ceil_log2, floor_int, pow2, ratio, uint};

type Q = BigRational;

/// Labels of `A·B` consecutive integers packed `D` bits at a time into
/// `A` parameters, bucket `a` holding floors `aB..aB+B−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEncoding {
    pub a: usize,
    pub b: usize,
    pub d: u32,
    /// Bits decoded per gadget by [`bit_extract`].
    pub r: u32,
    pub w: Vec<Q>,
}

impl LabelEncoding {
    /// Label of position `c` in bucket `a`, read from the expansion of `w_a`.
    pub fn label(&self, a: usize, c: usize) -> usize {
        let shifted = &self.w[a] * pow2(((c + 1) as u32 * self.d) as i64);
        let modulus = num_bigint::BigInt::one() << self.d;
        floor_int(&shifted).mod_floor(&modulus).to_usize().expect("fits")
    }
}

/// `w_a = Σ_c y(aB+c)·2^{−(c+1)D}`; floors missing from the map get label 0.
pub fn encode_labels(floor_labels: &HashMap<u64, usize>, a: usize, b: usize, d: u32) -> Result<LabelEncoding> {
    if a == 0 || b == 0 || d == 0 {
        return Err(Error::InvalidArgument("A, B and D must be positive".into()));
    }
    let span = (a * b) as u64;
    if let Some((f, _)) = floor_labels.iter().find(|(&f, _)| f >= span) {
        return Err(Error::InvalidArgument(format!("floor {f} is outside [0, A·B = {span})")));
    }
    if let Some((_, y)) = floor_labels.iter().find(|(_, &y)| (y as u128) >> d != 0) {
        return Err(Error::InvalidArgument(format!("label {y} needs more than {d} bits")));
    }
    let w = (0..a)
        .map(|bucket| {
            (0..b).fold(Q::zero(), |acc, c| {
                let y = floor_labels.get(&((bucket * b + c) as u64)).copied().unwrap_or(0);
                acc + uint(y as u64) * pow2(-(((c + 1) as u32 * d) as i64))
            })
        })
        .collect();
    Ok(LabelEncoding { a, b, d, r: 1, w })
}

/// Affine form over the previous layer's outputs.
#[derive(Debug, Clone)]
struct Expr {
    terms: Vec<(usize, Q)>,
    bias: Q,
}

impl Expr {
    fn col(c: usize) -> Self {
        Expr { terms: vec![(c, Q::one())], bias: Q::zero() }
    }

    fn constant(bias: Q) -> Self {
        Expr { terms: Vec::new(), bias }
    }

    fn plus(mut self, c: usize, w: Q) -> Self {
        self.terms.push((c, w));
        self
    }

    fn shifted(mut self, by: Q) -> Self {
        self.bias += by;
        self
    }

    fn id(&self) -> Neuron<Q> {
        Neuron::id(self.bias.clone(), self.terms.clone())
    }

    /// `STEP(self + shift)`
    fn step(&self, shift: Q) -> Neuron<Q> {
        Neuron::step(&self.bias + shift, self.terms.clone())
    }

    fn scaled(&self, k: &Q) -> Neuron<Q> {
        Neuron::id(&self.bias * k, self.terms.iter().map(|(c, w)| (*c, w * k)).collect())
    }
}

/// `x ↦ (w_{⌊x/B⌋}, x mod B)` for `x ∈ [0, A·B)`. Every layer holds
/// `[w, x, d−2 bucket indicators]`; a single layer of width `A+2` gives
/// the `4A+10`-parameter form.
pub fn param_extract(enc: &LabelEncoding, layer_widths: &[usize]) -> Result<Network<Q>> {
    if layer_widths.is_empty() || layer_widths.iter().any(|&d| d < 2) {
        return Err(Error::Architecture(format!("param-extract widths {layer_widths:?} need d ≥ 2")));
    }
    let slots: usize = layer_widths.iter().map(|d| d - 2).sum();
    if slots < enc.a {
        return Err(Error::Architecture(format!(
            "param-extract widths {layer_widths:?} hold {slots} indicators, A = {}",
            enc.a
        )));
    }
    let bq = uint(enc.b as u64);
    let wk = |k: usize| enc.w[k.min(enc.a - 1)].clone();
    let mut w_expr = Expr::constant(enc.w[0].clone());
    let mut x_expr = Expr::col(0);
    let mut in_dim = 1;
    let mut done = 0usize;
    let mut layers = Vec::with_capacity(layer_widths.len() + 1);
    for &d in layer_widths {
        let mut neurons = vec![w_expr.id(), x_expr.id()];
        let mut next_w = Expr::col(0);
        let mut next_x = Expr::col(1);
        for i in 1..=d - 2 {
            neurons.push(x_expr.step(-(uint(i as u64) * &bq)));
            let k = done + i;
            next_w = next_w.plus(i + 1, wk(k) - wk(k - 1));
            next_x = next_x.plus(i + 1, -bq.clone());
        }
        layers.push(AffineLayer::dense(in_dim, neurons));
        done += d - 2;
        w_expr = next_w;
        x_expr = next_x;
        in_dim = d;
    }
    layers.push(AffineLayer::dense(in_dim, vec![w_expr.id(), x_expr.id()]));
    Network::new(1, layers)
}

/// `⌈BD/R⌉`
pub fn gadget_count(b: usize, d: u32, r: u32) -> usize {
    (b * d as usize).div_ceil(r as usize)
}

/// Closed-form parameter count of [`bit_extract`].
pub fn bit_extract_params(b: usize, d: u32, r: u32) -> i64 {
    let n = gadget_count(b, d, r) as i64;
    let r = r as i64;
    let p = 1i64 << r;
    ((2 * r + 5) * p + 2 * r * r + 8 * r + 7) * n - r * p - r * r + 3
}

/// On input `(w, x)` with `x ∈ [0, B)` and `w = Σ_{i≤BD} u_i 2^{−i}`,
/// outputs the integer `Σ_{i=1}^D u_{⌊x⌋D+i}·2^{D−i}`.
///
/// Built from `⌈BD/R⌉` two-layer gadgets of widths `2^R+R+1` and `R+2`.
/// Gadget `ℓ` strips the window `u_{(ℓ−1)R+1..ℓR}` off `v` with `2^R−1`
/// thresholds and re-appends each bit that belongs to `x`'s block far
/// below the original expansion. Once `x` falls below the first block a
/// gadget can still touch, it is pushed up by `B` so no later position
/// indicator fires.
pub fn bit_extract(b: usize, d: u32, r: u32) -> Result<Network<Q>> {
    if b == 0 || d == 0 || r == 0 || r > 16 {
        return Err(Error::InvalidArgument(format!("bit_extract needs B, D ≥ 1 and 1 ≤ R ≤ 16, got ({b}, {d}, {r})")));
    }
    let n = gadget_count(b, d, r);
    let ru = r as usize;
    let du = d as usize;
    let windows = 1usize << ru;
    let bq = uint(b as u64);
    let block = |pos: usize| pos / du;
    let mut v_expr = Expr::col(0);
    let mut x_expr = Expr::col(1);
    let mut in_dim = 2;
    let mut layers = Vec::with_capacity(2 * n + 1);
    for l in 1..=n {
        let scale = pow2(-((l * ru) as i64));
        // zero-based bit positions (ℓ−1)R .. ℓR−1
        let m: Vec<usize> = (0..ru).map(|i| block((l - 1) * ru + i)).collect();

        let mut first = vec![x_expr.id(), v_expr.id()];
        for j in 1..windows {
            first.push(v_expr.step(-(uint(j as u64) * &scale)));
        }
        for &mi in &m {
            first.push(x_expr.step(-uint(mi as u64 + 1)));
        }
        let t_col = |j: usize| 1 + j;
        let w_col = |i: usize| windows + 1 + i;
        layers.push(AffineLayer::dense(in_dim, first));

        let mut x2 = Expr::col(0);
        if l < n {
            let m_next = block(l * ru);
            if m_next != m[0] {
                let j = (0..ru).rev().find(|&j| m[j] + 1 == m_next).expect("blocks advance by one");
                x2 = x2.shifted(bq.clone()).plus(w_col(j), -bq.clone());
            }
        }
        let mut v2 = Expr::col(1);
        for j in 1..windows {
            v2 = v2.plus(t_col(j), -scale.clone());
        }
        let mut second = vec![x2.id(), v2.id()];
        for i in 0..ru {
            let bit = |j: usize| ((j >> (ru - 1 - i)) & 1) as i64;
            let mut g = Expr::constant(ratio(-3, 2)).plus(w_col(i), -Q::one());
            for j in 1..windows {
                let diff = bit(j) - bit(j - 1);
                if diff != 0 {
                    g = g.plus(t_col(j), Q::from_integer(diff.into()));
                }
            }
            g = match (0..i).rev().find(|&k| m[k] + 1 == m[i]) {
                Some(k) => g.plus(w_col(k), Q::one()),
                None => g.shifted(Q::one()),
            };
            second.push(g.step(Q::zero()));
        }
        layers.push(AffineLayer::dense(2usize + windows - 1 + ru, second));

        x_expr = Expr::col(0);
        v_expr = Expr::col(1);
        for i in 0..ru {
            let pos = (l - 1) * ru + i;
            let target = n * ru + pos % du + 1;
            v_expr = v_expr.plus(2 + i, pow2(-(target as i64)));
        }
        in_dim = ru + 2;
    }
    let out_scale = pow2((n * ru + du) as i64);
    layers.push(AffineLayer::dense(in_dim, vec![v_expr.scaled(&out_scale)]));
    Network::new(2, layers)
}

/// Same map as [`bit_extract`] using `(2D+1)B` hidden layers of width 3.
///
/// A counter starts at `x` and drops by one at the start of every block
/// of `D` bits, jumping up by `3B` once negative, so it lies in `[−1, 0)`
/// exactly during block `⌊x⌋`. Each bit is peeled off `w` and copied
/// below the original expansion while the counter is in that range.
pub fn bit_extract_width3(b: usize, d: u32) -> Result<Network<Q>> {
    if b == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("bit_extract_width3 needs B, D ≥ 1, got ({b}, {d})")));
    }
    let du = d as usize;
    let wrap = uint(3 * b as u64);
    let mut w_expr = Expr::col(0);
    let mut x_expr = Expr::col(1);
    let mut in_dim = 2;
    let mut layers = Vec::with_capacity((2 * du + 1) * b + 1);
    for l in 1..=du * b {
        if (l - 1) % du == 0 {
            layers.push(AffineLayer::dense(in_dim, vec![x_expr.id(), x_expr.step(Q::zero()), w_expr.id()]));
            x_expr = Expr::col(0).plus(1, -wrap.clone()).shifted(&wrap - Q::one());
            w_expr = Expr::col(2);
            in_dim = 3;
        }
        let bit = pow2(-(l as i64));
        layers.push(AffineLayer::dense(in_dim, vec![x_expr.id(), w_expr.id(), w_expr.step(-bit.clone())]));
        let target = pow2(-((du * b + (l - 1) % du + 1) as i64));
        let flag = Expr::col(0).plus(2, -Q::one()).step(Q::one());
        layers.push(AffineLayer::dense(3, vec![Expr::col(0).id(), Expr::col(1).plus(2, -bit).id(), flag]));
        x_expr = Expr::col(0);
        w_expr = Expr::col(1).plus(2, -target.clone()).shifted(target);
        in_dim = 3;
    }
    let out_scale = pow2((du * (b + 1)) as i64);
    layers.push(AffineLayer::dense(in_dim, vec![w_expr.scaled(&out_scale)]));
    Network::new(2, layers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorizerMode {
    /// One-layer parameter extraction followed by the window gadgets.
    Gadget,
    /// Width-3 parameter extraction followed by the width-3 chain.
    Width3,
}

/// Sizes chosen by [`memorize_block`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockShape {
    pub k: u64,
    pub a: usize,
    pub b: usize,
    pub d: u32,
    pub r: u32,
}

impl BlockShape {
    /// `A = ⌈K^p⌉`, `B = ⌈K/A⌉`, `R = max(1, round(1+(p−½)log2 K))`,
    /// `D = max(1, ⌈log2 C⌉)`.
    pub fn new(k: u64, classes: usize, p: f64) -> Self {
        let k = k.max(1);
        let mut a = (k as f64).powf(p).ceil().max(1.0) as u64;
        // guard against floating error in the power
        while a > 1 && (a - 1) as f64 >= (k as f64).powf(p) {
            a -= 1;
        }
        let a = a.min(k);
        let b = k.div_ceil(a);
        let r = (1.0 + (p - 0.5) * (k as f64).log2()).round().max(1.0) as u32;
        let d = ceil_log2(classes as u64).max(1);
        BlockShape { k, a: a as usize, b: b as usize, d, r: r.min(16) }
    }

    /// Hidden layers of the gadget-mode block.
    pub fn gadget_depth(&self) -> usize {
        2 * gadget_count(self.b, self.d, self.r) + 2
    }
}

fn floor_map(values: &ScalarizedDataset, classes: usize) -> Result<HashMap<u64, usize>> {
    if let Some(&y) = values.labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidArgument(format!("label {y} is not below C = {classes}")));
    }
    Ok(values.floors().into_iter().zip(values.labels.iter().copied()).collect())
}

/// Memorizer for the given shape: parameter extraction feeding bit
/// extraction, mapping each value to its integer label.
pub fn memorize_with_shape(
    values: &ScalarizedDataset,
    classes: usize,
    shape: BlockShape,
    mode: MemorizerMode,
    extract_widths: Option<&[usize]>,
) -> Result<(Network<Q>, LabelEncoding)> {
    let labels = floor_map(values, classes)?;
    let mut enc = encode_labels(&labels, shape.a, shape.b, shape.d)?;
    enc.r = shape.r;
    let net = match mode {
        MemorizerMode::Gadget => {
            let single = [shape.a + 2];
            let pe = param_extract(&enc, extract_widths.unwrap_or(&single))?;
            pe.stack(bit_extract(shape.b, shape.d, shape.r)?)?
        }
        MemorizerMode::Width3 => {
            let narrow = vec![3; shape.a];
            let pe = param_extract(&enc, extract_widths.unwrap_or(&narrow))?;
            pe.compose(bit_extract_width3(shape.b, shape.d)?)?
        }
    };
    Ok((net, enc))
}

/// Memorizes labels in `[C]` of values with distinct floors in `[K)`.
/// `C = 1` gives the constant 0.
pub fn memorize_block(
    values: &ScalarizedDataset,
    classes: usize,
    p: f64,
    mode: MemorizerMode,
) -> Result<(Network<Q>, Option<BlockShape>)> {
    if classes < 1 {
        return Err(Error::InvalidArgument("C must be at least 1".into()));
    }
    if classes == 1 {
        floor_map(values, classes)?;
        return Ok((Network::constant(1, Q::zero()), None));
    }
    let shape = BlockShape::new(values.bound, classes, p);
    let (net, _) = memorize_with_shape(values, classes, shape, mode, None)?;
    Ok((net, Some(shape)))
}

/// `Σ_{i=1}^D u_{⌊x⌋D+i}·2^{D−i}` read directly off a bit pattern.
pub fn bit_oracle(bits: &[bool], x: usize, d: u32) -> u64 {
    (0..d as usize).fold(0, |acc, i| (acc << 1) | bits.get(x * d as usize + i).copied().unwrap_or(false) as u64)
}

/// `Σ_i u_i 2^{−i}`
pub fn bits_to_rational(bits: &[bool]) -> Q {
    bits.iter().enumerate().filter(|(_, &b)| b).fold(Q::zero(), |acc, (i, _)| acc + pow2(-(i as i64 + 1)))
}
