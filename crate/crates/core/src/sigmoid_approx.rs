//! Replacing STEP and ID neurons by sigmoidal ones while keeping the
//! architecture, either within a tolerance on a dataset or exactly with
//! hard tanh.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::activation::{Activation, SigmoidKind};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::{AffineLayer, Network, Trace};
use crate::pipeline::verify;
use crate::scalar::rational::{pow2, uint};
use crate::scalar::Scalar;
use crate::wide::Wide;

type Q = BigRational;

/// `a·σ(c·v + d) + b` standing in for one neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronApprox {
    pub a: Q,
    pub b: Q,
    pub c: Q,
    pub d: Q,
}

impl NeuronApprox {
    pub fn eval<S: Scalar>(&self, kind: SigmoidKind, v: &S) -> Result<S> {
        let arg = S::from_rational(&self.c) * v.clone() + S::from_rational(&self.d);
        Ok(S::from_rational(&self.a) * S::sigma(kind, &arg)? + S::from_rational(&self.b))
    }

    pub fn to_f64(&self) -> [f64; 4] {
        [&self.a, &self.b, &self.c, &self.d].map(Scalar::to_f64)
    }
}

/// Network with sigmoidal hidden neurons and its measured deviation.
#[derive(Debug, Clone)]
pub struct SigmoidNetwork<S> {
    pub net: Network<S>,
    pub kind: SigmoidKind,
    /// Largest `|g(x) − f(x)|` over the dataset.
    pub eps: f64,
    /// Deviation between consecutive hybrids, indexed by hidden layer.
    pub stage_deviations: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformReport {
    pub kind: &'static str,
    pub eps: f64,
    pub achieved: f64,
    pub stage_budget: f64,
    pub stage_deviations: Vec<f64>,
}

impl<S> SigmoidNetwork<S> {
    pub fn report(&self, eps: f64) -> TransformReport {
        let layers = self.stage_deviations.len().max(1) as f64;
        TransformReport {
            kind: self.kind.name(),
            eps,
            achieved: self.eps,
            stage_budget: eps / layers,
            stage_deviations: self.stage_deviations.clone(),
        }
    }
}

fn q(x: f64) -> Q {
    Q::from_float(x).expect("finite constant")
}

/// Exact traces of every data point with STEP biases nudged off zero.
struct Nudged {
    net: Network<Q>,
    traces: Vec<Trace<Q>>,
}

fn nudge(net: &Network<Q>, ds: &Dataset) -> Result<Nudged> {
    if !net.is_step_id() {
        return Err(Error::InvalidArgument("network has non STEP/ID neurons".into()));
    }
    let mut net = net.clone();
    let mut traces = ds.points().iter().map(|x| net.trace(x)).collect::<Result<Vec<_>>>()?;
    for l in 0..net.hidden_layers() {
        let width = net.layers()[l].out_dim();
        for i in 0..width {
            if net.layers()[l].activations()[i] != Activation::Step {
                continue;
            }
            let pres = traces.iter().map(|t| &t.pre[l][i]);
            if !pres.clone().any(Zero::is_zero) {
                continue;
            }
            let shift = pres.filter(|v| !v.is_zero()).map(|v| v.abs()).min().map_or_else(Q::one, |m| m / uint(2));
            let bias = net.layers()[l].biases()[i].clone() + &shift;
            net.layers_mut()[l].set_bias(i, bias);
            for t in &mut traces {
                t.pre[l][i] += &shift;
            }
        }
    }
    Ok(Nudged { net, traces })
}

fn step_margins(n: &Nudged, l: usize) -> Vec<Option<Q>> {
    let layer = &n.net.layers()[l];
    (0..layer.out_dim())
        .map(|i| {
            (layer.activations()[i] == Activation::Step)
                .then(|| n.traces.iter().map(|t| t.pre[l][i].abs()).min())
                .flatten()
        })
        .collect()
}

/// Smallest `|pre-activation|` over every STEP neuron and data point,
/// after nudging zero pre-activations. Networks without STEP neurons
/// report 1.
pub fn margin(net: &Network<Q>, ds: &Dataset) -> Result<Q> {
    let n = nudge(net, ds)?;
    Ok((0..n.net.hidden_layers()).flat_map(|l| step_margins(&n, l)).flatten().min().unwrap_or_else(Q::one))
}

/// `a·σ(c·x) + b` within `eps` of `1[x ≥ 0]` whenever `|x| ≥ delta`.
pub fn approx_step(kind: SigmoidKind, eps: f64, delta: &Q) -> Result<NeuronApprox> {
    if !(eps.is_finite() && eps > 0.0) || !delta.is_positive() {
        return Err(Error::InvalidArgument("eps and delta must be positive".into()));
    }
    let (lo, hi) = kind.limits();
    let span = hi - lo;
    let mut k = 1u32;
    for _ in 0..64 {
        let (g0, g1) = kind.tail_gaps(k as f64);
        if g0 < span * eps && g1 < span * eps {
            return Ok(NeuronApprox { a: q(1.0 / span), b: q(-lo / span), c: uint(k as u64) / delta, d: Q::zero() });
        }
        k = k.checked_mul(2).ok_or_else(|| Error::ApproxSearch(format!("{kind} never saturates")))?;
    }
    Err(Error::ApproxSearch(format!("{kind} does not reach {eps:e}")))
}

const GRID: usize = 64;

#[cfg(test)]
fn id_error(kind: SigmoidKind, f: &NeuronApprox, x: &Q) -> Result<Wide> {
    let x = Wide::from_rational(x);
    Ok((f.eval(kind, &x)? - x).abs())
}

fn id_with_scale(kind: SigmoidKind, c: Q) -> NeuronApprox {
    let z = q(kind.smooth_point());
    let slope = q(kind.derivative_at_smooth_point());
    let at_z = q(kind.value_at_smooth_point());
    NeuronApprox { a: Q::one() / (&c * &slope), b: -at_z / (&c * &slope), d: z, c }
}

/// `a·σ(c·x + d) + b` within `eps/2` of `x` on a dense grid of `[lo, hi]`
/// and on the `extra` points, with `d` the smooth point and `c` a power of
/// two.
pub fn approx_id(kind: SigmoidKind, eps: f64, lo: &Q, hi: &Q, extra: &[Q]) -> Result<NeuronApprox> {
    if !(eps.is_finite() && eps > 0.0) || lo > hi {
        return Err(Error::InvalidArgument("need eps > 0 and lo ≤ hi".into()));
    }
    let reach = Scalar::to_f64(&lo.abs().max(hi.abs()).max(Q::one()));
    let mut exp = match kind {
        SigmoidKind::HardTanh => -reach.log2().ceil() as i64,
        // Taylor remainder c²·r³·κ, κ = 1/3 (tanh) or 1/12 (logistic)
        SigmoidKind::Tanh | SigmoidKind::Logistic => {
            let kappa = if kind == SigmoidKind::Tanh { 1.0 / 3.0 } else { 1.0 / 12.0 };
            let c2 = eps / 4.0 / (kappa * reach.powi(3));
            ((0.5 * c2.log2()).floor() as i64).min(-reach.log2().ceil() as i64)
        }
    };
    let points: Vec<f64> = (0..=GRID)
        .map(|j| lo + (hi - lo) * Q::new(j.into(), GRID.into()))
        .chain(extra.iter().cloned())
        .map(|x| Scalar::to_f64(&x))
        .collect();
    for _ in 0..1000 {
        let c = (exp as f64).exp2();
        if points.iter().all(|&x| (kind.id_residual(c * x) / c).abs() < eps / 2.0) {
            return Ok(id_with_scale(kind, pow2(exp)));
        }
        exp -= 1;
    }
    Err(Error::ApproxSearch(format!("identity within {eps:e} on [{lo}, {hi}]")))
}

/// Rescales neuron `i` of layer `l` to `a·σ(c·v + d) + b`: `c, d` enter
/// the neuron's own affine map, `a, b` the next layer's.
fn fold(layers: &mut [AffineLayer<Q>], l: usize, approx: &[NeuronApprox], kind: SigmoidKind) {
    let cur = &mut layers[l];
    for (r, _, w) in cur.weights_mut() {
        *w *= &approx[r].c;
    }
    for (r, b) in cur.biases_mut().iter_mut().enumerate() {
        *b = &*b * &approx[r].c + &approx[r].d;
    }
    for r in 0..approx.len() {
        cur.set_activation(r, Activation::Sigma(kind));
    }
    let next = &mut layers[l + 1];
    let mut shifts = vec![Q::zero(); next.out_dim()];
    for (j, i, w) in next.weights_mut() {
        shifts[j] += &*w * &approx[i].b;
        *w *= &approx[i].a;
    }
    for (b, s) in next.biases_mut().iter_mut().zip(shifts) {
        *b += s;
    }
}

/// Deviation of a hybrid from the STEP+ID network, tracked as an offset
/// from the exact reference values so large activations cost no precision.
struct Offsets {
    kind: SigmoidKind,
    span: f64,
    weights: Vec<Vec<(usize, usize, f64)>>,
    /// `[point][layer][neuron]`
    pre: Vec<Vec<Vec<f64>>>,
    post: Vec<Vec<Vec<f64>>>,
    /// `c` of every replaced neuron, `None` while a layer is still exact.
    scales: Vec<Option<Vec<f64>>>,
    steps: Vec<Vec<bool>>,
}

impl Offsets {
    fn new(net: &Network<Q>, traces: &[Trace<Q>], kind: SigmoidKind) -> Self {
        let (lo, hi) = kind.limits();
        let f = |v: &Vec<Q>| v.iter().map(Scalar::to_f64).collect::<Vec<f64>>();
        let hidden = net.hidden_layers();
        Offsets {
            kind,
            span: hi - lo,
            weights: net
                .layers()
                .iter()
                .map(|l| l.weights().iter().map(|(r, c, w)| (*r, *c, Scalar::to_f64(w))).collect())
                .collect(),
            pre: traces.iter().map(|t| t.pre[..hidden].iter().map(f).collect()).collect(),
            post: traces.iter().map(|t| t.post[..hidden].iter().map(f).collect()).collect(),
            scales: vec![None; hidden],
            steps: net.layers()[..hidden]
                .iter()
                .map(|l| l.activations().iter().map(|a| *a == Activation::Step).collect())
                .collect(),
        }
    }

    /// `g(x_p) − f(x_p)` when layers `from..` use sigmoidal neurons, with
    /// `trial` standing in for the scales of layer `from`.
    fn output_offset(&self, p: usize, from: usize, trial: &[f64]) -> f64 {
        let hidden = self.scales.len();
        let mut dy: Vec<f64> = Vec::new();
        for l in from..hidden {
            let width = self.steps[l].len();
            let mut dpre = vec![0.0; width];
            if l > from {
                for &(r, c, w) in &self.weights[l] {
                    if dy[c] != 0.0 {
                        dpre[r] += w * dy[c];
                    }
                }
            }
            let scales = if l == from { trial } else { self.scales[l].as_deref().expect("replaced") };
            dy = (0..width)
                .map(|i| {
                    let v = self.pre[p][l][i] + dpre[i];
                    let c = scales[i];
                    if self.steps[l][i] {
                        if self.post[p][l][i] > 0.5 {
                            -self.kind.upper_gap(c * v) / self.span
                        } else {
                            self.kind.lower_gap(c * v) / self.span
                        }
                    } else {
                        self.kind.id_residual(c * v) / c + dpre[i]
                    }
                })
                .collect();
        }
        let mut out = 0.0;
        for &(r, c, w) in &self.weights[hidden] {
            if r == 0 {
                out += w * dy[c];
            }
        }
        out
    }
}

const MAX_RETRIES: usize = 60;

/// Replaces hidden layers back to front by sigmoidal neurons so that each
/// stage moves every output on `ds` by less than `eps / L`, giving
/// `|g(x) − f(x)| < eps` on the dataset.
pub fn transform(net: &Network<Q>, ds: &Dataset, eps: f64, kind: SigmoidKind) -> Result<SigmoidNetwork<Wide>> {
    kind.validate()?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if !verify(net, ds, &Q::zero())?.pass {
        return Err(Error::Verification("source network does not memorize the dataset".into()));
    }
    let hidden = net.hidden_layers();
    if hidden == 0 {
        return Ok(SigmoidNetwork {
            net: net.map_scalars(Wide::from_rational),
            kind,
            eps: 0.0,
            stage_deviations: Vec::new(),
        });
    }
    let nudged = nudge(net, ds)?;
    let budget = eps / hidden as f64;
    let mut offsets = Offsets::new(&nudged.net, &nudged.traces, kind);
    let mut layers: Vec<AffineLayer<Q>> = nudged.net.layers().to_vec();
    let mut prev = vec![0.0; ds.len()];
    let mut deviations = vec![0.0; hidden];
    let mut tol = budget / 16.0;

    for l in (0..hidden).rev() {
        let margins = step_margins(&nudged, l);
        let mut attempt = 0;
        loop {
            let approx = margins
                .iter()
                .enumerate()
                .map(|(i, m)| match m {
                    Some(delta) => approx_step(kind, tol, delta),
                    None => {
                        let values: Vec<Q> = nudged.traces.iter().map(|t| t.pre[l][i].clone()).collect();
                        let lo = values.iter().min().cloned().unwrap_or_else(Q::zero);
                        let hi = values.iter().max().cloned().unwrap_or_else(Q::zero);
                        approx_id(kind, tol, &lo, &hi, &values)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let trial: Vec<f64> = approx.iter().map(|a| Scalar::to_f64(&a.c)).collect();
            let outs: Vec<f64> = (0..ds.len()).map(|p| offsets.output_offset(p, l, &trial)).collect();
            let dev = outs.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, |m, d| {
                if d.is_nan() {
                    f64::INFINITY
                } else {
                    m.max(d)
                }
            });
            if dev < budget {
                fold(&mut layers, l, &approx, kind);
                offsets.scales[l] = Some(trial);
                deviations[l] = dev;
                prev = outs;
                break;
            }
            attempt += 1;
            if attempt >= MAX_RETRIES {
                return Err(Error::TransformBudget { stage: l, deviation: dev, budget });
            }
            tol /= 16.0;
        }
    }
    let mut out = Network::new(net.input_dim(), layers)?.map_scalars(Wide::from_rational);
    out.meta = net.meta.clone();
    let achieved = verify(&out, ds, &Q::zero())?.max_error_f64();
    if achieved.is_nan() || achieved >= eps {
        return Err(Error::Verification(format!("sigmoidal network misses by {achieved:e} ≥ {eps:e}")));
    }
    Ok(SigmoidNetwork { net: out, kind, eps: achieved, stage_deviations: deviations })
}

/// Hard-tanh twin computing exactly the same labels: STEP(v) becomes
/// `(ht(v/δ) + 1)/2` and ID(v) becomes `M·ht(v/M)` with `M` the largest
/// `|v|` seen on the dataset.
pub fn exact_hardtanh(net: &Network<Q>, ds: &Dataset) -> Result<SigmoidNetwork<Q>> {
    if !verify(net, ds, &Q::zero())?.pass {
        return Err(Error::Verification("source network does not memorize the dataset".into()));
    }
    let nudged = nudge(net, ds)?;
    let delta =
        (0..nudged.net.hidden_layers()).flat_map(|l| step_margins(&nudged, l)).flatten().min().unwrap_or_else(Q::one);
    let half = Q::new(1.into(), 2.into());
    let mut layers: Vec<AffineLayer<Q>> = nudged.net.layers().to_vec();
    for l in 0..nudged.net.hidden_layers() {
        let approx: Vec<NeuronApprox> = (0..layers[l].out_dim())
            .map(|i| match layers[l].activations()[i] {
                Activation::Step => {
                    NeuronApprox { a: half.clone(), b: half.clone(), c: Q::one() / &delta, d: Q::zero() }
                }
                _ => {
                    let m = nudged.traces.iter().map(|t| t.pre[l][i].abs()).max().unwrap_or_else(Q::zero);
                    let m = if m.is_zero() { Q::one() } else { m };
                    NeuronApprox { a: m.clone(), b: Q::zero(), c: Q::one() / m, d: Q::zero() }
                }
            })
            .collect();
        fold(&mut layers, l, &approx, SigmoidKind::HardTanh);
    }
    let mut out = Network::new(net.input_dim(), layers)?;
    out.meta = net.meta.clone();
    let report = verify(&out, ds, &Q::zero())?;
    Ok(SigmoidNetwork {
        net: out,
        kind: SigmoidKind::HardTanh,
        eps: report.max_error_f64(),
        stage_deviations: vec![0.0; net.hidden_layers()],
    })
}
