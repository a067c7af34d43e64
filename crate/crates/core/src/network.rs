//! Layered affine networks with per-neuron activations.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::Serialize;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One neuron described by its incoming edges.
#[derive(Debug, Clone)]
pub struct Neuron<S> {
    pub activation: Activation,
    pub bias: S,
    pub inputs: Vec<(usize, S)>,
}

impl<S: Scalar> Neuron<S> {
    pub fn new(activation: Activation, bias: S, inputs: Vec<(usize, S)>) -> Self {
        Neuron { activation, bias, inputs }
    }

    pub fn id(bias: S, inputs: Vec<(usize, S)>) -> Self {
        Neuron::new(Activation::Id, bias, inputs)
    }

    pub fn step(bias: S, inputs: Vec<(usize, S)>) -> Self {
        Neuron::new(Activation::Step, bias, inputs)
    }

    /// Neuron with no effect: zero bias, zero inputs.
    pub fn dummy() -> Self {
        Neuron::id(S::zero(), Vec::new())
    }
}

/// `x ↦ act(W x + b)` with explicitly stored weight entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer<S> {
    in_dim: usize,
    out_dim: usize,
    /// Sorted by `(row, col)`, no duplicates.
    weights: Vec<(usize, usize, S)>,
    biases: Vec<S>,
    activations: Vec<Activation>,
}

impl<S: Scalar> AffineLayer<S> {
    /// Layer with no stored weights, zero biases and identity activations.
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        AffineLayer {
            in_dim,
            out_dim,
            weights: Vec::new(),
            biases: vec![S::zero(); out_dim],
            activations: vec![Activation::Id; out_dim],
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        mut weights: Vec<(usize, usize, S)>,
        biases: Vec<S>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if biases.len() != out_dim || activations.len() != out_dim {
            return Err(Error::Malformed(format!(
                "layer {in_dim}->{out_dim} has {} biases and {} activations",
                biases.len(),
                activations.len()
            )));
        }
        weights.sort_by_key(|(r, c, _)| (*r, *c));
        for pair in weights.windows(2) {
            if (pair[0].0, pair[0].1) == (pair[1].0, pair[1].1) {
                return Err(Error::Malformed(format!("duplicate weight ({}, {})", pair[0].0, pair[0].1)));
            }
        }
        if let Some((r, c, _)) = weights.iter().find(|(r, c, _)| *r >= out_dim || *c >= in_dim) {
            return Err(Error::Malformed(format!("weight ({r}, {c}) outside {out_dim}x{in_dim}")));
        }
        Ok(AffineLayer { in_dim, out_dim, weights, biases, activations })
    }

    /// Every `(row, col)` entry is stored, zeros included.
    pub fn dense(in_dim: usize, neurons: Vec<Neuron<S>>) -> Self {
        Self::build(in_dim, neurons, true)
    }

    /// Only the edges listed by each neuron are stored.
    pub fn sparse(in_dim: usize, neurons: Vec<Neuron<S>>) -> Self {
        Self::build(in_dim, neurons, false)
    }

    fn build(in_dim: usize, neurons: Vec<Neuron<S>>, dense: bool) -> Self {
        let out_dim = neurons.len();
        let mut weights = Vec::new();
        let mut biases = Vec::with_capacity(out_dim);
        let mut activations = Vec::with_capacity(out_dim);
        for (r, n) in neurons.into_iter().enumerate() {
            let mut row: BTreeMap<usize, S> = BTreeMap::new();
            if dense {
                for c in 0..in_dim {
                    row.insert(c, S::zero());
                }
            }
            for (c, w) in n.inputs {
                assert!(c < in_dim, "input {c} out of range {in_dim}");
                let e = row.entry(c).or_insert_with(S::zero);
                *e = e.clone() + w;
            }
            weights.extend(row.into_iter().map(|(c, w)| (r, c, w)));
            biases.push(n.bias);
            activations.push(n.activation);
        }
        AffineLayer { in_dim, out_dim, weights, biases, activations }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[(usize, usize, S)] {
        &self.weights
    }

    pub fn biases(&self) -> &[S] {
        &self.biases
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn weight(&self, row: usize, col: usize) -> Option<&S> {
        self.weights.binary_search_by_key(&(row, col), |(r, c, _)| (*r, *c)).ok().map(|i| &self.weights[i].2)
    }

    /// Stores `value` at `(row, col)`, even when it is zero.
    pub fn set_weight(&mut self, row: usize, col: usize, value: S) {
        assert!(row < self.out_dim && col < self.in_dim);
        match self.weights.binary_search_by_key(&(row, col), |(r, c, _)| (*r, *c)) {
            Ok(i) => self.weights[i].2 = value,
            Err(i) => self.weights.insert(i, (row, col, value)),
        }
    }

    pub fn set_bias(&mut self, row: usize, value: S) {
        self.biases[row] = value;
    }

    pub fn set_activation(&mut self, row: usize, act: Activation) {
        self.activations[row] = act;
    }

    pub fn weights_mut(&mut self) -> impl Iterator<Item = (usize, usize, &mut S)> {
        self.weights.iter_mut().map(|(r, c, w)| (*r, *c, w))
    }

    pub fn biases_mut(&mut self) -> &mut [S] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// `W x + b`
    pub fn pre_activations(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = self.biases.clone();
        for (r, c, w) in &self.weights {
            out[*r].add_product(w, &x[*c]);
        }
        out
    }

    pub fn activate(&self, pre: &[S]) -> Result<Vec<S>> {
        pre.iter().zip(&self.activations).map(|(v, a)| apply(*a, v)).collect()
    }

    pub fn map_scalars<T: Scalar>(&self, f: &impl Fn(&S) -> T) -> AffineLayer<T> {
        AffineLayer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: self.weights.iter().map(|(r, c, w)| (*r, *c, f(w))).collect(),
            biases: self.biases.iter().map(f).collect(),
            activations: self.activations.clone(),
        }
    }
}

pub fn apply<S: Scalar>(act: Activation, v: &S) -> Result<S> {
    match act {
        Activation::Step => Ok(if *v >= S::zero() { S::one() } else { S::zero() }),
        Activation::Id => Ok(v.clone()),
        Activation::Sigma(k) => S::sigma(k, v),
    }
}

/// Hidden layer count, widest hidden layer and stored parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NetworkStats {
    pub hidden_layers: usize,
    pub width: usize,
    pub param_count: usize,
}

/// Pre- and post-activation values of every layer for one input.
#[derive(Debug, Clone)]
pub struct Trace<S> {
    pub pre: Vec<Vec<S>>,
    pub post: Vec<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    input_dim: usize,
    layers: Vec<AffineLayer<S>>,
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl<S: Scalar> Network<S> {
    pub fn new(input_dim: usize, layers: Vec<AffineLayer<S>>) -> Result<Self> {
        let net = Network { input_dim, layers, meta: Default::default() };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let last = self.layers.last().ok_or_else(|| Error::Malformed("network has no layers".into()))?;
        let mut dim = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim != dim {
                return Err(Error::Malformed(format!("layer {i} expects {} inputs but receives {dim}", l.in_dim)));
            }
            dim = l.out_dim;
        }
        if last.activations.iter().any(|a| *a != Activation::Id) {
            return Err(Error::Malformed("output layer must use identity activations".into()));
        }
        Ok(())
    }

    /// Network computing the constant `value` with no hidden layers.
    pub fn constant(input_dim: usize, value: S) -> Self {
        let mut out = AffineLayer::new(input_dim, 1);
        out.set_bias(0, value);
        Network { input_dim, layers: vec![out], meta: Default::default() }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[AffineLayer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [AffineLayer<S>] {
        &mut self.layers
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.out_dim).collect()
    }

    pub fn stats(&self) -> NetworkStats {
        NetworkStats {
            hidden_layers: self.hidden_layers(),
            width: self.hidden_widths().into_iter().max().unwrap_or(0),
            param_count: self.layers.iter().map(AffineLayer::param_count).sum(),
        }
    }

    /// True when every hidden neuron is STEP or ID.
    pub fn is_step_id(&self) -> bool {
        self.layers.iter().all(|l| l.activations.iter().all(|a| a.is_step_or_id()))
    }

    fn check_input(&self, x: &[S]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::InputShape { expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.activate(&l.pre_activations(&h))?;
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: i });
            }
        }
        Ok(h)
    }

    pub fn trace(&self, x: &[S]) -> Result<Trace<S>> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for l in &self.layers {
            let p = l.pre_activations(&h);
            h = l.activate(&p)?;
            pre.push(p);
            post.push(h.clone());
        }
        Ok(Trace { pre, post })
    }

    pub fn map_scalars<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Network<T> {
        Network {
            input_dim: self.input_dim,
            layers: self.layers.iter().map(|l| l.map_scalars(&f)).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Feeds this network's output into `next`, merging the output affine
    /// map with `next`'s first affine map so no layer is added. A merged
    /// entry is stored whenever some edge path connects its endpoints.
    pub fn compose(mut self, next: Network<S>) -> Result<Network<S>> {
        if self.output_dim() != next.input_dim {
            return Err(Error::InputShape { expected: next.input_dim, got: self.output_dim() });
        }
        let a = self.layers.pop().expect("nonempty");
        let mut rest = next.layers.into_iter();
        let b = rest.next().expect("nonempty");
        let mut rows: Vec<Vec<(usize, &S)>> = vec![Vec::new(); a.out_dim];
        for (r, c, w) in &a.weights {
            rows[*r].push((*c, w));
        }
        let mut merged: BTreeMap<(usize, usize), S> = BTreeMap::new();
        let mut biases = b.biases.clone();
        for (j, k, w) in &b.weights {
            biases[*j].add_product(w, &a.biases[*k]);
            for (c, v) in &rows[*k] {
                merged.entry((*j, *c)).or_insert_with(S::zero).add_product(w, v);
            }
        }
        let layer = AffineLayer {
            in_dim: a.in_dim,
            out_dim: b.out_dim,
            weights: merged.into_iter().map(|((r, c), w)| (r, c, w)).collect(),
            biases,
            activations: b.activations,
        };
        self.layers.push(layer);
        self.layers.extend(rest);
        self.meta.extend(next.meta);
        Ok(self)
    }

    /// Widens hidden layers to `widths` with inert identity neurons whose
    /// incoming and outgoing edges are stored zeros.
    pub fn pad_hidden(&self, widths: &[usize]) -> Result<Network<S>> {
        if widths.len() != self.hidden_layers() {
            return Err(Error::Malformed(format!(
                "{} widths given for {} hidden layers",
                widths.len(),
                self.hidden_layers()
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut in_dim = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            let out_dim = widths.get(i).copied().unwrap_or(l.out_dim);
            if out_dim < l.out_dim {
                return Err(Error::Malformed(format!("layer {i} cannot shrink from {} to {out_dim}", l.out_dim)));
            }
            let mut entries: BTreeMap<(usize, usize), S> =
                l.weights.iter().map(|(r, c, w)| ((*r, *c), w.clone())).collect();
            for r in 0..out_dim {
                for c in 0..in_dim {
                    if r >= l.out_dim || c >= l.in_dim {
                        entries.insert((r, c), S::zero());
                    }
                }
            }
            let mut biases = l.biases.clone();
            biases.resize(out_dim, S::zero());
            let mut activations = l.activations.clone();
            activations.resize(out_dim, Activation::Id);
            layers.push(AffineLayer {
                in_dim,
                out_dim,
                weights: entries.into_iter().map(|((r, c), w)| (r, c, w)).collect(),
                biases,
                activations,
            });
            in_dim = out_dim;
        }
        Ok(Network { input_dim: self.input_dim, layers, meta: self.meta.clone() })
    }

    /// Appends `next` after this network's output layer, which becomes a
    /// hidden identity layer.
    pub fn stack(mut self, next: Network<S>) -> Result<Network<S>> {
        if self.output_dim() != next.input_dim {
            return Err(Error::InputShape { expected: next.input_dim, got: self.output_dim() });
        }
        self.layers.extend(next.layers);
        self.meta.extend(next.meta);
        Ok(self)
    }
}

/// Exact evaluation of a STEP+Id network.
pub fn evaluate_exact(net: &Network<BigRational>, x: &[BigRational]) -> Result<Vec<BigRational>> {
    net.evaluate(x)
}

/// Double-precision forward pass of a single-output network.
pub fn evaluate_float(net: &Network<f64>, x: &[f64]) -> Result<f64> {
    let out = net.evaluate(x)?;
    out.first().copied().ok_or_else(|| Error::Malformed("network has no outputs".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::SigmoidKind;
    use crate::scalar::rational::{int, ratio};

    fn two_layer() -> Network<BigRational> {
        // h = STEP(x - 1), out = 2h + x, carried through an ID copy of x
        let hidden = AffineLayer::sparse(
            1,
            vec![Neuron::step(int(-1), vec![(0, int(1))]), Neuron::id(int(0), vec![(0, int(1))])],
        );
        let out = AffineLayer::sparse(2, vec![Neuron::id(int(0), vec![(0, int(2)), (1, int(1))])]);
        Network::new(1, vec![hidden, out]).unwrap()
    }

    #[test]
    fn identity_layer() {
        let out = AffineLayer::sparse(1, vec![Neuron::id(int(0), vec![(0, int(1))])]);
        let net = Network::new(1, vec![out]).unwrap();
        assert_eq!(evaluate_exact(&net, &[ratio(7, 3)]).unwrap(), vec![ratio(7, 3)]);
    }

    #[test]
    fn step_at_zero_is_one() {
        let hidden = AffineLayer::sparse(1, vec![Neuron::step(int(0), vec![(0, int(1))])]);
        let out = AffineLayer::sparse(1, vec![Neuron::id(int(0), vec![(0, int(1))])]);
        let net = Network::new(1, vec![hidden, out]).unwrap();
        assert_eq!(evaluate_exact(&net, &[int(0)]).unwrap(), vec![int(1)]);
        assert_eq!(evaluate_exact(&net, &[ratio(-1, 1000)]).unwrap(), vec![int(0)]);
    }

    #[test]
    fn hand_evaluated_two_layer() {
        let net = two_layer();
        assert_eq!(evaluate_exact(&net, &[int(3)]).unwrap(), vec![int(5)]);
        assert_eq!(evaluate_exact(&net, &[int(0)]).unwrap(), vec![int(0)]);
    }

    #[test]
    fn dimension_mismatch() {
        let err = evaluate_exact(&two_layer(), &[int(1), int(2)]).unwrap_err();
        assert!(matches!(err, Error::InputShape { expected: 1, got: 2 }));
    }

    #[test]
    fn float_examples() {
        let single = |kind, w: f64, b: f64| {
            let hidden = AffineLayer::sparse(1, vec![Neuron::new(Activation::Sigma(kind), b, vec![(0, w)])]);
            let out = AffineLayer::sparse(1, vec![Neuron::id(0.0, vec![(0, 1.0)])]);
            Network::new(1, vec![hidden, out]).unwrap()
        };
        assert_eq!(evaluate_float(&single(SigmoidKind::Logistic, 0.0, 0.0), &[3.0]).unwrap(), 0.5);
        assert_eq!(evaluate_float(&single(SigmoidKind::Tanh, 1.0, 0.0), &[0.0]).unwrap(), 0.0);
        assert!(evaluate_float(&single(SigmoidKind::Tanh, 1.0, 0.0), &[f64::NAN]).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let hidden = AffineLayer::sparse(1, vec![Neuron::id(0.0, vec![(0, f64::MAX)])]);
        let out = AffineLayer::sparse(1, vec![Neuron::id(0.0, vec![(0, 10.0)])]);
        let net = Network::new(1, vec![hidden, out]).unwrap();
        assert!(matches!(evaluate_float(&net, &[1.0]), Err(Error::NumericOverflow { .. })));
    }

    #[test]
    fn stats_count_stored_entries() {
        let n = |k: usize| (0..k).map(|c| (c, 1.0)).collect::<Vec<_>>();
        let hidden = AffineLayer::dense(2, (0..3).map(|_| Neuron::step(0.0, n(2))).collect());
        let out = AffineLayer::dense(3, vec![Neuron::id(0.0, n(3))]);
        let net = Network::new(2, vec![hidden, out]).unwrap();
        let s = net.stats();
        assert_eq!(s, NetworkStats { hidden_layers: 1, width: 3, param_count: 13 });

        let mut net = two_layer();
        let before = net.stats().param_count;
        net.layers_mut()[1].set_weight(0, 1, int(1));
        assert_eq!(net.stats().param_count, before);
        net.layers_mut()[0].set_weight(1, 0, int(0));
        assert_eq!(net.stats().param_count, before);
        let mut l = AffineLayer::<BigRational>::new(2, 1);
        l.set_weight(0, 1, int(0));
        assert_eq!(l.param_count(), 2);
    }

    #[test]
    fn output_layer_must_be_identity() {
        let out = AffineLayer::sparse(1, vec![Neuron::step(int(0), vec![(0, int(1))])]);
        assert!(Network::new(1, vec![out]).is_err());
    }

    #[test]
    fn compose_and_stack_agree_with_sequential_evaluation() {
        let a = two_layer();
        let b = two_layer();
        let composed = a.clone().compose(b.clone()).unwrap();
        let stacked = a.clone().stack(b.clone()).unwrap();
        assert_eq!(composed.hidden_layers(), 2);
        assert_eq!(stacked.hidden_layers(), 3);
        for x in -3..6 {
            let mid = evaluate_exact(&a, &[int(x)]).unwrap();
            let want = evaluate_exact(&b, &mid).unwrap();
            assert_eq!(evaluate_exact(&composed, &[int(x)]).unwrap(), want);
            assert_eq!(evaluate_exact(&stacked, &[int(x)]).unwrap(), want);
        }
    }

    #[test]
    fn constant_network() {
        let net = Network::constant(3, int(4));
        assert_eq!(net.stats().param_count, 1);
        assert_eq!(evaluate_exact(&net, &[int(1), int(2), int(3)]).unwrap(), vec![int(4)]);
    }

    #[test]
    fn padding_keeps_the_function() {
        let net = two_layer();
        let wide = net.pad_hidden(&[4]).unwrap();
        assert_eq!(wide.hidden_widths(), vec![4]);
        assert_eq!(wide.stats().param_count, 4 + 4 + 4 + 1);
        for x in [int(-2), int(1), ratio(7, 2)] {
            assert_eq!(wide.evaluate(std::slice::from_ref(&x)).unwrap(), net.evaluate(&[x]).unwrap());
        }
        assert!(net.pad_hidden(&[1]).is_err());
        assert!(net.pad_hidden(&[2, 2]).is_err());
    }
}
