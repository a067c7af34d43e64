//! JSON form of a network. Every scalar is written as an exact `"num/den"`
//! string, so floating networks round-trip through their dyadic values.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::network::{AffineLayer, Network};
use crate::scalar::{rational, Scalar};

#[derive(Debug, Serialize, Deserialize)]
struct LayerJson {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<(usize, usize, String)>,
    biases: Vec<String>,
    activations: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkJson {
    input_dim: usize,
    layers: Vec<LayerJson>,
    #[serde(default)]
    meta: serde_json::Map<String, Value>,
}

fn encode<S: Scalar>(v: &S) -> Result<String> {
    v.to_rational()
        .map(|r| rational::to_fraction_string(&r))
        .ok_or_else(|| Error::Malformed(format!("cannot serialize non-finite value {v:?}")))
}

fn decode<S: Scalar>(s: &str) -> Result<S> {
    let r = rational::parse(s).map_err(|_| Error::Malformed(format!("bad scalar '{s}'")))?;
    Ok(S::from_rational(&r))
}

pub fn to_value<S: Scalar>(net: &Network<S>) -> Result<Value> {
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            Ok(LayerJson {
                in_dim: l.in_dim(),
                out_dim: l.out_dim(),
                weights: l.weights().iter().map(|(r, c, w)| Ok((*r, *c, encode(w)?))).collect::<Result<_>>()?,
                biases: l.biases().iter().map(encode).collect::<Result<_>>()?,
                activations: l.activations().iter().map(ToString::to_string).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = NetworkJson { input_dim: net.input_dim(), layers, meta: net.meta.clone() };
    Ok(serde_json::to_value(doc)?)
}

pub fn from_value<S: Scalar>(value: Value) -> Result<Network<S>> {
    let doc: NetworkJson = serde_json::from_value(value)?;
    let layers = doc
        .layers
        .into_iter()
        .map(|l| {
            let weights = l.weights.iter().map(|(r, c, w)| Ok((*r, *c, decode(w)?))).collect::<Result<Vec<_>>>()?;
            let biases = l.biases.iter().map(|b| decode(b)).collect::<Result<Vec<_>>>()?;
            let acts = l.activations.iter().map(|a| a.parse::<Activation>()).collect::<Result<Vec<_>>>()?;
            AffineLayer::from_parts(l.in_dim, l.out_dim, weights, biases, acts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut net = Network::new(doc.input_dim, layers)?;
    net.meta = doc.meta;
    Ok(net)
}

pub fn to_string<S: Scalar>(net: &Network<S>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_value(net)?)?)
}

pub fn from_str<S: Scalar>(s: &str) -> Result<Network<S>> {
    from_value(serde_json::from_str(s)?)
}

/// Distinct activation tags used anywhere in a serialized network.
pub fn activation_tags(value: &Value) -> Vec<String> {
    let mut tags: Vec<String> = value["layers"]
        .as_array()
        .into_iter()
        .flatten()
        .flat_map(|l| l["activations"].as_array().cloned().unwrap_or_default())
        .filter_map(|a| a.as_str().map(str::to_string))
        .collect();
    tags.sort();
    tags.dedup();
    tags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::SigmoidKind;
    use crate::network::Neuron;
    use crate::scalar::rational::{int, ratio};
    use crate::wide::Wide;
    use num_rational::BigRational;

    fn sample() -> Network<BigRational> {
        let hidden = AffineLayer::dense(
            2,
            vec![
                Neuron::step(ratio(-1, 3), vec![(0, ratio(5, 7))]),
                Neuron::new(Activation::Sigma(SigmoidKind::HardTanh), int(2), vec![(1, int(-4))]),
            ],
        );
        let out = AffineLayer::sparse(2, vec![Neuron::id(int(0), vec![(1, int(3))])]);
        let mut net = Network::new(2, vec![hidden, out]).unwrap();
        net.meta.insert("seed".into(), 7.into());
        net
    }

    #[test]
    fn exact_round_trip() {
        let net = sample();
        let text = to_string(&net).unwrap();
        let back: Network<BigRational> = from_str(&text).unwrap();
        assert_eq!(back, net);
        let x = [ratio(1, 2), ratio(3, 5)];
        assert_eq!(back.evaluate(&x).unwrap(), net.evaluate(&x).unwrap());
    }

    #[test]
    fn schema_shape() {
        let v = to_value(&sample()).unwrap();
        assert_eq!(v["input_dim"], 2);
        assert_eq!(v["layers"][0]["weights"][0], serde_json::json!([0, 0, "5/7"]));
        assert_eq!(v["layers"][0]["biases"][0], "-1/3");
        assert_eq!(v["layers"][0]["activations"][1], "sigma:hard_tanh");
        assert_eq!(v["meta"]["seed"], 7);
        assert_eq!(activation_tags(&v), vec!["id", "sigma:hard_tanh", "step"]);
    }

    #[test]
    fn wide_values_survive_as_dyadics() {
        let net: Network<Wide> = sample().map_scalars(|r| Wide::from_rational(&(r * ratio(1, 1024))));
        let back: Network<Wide> = from_str(&to_string(&net).unwrap()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_out_of_range_weight() {
        let mut v = to_value(&sample()).unwrap();
        v["layers"][1]["weights"][0][1] = 9.into();
        assert!(from_value::<BigRational>(v).is_err());
    }
}
