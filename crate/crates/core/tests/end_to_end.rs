mod common;

use memnet::activation::SigmoidKind;
use memnet::network::Network;
use memnet::pipeline::{build_sublinear, build_width3, verify};
use memnet::scalar::Scalar;
use memnet::serialize;
use memnet::sigmoid_approx::{exact_hardtanh, transform};
use memnet::wide::Wide;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

type Q = BigRational;

#[test]
fn exact_networks_round_trip() {
    let mut rng = common::rng(31);
    let ds = common::random_grid(&mut rng, 24, 3, 4, 6);
    let net = build_sublinear(&ds, 0.8, 2).unwrap().net;
    let back: Network<Q> = serialize::from_str(&serialize::to_string(&net).unwrap()).unwrap();
    assert_eq!(back.layers(), net.layers());
    assert_eq!(back.meta, net.meta);
    for x in ds.points() {
        assert_eq!(back.evaluate(x).unwrap(), net.evaluate(x).unwrap());
    }
}

#[test]
fn smooth_networks_round_trip_bit_for_bit() {
    let mut rng = common::rng(32);
    let ds = common::random_grid(&mut rng, 12, 2, 3, 8);
    let net = build_width3(&ds, 0).unwrap().net;
    let smooth = transform(&net, &ds, 0.05, SigmoidKind::Logistic).unwrap();
    let back: Network<Wide> = serialize::from_str(&serialize::to_string(&smooth.net).unwrap()).unwrap();
    for x in ds.points() {
        let input: Vec<Wide> = x.iter().map(Wide::from_rational).collect();
        assert_eq!(back.evaluate(&input).unwrap(), smooth.net.evaluate(&input).unwrap());
    }
    assert!(verify(&back, &ds, &Q::from_float(0.05).unwrap()).unwrap().pass);
}

#[test]
fn every_activation_family_fits_the_same_data() {
    let mut rng = common::rng(33);
    let ds = common::random_grid(&mut rng, 16, 4, 2, 3);
    let net = build_sublinear(&ds, 2.0 / 3.0, 1).unwrap().net;
    assert!(verify(&net, &ds, &Q::zero()).unwrap().pass);
    let hard = exact_hardtanh(&net, &ds).unwrap();
    assert_eq!(hard.eps, 0.0);
    assert!(verify(&hard.net, &ds, &Q::zero()).unwrap().pass);
    for kind in [SigmoidKind::Tanh, SigmoidKind::Logistic] {
        let mut last = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let s = transform(&net, &ds, eps, kind).unwrap();
            let err = verify(&s.net, &ds, &Q::zero()).unwrap().max_error_f64();
            assert!(err < eps, "{kind:?} at {eps}: {err}");
            assert!(s.stage_deviations.iter().all(|&d| d < eps / s.stage_deviations.len() as f64));
            assert!(err <= last);
            last = err;
        }
    }
}

#[test]
fn seeds_fix_the_build() {
    let mut rng = common::rng(34);
    let ds = common::random_grid(&mut rng, 20, 2, 3, 10);
    let a = build_sublinear(&ds, 1.0, 9).unwrap();
    let b = build_sublinear(&ds, 1.0, 9).unwrap();
    assert_eq!(a.net.layers(), b.net.layers());
    assert_eq!(serde_json::to_value(&a.report).unwrap(), serde_json::to_value(&b.report).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_datasets_are_memorized(seed in any::<u64>(), n in 2usize..24, dim in 1usize..4, classes in 2usize..5) {
        let mut rng = common::rng(seed);
        let side = ((2 * n) as f64).powf(1.0 / dim as f64).ceil().max(2.0) as i64;
        let ds = common::random_grid(&mut rng, n, dim, classes.min(n), side);
        for net in [build_sublinear(&ds, 2.0 / 3.0, seed).unwrap().net, build_width3(&ds, seed).unwrap().net] {
            prop_assert!(verify(&net, &ds, &Q::zero()).unwrap().pass);
            let back: Network<Q> = serialize::from_str(&serialize::to_string(&net).unwrap()).unwrap();
            prop_assert_eq!(back.layers(), net.layers());
        }
    }
}
