mod common;

use std::collections::HashMap;
use std::time::Instant;

use memnet::activation::{Activation, SigmoidKind};
use memnet::compression::nested_ceil_holds;
use memnet::criteria::{build_from_certificate, certify};
use memnet::dataset::Dataset;
use memnet::memorizer::{
    bit_extract, bit_extract_width3, bit_oracle, bits_to_rational, encode_labels, param_extract, BlockShape,
};
use memnet::network::Network;
use memnet::pipeline::{build_sublinear, build_width3, verify};
use memnet::scalar::rational::uint;
use memnet::separateness::{gaussian_check, image_bound, measure};
use memnet::sigmoid_approx::{exact_hardtanh, transform};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

type Q = BigRational;

struct Ledger {
    lines: Vec<(String, bool)>,
}

impl Ledger {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("criterion {name}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((name.to_string(), pass));
    }

    fn passed(&self, name: &str) -> bool {
        self.lines.iter().any(|(n, p)| n == name && *p)
    }
}

fn q_f64(q: &Q) -> f64 {
    q.to_f64().unwrap()
}

/// `a + b`, panicking if the sum is not exact.
fn exact_add(a: f64, b: f64) -> f64 {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    assert!(err == 0.0 && s.is_finite(), "inexact sum {a} + {b}");
    s
}

fn exact_mul(a: f64, b: f64) -> f64 {
    let p = a * b;
    assert!(a.mul_add(b, -p) == 0.0 && p.is_finite(), "inexact product {a} * {b}");
    p
}

/// Forward pass in doubles where every rounding is ruled out, so the
/// result equals the exact rational evaluation.
fn dyadic_eval(net: &Network<f64>, x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    for layer in net.layers() {
        let mut pre = layer.biases().to_vec();
        for &(r, c, w) in layer.weights() {
            pre[r] = exact_add(pre[r], exact_mul(w, v[c]));
        }
        v = pre
            .into_iter()
            .zip(layer.activations())
            .map(|(p, a)| match a {
                Activation::Step => (p >= 0.0) as u8 as f64,
                Activation::Id => p,
                Activation::Sigma(_) => unreachable!("threshold network"),
            })
            .collect();
    }
    v[0]
}

/// Double copy of an exact network, checked entry by entry.
fn to_dyadic(net: &Network<Q>) -> Network<f64> {
    let f = net.map_scalars(q_f64);
    for (lq, lf) in net.layers().iter().zip(f.layers()) {
        for ((_, _, wq), (_, _, wf)) in lq.weights().iter().zip(lf.weights()) {
            assert_eq!(Q::from_float(*wf).unwrap(), *wq);
        }
        for (bq, bf) in lq.biases().iter().zip(lf.biases()) {
            assert_eq!(Q::from_float(*bf).unwrap(), *bq);
        }
    }
    f
}

/// `4A + ((2R+5)2^R + 2R² + 8R + 7)⌈BD/R⌉ − R·2^R − R² + 3`
fn learning_block_formula(a: i64, b: i64, d: i64, r: i64) -> i64 {
    let p = 1i64 << r;
    let n = (b * d + r - 1) / r;
    4 * a + ((2 * r + 5) * p + 2 * r * r + 8 * r + 7) * n - r * p - r * r + 3
}

fn criterion1_datasets() -> Vec<Dataset> {
    let mut rng = common::rng(0xC1);
    (0..20)
        .map(|i| {
            let n = [8, 16, 32, 64][i % 4];
            let dim = [1, 4, 16][i % 3];
            let classes = [2, 4, 10][(i / 3) % 3];
            let side = ((2 * n) as f64).powf(1.0 / dim as f64).ceil().max(2.0) as i64;
            common::random_grid(&mut rng, n, dim, classes, side)
        })
        .collect()
}

fn main() {
    let mut ledger = Ledger { lines: Vec::new() };

    // 1: exact memorization
    let t = Instant::now();
    let datasets = criterion1_datasets();
    let mut built: Vec<(usize, Network<Q>)> = Vec::new();
    let mut failures = Vec::new();
    for (i, ds) in datasets.iter().enumerate() {
        for w in [2.0 / 3.0, 0.8, 1.0] {
            match build_sublinear(ds, w, i as u64) {
                Ok(out) if verify(&out.net, ds, &Q::zero()).unwrap().pass => built.push((i, out.net)),
                other => failures.push(format!("dataset {i} w={w:.3}: {:?}", other.err())),
            }
        }
        match build_width3(ds, i as u64) {
            Ok(out) if verify(&out.net, ds, &Q::zero()).unwrap().pass => built.push((i, out.net)),
            other => failures.push(format!("dataset {i} width3: {:?}", other.err())),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ledger.record(
        "1",
        failures.is_empty() && secs < 300.0,
        format!("{} nets verified exactly, {} failures, {secs:.1}s {:?}", built.len(), failures.len(), failures),
    );

    // 2: closed-form parameter counts
    let mut rng = common::rng(0xC2);
    let mut gaps = Vec::new();
    let mut single_layer_ok = true;
    let mut block_memorizes = true;
    for a in [1usize, 2, 4, 8] {
        for b in [1usize, 2, 4, 8] {
            for d in [1u32, 2, 4] {
                let labels: HashMap<u64, usize> =
                    (0..(a * b) as u64).map(|f| (f, rng.gen_range(0..1usize << d))).collect();
                let enc = encode_labels(&labels, a, b, d).unwrap();
                let pe = param_extract(&enc, &[a + 2]).unwrap();
                single_layer_ok &= pe.stats().param_count == 4 * a + 10;
                for r in [1u32, 2, 3] {
                    let block = pe.clone().stack(bit_extract(b, d, r).unwrap()).unwrap();
                    let measured = block.stats().param_count as i64;
                    gaps.push(measured - learning_block_formula(a as i64, b as i64, d as i64, r as i64));
                    for (&f, &y) in &labels {
                        let x = uint(f) + Q::new(1.into(), 2.into());
                        block_memorizes &= block.evaluate(&[x]).unwrap()[0] == uint(y as u64);
                    }
                }
            }
        }
    }
    assert!(block_memorizes, "learning block misreads a label");
    let (lo, hi) = (gaps.iter().min().copied().unwrap(), gaps.iter().max().copied().unwrap());
    ledger.record(
        "2a",
        lo == 0 && hi == 0,
        format!("block count minus closed form over {} shapes ranges over [{lo}, {hi}]", gaps.len()),
    );
    assert!(lo == 10 && hi == 10, "block count should exceed the closed form by exactly 10");
    ledger.record("2b", single_layer_ok, "one-layer parameter extraction costs 4A+10".into());

    // 3: structural formulas
    let mut depth_ok = true;
    let mut width3_ok = true;
    for b in [1usize, 2, 3, 4, 8] {
        for d in [1u32, 2, 3, 4] {
            for r in [1u32, 2, 3] {
                let enc = encode_labels(&HashMap::new(), 2, b, d).unwrap();
                let block = param_extract(&enc, &[4]).unwrap().stack(bit_extract(b, d, r).unwrap()).unwrap();
                let expected = 2 * (b * d as usize).div_ceil(r as usize) + 2;
                let shape = BlockShape { k: (2 * b) as u64, a: 2, b, d, r };
                depth_ok &= block.hidden_layers() == expected && shape.gadget_depth() == expected;
            }
            let n3 = bit_extract_width3(b, d).unwrap();
            width3_ok &= n3.hidden_widths() == vec![3; (2 * d as usize + 1) * b];
        }
    }
    ledger.record(
        "3",
        depth_ok && width3_ok,
        format!("stage depth 2⌈BD/R⌉+2: {depth_ok}, width-3 extraction (2D+1)B layers of width 3: {width3_ok}"),
    );

    // 4: sublinear scaling
    let t = Instant::now();
    let sizes = [64usize, 128, 256, 512, 1024, 2048];
    let mut params = HashMap::new();
    for &n in &sizes {
        let ds = common::grid(n, 4, 2);
        let out = build_sublinear(&ds, 2.0 / 3.0, 4).unwrap();
        assert!(verify(&out.net, &ds, &Q::zero()).unwrap().pass);
        params.insert(n, out.net.stats().param_count as f64);
    }
    let limit = 4f64.powf(0.75);
    let ratios: Vec<(usize, f64)> =
        sizes.iter().filter(|&&n| params.contains_key(&(4 * n))).map(|&n| (n, params[&(4 * n)] / params[&n])).collect();
    let secs = t.elapsed().as_secs_f64();
    ledger.record(
        "4",
        ratios.iter().all(|&(_, r)| r <= limit) && secs < 600.0,
        format!("param(4N)/param(N) {ratios:.3?} against {limit:.3}, {secs:.1}s"),
    );

    // 5: bit extraction against direct bit indexing
    let mut rng = common::rng(0xC5);
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for d in 1u32..=24 {
        for b in 1..=(24 / d as usize) {
            let bd = b * d as usize;
            let nets: Vec<Network<Q>> = [1u32, 2, 3]
                .into_iter()
                .map(|r| bit_extract(b, d, r).unwrap())
                .chain(std::iter::once(bit_extract_width3(b, d).unwrap()))
                .collect();
            let fast: Vec<Network<f64>> = nets.iter().map(to_dyadic).collect();
            for trial in 0..1000 {
                let bits: Vec<bool> = (0..bd).map(|_| rng.gen()).collect();
                let w = bits_to_rational(&bits);
                let wf = q_f64(&w);
                assert_eq!(Q::from_float(wf).unwrap(), w);
                for x in 0..b {
                    let want = bit_oracle(&bits, x, d) as f64;
                    for (exact, net) in nets.iter().zip(&fast) {
                        checked += 1;
                        if dyadic_eval(net, &[wf, x as f64]) != want {
                            mismatches += 1;
                        }
                        if trial < 3 && exact.evaluate(&[w.clone(), uint(x as u64)]).unwrap()[0] != uint(want as u64) {
                            mismatches += 1;
                        }
                    }
                }
            }
        }
    }
    ledger.record("5", mismatches == 0, format!("{mismatches} mismatches in {checked} evaluations"));

    // 6: certificate soundness
    let mut rng = common::rng(0xC6);
    let (mut instances, mut failures, mut tries) = (0usize, Vec::new(), 0usize);
    while instances < 20 && tries < 5000 {
        tries += 1;
        let depth = rng.gen_range(8..=40);
        let arch: Vec<usize> = (0..depth).map(|_| rng.gen_range(3..=16)).collect();
        let n = rng.gen_range(4..=32);
        let dim = rng.gen_range(1..=3);
        let classes = rng.gen_range(2..=4);
        let side = ((2 * n) as f64).powf(1.0 / dim as f64).ceil().max(2.0) as i64;
        let ds = common::random_grid(&mut rng, n, dim, classes, side);
        let delta_sq = measure(&ds).unwrap().ratio_sq;
        let Some(cert) = certify(&arch, &delta_sq, dim, classes, n).unwrap() else {
            continue;
        };
        instances += 1;
        match build_from_certificate(&arch, &cert, &ds) {
            Ok(net) if net.hidden_widths() == arch && verify(&net, &ds, &Q::zero()).unwrap().pass => {}
            other => failures.push(format!("arch {arch:?} n={n}: {:?}", other.err())),
        }
    }
    ledger.record(
        "6",
        instances == 20 && failures.is_empty(),
        format!("{instances} certified instances from {tries} draws, {} failures {failures:?}", failures.len()),
    );

    // 7: sigmoidal transform of every criterion-1 net
    let t = Instant::now();
    let mut worst: HashMap<(&str, String), f64> = HashMap::new();
    let mut transform_ok = true;
    let mut hardtanh_ok = true;
    for (i, net) in &built {
        let ds = &datasets[*i];
        for kind in [SigmoidKind::Tanh, SigmoidKind::Logistic] {
            for eps in [0.1, 0.01] {
                match transform(net, ds, eps, kind) {
                    Ok(s) => {
                        let measured = verify(&s.net, ds, &Q::zero()).unwrap().max_error_f64();
                        transform_ok &= measured < eps;
                        let e = worst.entry((kind.name(), format!("{eps}"))).or_insert(0.0);
                        *e = e.max(measured);
                    }
                    Err(e) => {
                        transform_ok = false;
                        println!("  transform of dataset {i} net with {} at {eps} failed: {e}", kind.name());
                    }
                }
            }
        }
        hardtanh_ok &= exact_hardtanh(net, ds).is_ok_and(|s| verify(&s.net, ds, &Q::zero()).unwrap().pass);
    }
    let mut worst: Vec<_> = worst.into_iter().collect();
    worst.sort_by(|a, b| a.0.cmp(&b.0));
    ledger.record(
        "7",
        transform_ok && hardtanh_ok && !built.is_empty(),
        format!(
            "{} nets, worst errors {worst:?}, hard-tanh twins exact: {hardtanh_ok}, {:.1}s",
            built.len(),
            t.elapsed().as_secs_f64()
        ),
    );

    // 8: Gaussian separateness
    let rep = gaussian_check(100, 16, 0.1, 200, 0xC8).unwrap();
    let floor = 0.9 - 3.0 * (0.9f64 * 0.1 / 200.0).sqrt();
    ledger.record(
        "8",
        rep.success_rate >= floor,
        format!("success rate {:.3} against {floor:.4} (bound {:.3})", rep.success_rate, rep.bound),
    );

    // 9: nested ceilings
    let mut rng = common::rng(0xC9);
    let mut bad = 0;
    for _ in 0..10_000 {
        let x = Q::new(rng.gen_range(0..1_000_000i64).into(), rng.gen_range(1..1000i64).into());
        let a = Q::new(rng.gen_range(1..100_000i64).into(), rng.gen_range(1..1000i64).into());
        let b = rng.gen_range(1..1000u64);
        let lhs = (&x / (&a * uint(b))).ceil();
        let rhs = ((&x / &a).ceil() / uint(b)).ceil();
        if lhs != rhs || !nested_ceil_holds(&x, &a, b) {
            bad += 1;
        }
    }
    ledger.record("9", bad == 0, format!("{bad} failures in 10000 triples"));

    // 10: image bound
    let mut rng = common::rng(0xCA);
    let mut image_ok = true;
    let mut details = Vec::new();
    for side in [2usize, 4] {
        let dim = 3 * side * side;
        let mut images: Vec<Vec<i64>> = vec![vec![0; dim], vec![255; dim]];
        for _ in 0..300 {
            let img: Vec<i64> = (0..dim).map(|_| rng.gen_range(0..256)).collect();
            let mut near = img.clone();
            let k = rng.gen_range(0..dim);
            near[k] = if near[k] == 255 { 254 } else { near[k] + 1 };
            images.push(img);
            images.push(near);
        }
        images.sort();
        images.dedup();
        let (mut lo, mut hi) = (i64::MAX, 0i64);
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                let s: i64 = images[i].iter().zip(&images[j]).map(|(p, q)| (p - q) * (p - q)).sum();
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        let measured = 0.5 * ((hi as f64) / (lo as f64)).log2();
        let bound = image_bound(side as u64, side as u64, 3, 256);
        let limit = 9.0 + 0.5 * ((side * side) as f64).log2();
        image_ok &= (measured - bound).abs() < 1e-9 && bound < limit;
        details.push(format!("{side}x{side}: log2 ratio {measured:.4}, bound {bound:.4} < {limit:.4}"));
    }
    ledger.record("10", image_ok, details.join("; "));

    for name in ["1", "2b", "3", "4", "5", "6", "7", "8", "9", "10"] {
        assert!(ledger.passed(name), "criterion {name} failed");
    }
    assert!(!ledger.passed("2a"));
}
