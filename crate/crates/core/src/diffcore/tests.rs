use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn store(entries: &[(&str, Tensor<f64>)]) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (name, t) in entries {
        s.insert(
            name,
            Param {
                value: t.clone(),
                init: Init::Zeros,
            },
        )
        .unwrap();
    }
    s
}

/// Weighted sum against a fixed random tensor, so every output coordinate
/// carries a distinct gradient.
fn probe_loss(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let w = g.constant(rand_tensor(g.shape(out), seed));
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

fn check(
    params: &ParamStore<f64>,
    build: impl Fn(&mut Graph<f64>, &ParamVars) -> Result<Var>,
) -> GradCheckReport {
    let cfg = GradCheckConfig {
        h: 1e-5,
        samples_per_tensor: 40,
        seed: 3,
    };
    let report = grad_check(
        params,
        |g, v| {
            let out = build(g, v)?;
            probe_loss(g, out, 99)
        },
        &cfg,
    )
    .unwrap();
    assert!(report.checked > 0, "nothing checked: {report:?}");
    assert!(report.max_rel_error < 1e-4, "{report:?}");
    report
}

fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64], pad: usize) -> Vec<f64> {
    let [n, h, w, cin] = *x.shape() else { panic!() };
    let [ks, _, _, cout] = *k.shape() else { panic!() };
    let (oh, ow) = (h + 2 * pad - ks + 1, w + 2 * pad - ks + 1);
    let mut out = vec![0.0; n * oh * ow * cout];
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = b[co];
                    for ky in 0..ks {
                        for kx in 0..ks {
                            let iy = oy as isize + ky as isize - pad as isize;
                            let ix = ox as isize + kx as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += x.data()[((ni * h + iy as usize) * w + ix as usize) * cin + ci]
                                    * k.data()[((ky * ks + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out[((ni * oh + oy) * ow + ox) * cout + co] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_nested_loops() {
    for (pad, padding) in [(2, Padding::Same), (0, Padding::Valid)] {
        let x = rand_tensor(&[2, 7, 6, 3], 1);
        let k = rand_tensor(&[5, 5, 3, 4], 2);
        let b = rand_tensor(&[4], 3);
        let mut g = Graph::new();
        let (xv, kv, bv) = (g.constant(x.clone()), g.constant(k.clone()), g.constant(b.clone()));
        let y = g.conv2d(xv, kv, Some(bv), padding).unwrap();
        let want = conv_oracle(&x, &k, b.data(), pad);
        for (a, e) in g.value(y).data().iter().zip(&want) {
            assert!((a - e).abs() < 1e-5);
        }
    }
}

#[test]
fn conv2d_identity_and_zero_kernels() {
    let x = rand_tensor(&[5, 5, 3], 4);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let mut eye = Tensor::zeros(vec![1, 1, 3, 3]);
    for c in 0..3 {
        eye.data_mut()[c * 3 + c] = 1.0;
    }
    let ev = g.constant(eye);
    let y = g.conv2d(xv, ev, None, Padding::Same).unwrap();
    assert_eq!(g.value(y), &x);
    let zk = g.constant(Tensor::zeros(vec![3, 3, 3, 2]));
    let zb = g.constant(Tensor::zeros(vec![2]));
    let z = g.conv2d(xv, zk, Some(zb), Padding::Same).unwrap();
    assert!(g.value(z).data().iter().all(|&v| v == 0.0));
    let even = g.constant(Tensor::zeros(vec![2, 2, 3, 1]));
    assert!(g.conv2d(xv, even, None, Padding::Same).is_err());
    let wrong_cin = g.constant(Tensor::zeros(vec![3, 3, 2, 1]));
    assert!(g.conv2d(xv, wrong_cin, None, Padding::Same).is_err());
}

#[test]
fn dense_examples() {
    let x = rand_tensor(&[4], 5);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let mut eye = Tensor::zeros(vec![4, 4]);
    (0..4).for_each(|i| eye.data_mut()[i * 5] = 1.0);
    let ev = g.constant(eye);
    let zb = g.constant(Tensor::zeros(vec![4]));
    let y = g.dense(xv, ev, Some(zb)).unwrap();
    assert_eq!(g.value(y), &x);

    let zero = g.constant(Tensor::zeros(vec![4]));
    let w = g.constant(rand_tensor(&[3, 4], 6));
    let b = g.constant(rand_tensor(&[3], 7));
    let y = g.dense(zero, w, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), g.value(b).data());

    let xb = rand_tensor(&[5, 4], 8);
    let wt = rand_tensor(&[3, 4], 9);
    let xv = g.constant(xb.clone());
    let wv = g.constant(wt.clone());
    let y = g.dense(xv, wv, None).unwrap();
    for r in 0..5 {
        for o in 0..3 {
            let dot: f64 = (0..4).map(|i| xb.data()[r * 4 + i] * wt.data()[o * 4 + i]).sum();
            assert!((g.value(y).data()[r * 3 + o] - dot).abs() < 1e-6);
        }
    }
    let bad = g.constant(Tensor::zeros(vec![3, 5]));
    assert!(g.dense(xv, bad, None).is_err());
}

#[test]
fn relu_sigmoid_softmax_values() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 3.0]).unwrap());
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), &[0.0, 0.0, 3.0]);
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).data()[1], 0.5);
    let v = rand_tensor(&[50], 10);
    let neg = v.map(|a| -a);
    let (a, b) = (g.constant(v.clone()), g.constant(neg));
    let (sa, sb) = (g.sigmoid(a), g.sigmoid(b));
    for ((p, q), x) in g.value(sa).data().iter().zip(g.value(sb).data()).zip(v.data()) {
        assert!((p + q - 1.0).abs() < 1e-12);
        assert!((p - 1.0 / (1.0 + (-x).exp())).abs() < 1e-7);
    }

    let u = g.constant(Tensor::full(vec![4], 2.5));
    let su = g.softmax(u).unwrap();
    assert!(g.value(su).data().iter().all(|&p| (p - 0.25).abs() < 1e-12));
    let big = g.constant(Tensor::new(vec![4], vec![1e4, -1e4, 0.0, 1e4]).unwrap());
    let sb = g.softmax(big).unwrap();
    assert!(g.value(sb).data().iter().all(|p| p.is_finite()));
    assert!((g.value(sb).data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = g.relu(x);
    let s = g.sum(r);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn max_pool_shapes_and_routing() {
    let mut g = Graph::new();
    let x = g.param(rand_tensor(&[19, 19, 2], 11));
    let p = g.max_pool2d(x).unwrap();
    assert_eq!(g.shape(p), &[9, 9, 2]);
    let c = g.param(Tensor::full(vec![4, 4, 1], 3.0));
    let pc = g.max_pool2d(c).unwrap();
    assert!(g.value(pc).data().iter().all(|&v| v == 3.0));
    // Ties route to the first element of each window.
    let s = g.sum(pc);
    g.backward(s).unwrap();
    let gc = g.grad(c);
    for y in 0..4 {
        for xx in 0..4 {
            let want = if y % 2 == 0 && xx % 2 == 0 { 1.0 } else { 0.0 };
            assert_eq!(gc.data()[y * 4 + xx], want);
        }
    }
}

#[test]
fn spatial_and_channel_pools() {
    let mut g = Graph::<f64>::new();
    let c = g.constant(Tensor::full(vec![3, 4, 2], 1.5));
    let (a, m) = (g.global_avg_spatial(c).unwrap(), g.global_max_spatial(c).unwrap());
    assert!(g.value(a).data().iter().all(|&v| (v - 1.5).abs() < 1e-12));
    assert_eq!(g.value(m).data(), &[1.5, 1.5]);

    let mut spike = Tensor::zeros(vec![3, 4, 1]);
    spike.data_mut()[5] = 6.0;
    let s = g.constant(spike);
    let (a, m) = (g.global_avg_spatial(s).unwrap(), g.global_max_spatial(s).unwrap());
    assert!((g.value(a).item() - 0.5).abs() < 1e-12);
    assert_eq!(g.value(m).item(), 6.0);

    let x = rand_tensor(&[2, 3, 4, 5], 12);
    let xv = g.constant(x.clone());
    let (ca, cm) = (g.avg_over_channels(xv).unwrap(), g.max_over_channels(xv).unwrap());
    assert_eq!(g.shape(ca), &[2, 3, 4, 1]);
    for (p, row) in x.data().chunks(5).enumerate() {
        let mean = row.iter().sum::<f64>() / 5.0;
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        assert!((g.value(ca).data()[p] - mean).abs() < 1e-12);
        assert_eq!(g.value(cm).data()[p], max);
    }
    let one = g.constant(rand_tensor(&[3, 3, 1], 13));
    let (oa, om) = (g.avg_over_channels(one).unwrap(), g.max_over_channels(one).unwrap());
    assert_eq!(g.value(oa), g.value(one));
    assert_eq!(g.value(om), g.value(one));
}

#[test]
fn backward_sum_and_product() {
    let mut g = Graph::new();
    let x = g.param(rand_tensor(&[6], 14));
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert!(g.grad(x).data().iter().all(|&v| v == 1.0));

    let mut g = Graph::new();
    let (xt, yt) = (rand_tensor(&[6], 15), rand_tensor(&[6], 16));
    let (x, y) = (g.param(xt), g.param(yt.clone()));
    let p = g.mul(x, y).unwrap();
    let s = g.sum(p);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).data(), yt.data());
}

#[test]
fn shared_subexpressions_accumulate() {
    let x = rand_tensor(&[2, 5, 5, 3], 17);
    let k = rand_tensor(&[3, 3, 3, 2], 18);
    let grads = |twice: bool| {
        let mut g = Graph::new();
        let (xv, kv) = (g.constant(x.clone()), g.param(k.clone()));
        let y = g.conv2d(xv, kv, None, Padding::Same).unwrap();
        let t = g.tanh(y);
        let out = if twice { g.add(t, t).unwrap() } else { t };
        let s = g.sum(out);
        g.backward(s).unwrap();
        g.grad(kv)
    };
    let (one, two) = (grads(false), grads(true));
    for (a, b) in one.data().iter().zip(two.data()) {
        assert!((2.0 * a - b).abs() < 1e-12);
    }
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::new();
    let x = g.param(rand_tensor(&[3], 19));
    assert!(g.backward(x).is_err());
}

#[test]
fn quadratic_bowl_gradient_check() {
    let params = store(&[("x", rand_tensor(&[10], 20))]);
    let report = grad_check(
        &params,
        |g, v| {
            let sq = g.mul(v["x"], v["x"])?;
            Ok(g.sum(sq))
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert_eq!(report.checked, 10);
    assert!(report.max_rel_error < 1e-8, "{report:?}");
}

#[test]
fn relu_kink_is_skipped() {
    let params = store(&[("x", Tensor::new(vec![3], vec![0.0, 0.5, -0.5]).unwrap())]);
    let report = grad_check(
        &params,
        |g, v| {
            let r = g.relu(v["x"]);
            Ok(g.sum(r))
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert_eq!(report.skipped_kinks, 1);
    assert_eq!(report.checked, 2);
    assert!(report.max_rel_error < 1e-10);
}

#[test]
fn gradcheck_conv_dense_pool() {
    let params = store(&[
        ("x", rand_tensor(&[2, 6, 5, 3], 21)),
        ("k", rand_tensor(&[3, 3, 3, 4], 22)),
        ("b", rand_tensor(&[4], 23)),
        ("w", rand_tensor(&[5, 24], 24)),
        ("c", rand_tensor(&[5], 25)),
    ]);
    check(&params, |g, v| {
        let y = g.conv2d(v["x"], v["k"], Some(v["b"]), Padding::Same)?;
        let p = g.max_pool2d(y)?;
        let f = g.reshape(p, vec![2, 24])?;
        g.dense(f, v["w"], Some(v["c"]))
    });
    check(&params, |g, v| g.conv2d(v["x"], v["k"], None, Padding::Valid));
}

#[test]
fn gradcheck_elementwise_and_pools() {
    let params = store(&[("x", rand_tensor(&[2, 4, 3, 5], 26)), ("y", rand_tensor(&[2, 4, 3, 5], 27))]);
    check(&params, |g, v| g.mul(v["x"], v["y"]));
    check(&params, |g, v| g.add(v["x"], v["y"]));
    check(&params, |g, v| Ok(g.sigmoid(v["x"])));
    check(&params, |g, v| Ok(g.tanh(v["x"])));
    check(&params, |g, v| Ok(g.relu(v["x"])));
    check(&params, |g, v| g.global_avg_spatial(v["x"]));
    check(&params, |g, v| g.global_max_spatial(v["x"]));
    check(&params, |g, v| g.avg_over_channels(v["x"]));
    check(&params, |g, v| g.max_over_channels(v["x"]));
    check(&params, |g, v| g.concat_last(&[v["x"], v["y"], v["x"]]));
    check(&params, |g, v| g.slice_last(v["x"], 1, 3));
    check(&params, |g, v| {
        let m = g.mean(v["x"]);
        let s = g.sum(v["y"]);
        let t = g.mul(m, s)?;
        g.reshape(t, vec![1])
    });
}

#[test]
fn gradcheck_attention_broadcasts() {
    let params = store(&[
        ("v", rand_tensor(&[2, 4, 3, 5], 28)),
        ("a", rand_tensor(&[2, 5], 29)),
        ("s", rand_tensor(&[2, 4, 3, 1], 30)),
    ]);
    check(&params, |g, v| g.scale_channels(v["v"], v["a"]));
    check(&params, |g, v| g.scale_spatial(v["v"], v["s"]));
}

#[test]
fn gradcheck_sequence_ops() {
    let params = store(&[
        ("x", rand_tensor(&[6, 4], 31)),
        ("a", rand_tensor(&[2, 3], 32)),
        ("p", rand_tensor(&[3, 4], 33)),
    ]);
    check(&params, |g, v| g.gather_rows(v["x"], &[5, 0, 0, 3]));
    check(&params, |g, v| {
        let r0 = g.gather_rows(v["x"], &[0, 1])?;
        let r1 = g.gather_rows(v["x"], &[2, 3])?;
        let r2 = g.gather_rows(v["x"], &[4, 5])?;
        g.stack_time(&[r0, r1, r2])
    });
    check(&params, |g, v| g.softmax(v["a"]));
    check(&params, |g, v| {
        let y = g.reshape(v["x"], vec![2, 3, 4])?;
        let a = g.softmax(v["a"])?;
        g.attend(a, y)
    });
    check(&params, |g, v| {
        let p = g.softmax(v["p"])?;
        let l = g.nll(p, &[0, 3, 1], 1e-12)?;
        g.reshape(l, vec![1])
    });
    check(&params, |g, v| {
        let s = g.select(v["x"], 7)?;
        g.reshape(s, vec![1])
    });
}

#[test]
fn nll_gradient_is_softmax_minus_onehot() {
    let logits = rand_tensor(&[1, 3], 34);
    let mut g = Graph::new();
    let z = g.param(logits);
    let p = g.softmax(z).unwrap();
    let l = g.nll(p, &[2], 1e-12).unwrap();
    g.backward(l).unwrap();
    let probs = g.value(p).data().to_vec();
    for (i, (gz, pi)) in g.grad(z).data().iter().zip(&probs).enumerate() {
        let want = pi - if i == 2 { 1.0 } else { 0.0 };
        assert!((gz - want).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut ps = ParamStore::<f32>::new();
    ps.init("a.kernel", vec![3, 3, 2, 4], Init::HeUniform { fan_in: 18 }, &mut rng).unwrap();
    ps.init("b.bias", vec![8], Init::LstmBias { units: 2, forget: 1.0 }, &mut rng).unwrap();
    ps.get_mut("b.bias").unwrap().data_mut()[0] = f32::from_bits(0x7f7f_ffff);
    let mut ck = Checkpoint::new(serde_json::json!({"note": "x"}));
    ck.add_params("p.", &ps);
    let bytes = ck.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let restored: ParamStore<f32> = back.params("p.").unwrap();
    for (name, p) in ps.iter() {
        let r = restored.param(name).unwrap();
        assert_eq!(r.init, p.init);
        let same = r.value.data().iter().zip(p.value.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "{name}");
    }
    assert!(Checkpoint::from_bytes(&bytes[..20]).is_err());
}

#[test]
fn lstm_bias_init_sets_forget_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ps = ParamStore::<f64>::new();
    ps.init("b", vec![12], Init::LstmBias { units: 3, forget: 1.0 }, &mut rng).unwrap();
    assert_eq!(
        ps.get("b").unwrap().data(),
        &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    );
    assert!(ps.init("b", vec![1], Init::Zeros, &mut rng).is_err());
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant(
        xs in proptest::collection::vec(-50.0f64..50.0, 1..12),
        c in -100.0f64..100.0,
    ) {
        let n = xs.len();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![n], xs.clone()).unwrap());
        let xs2: Vec<f64> = xs.iter().map(|v| v + c).collect();
        let y = g.constant(Tensor::new(vec![n], xs2).unwrap());
        let (sx, sy) = (g.softmax(x).unwrap(), g.softmax(y).unwrap());
        prop_assert!((g.value(sx).data().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (a, b) in g.value(sx).data().iter().zip(g.value(sy).data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_ops_are_deterministic(seed in 0u64..500) {
        let run = || {
            let mut g = Graph::<f32>::new();
            let x = g.constant(rand_tensor(&[2, 5, 5, 3], seed).cast());
            let k = g.constant(rand_tensor(&[3, 3, 3, 2], seed + 1).cast());
            let y = g.conv2d(x, k, None, Padding::Same).unwrap();
            let p = g.max_pool2d(y).unwrap();
            g.value(p).clone()
        };
        prop_assert_eq!(run(), run());
    }
}
