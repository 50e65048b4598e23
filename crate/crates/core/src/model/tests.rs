use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::{grad_check, GradCheckConfig, Init, Param, ParamVars};

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn tiny_params(cfg: &ModelConfig, seed: u64) -> ParamStore<f64> {
    init_params(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_sample(cfg: &ModelConfig, seed: u64) -> Sample4D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Sample4D::zeros([cfg.grid_h, cfg.grid_w, cfg.depth, cfg.slices], (seed % 3) as u32);
    s.values.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    s
}

fn zero_params(cfg: &ModelConfig) -> ParamStore<f64> {
    let mut ps = tiny_params(cfg, 0);
    for (_, p) in ps.iter_mut() {
        p.value.data_mut().fill(0.0);
    }
    ps
}

fn set(ps: &mut ParamStore<f64>, name: &str, value: Tensor<f64>) {
    *ps.get_mut(name).unwrap() = value;
}

struct Run {
    g: Graph<f64>,
    vars: ParamVars,
    fwd: ForwardVars,
}

fn run(cfg: &ModelConfig, ps: &ParamStore<f64>, samples: &[&Sample4D]) -> Run {
    let mut g = Graph::new();
    let vars = ps.register(&mut g);
    let x = g.constant(slice_batch(cfg, samples).unwrap());
    let fwd = forward(&mut g, cfg, &vars, x).unwrap();
    Run { g, vars, fwd }
}

#[test]
fn spectral_attention_examples() {
    let mut g = Graph::<f64>::new();
    let mut per_channel = Tensor::zeros(vec![1, 4, 3, 5]);
    for (i, v) in per_channel.data_mut().iter_mut().enumerate() {
        *v = (i % 5) as f64 * 0.3 - 0.6;
    }
    let v = g.constant(per_channel);
    let w1 = g.constant(rand_tensor(&[4, 5], 1));
    let w2 = g.constant(rand_tensor(&[5, 4], 2));
    let a = spectral_attention(&mut g, v, w1, w2).unwrap();
    let c = g.global_avg_spatial(v).unwrap();
    let h = g.dense(c, w1, None).unwrap();
    let h = g.relu(h);
    let m = g.dense(h, w2, None).unwrap();
    for (&got, &mlp) in g.value(a).data().iter().zip(g.value(m).data()) {
        assert!((got - 1.0 / (1.0 + (-2.0 * mlp).exp())).abs() < 1e-12);
        assert!(got > 0.0 && got < 1.0);
    }
    let z1 = g.constant(Tensor::zeros(vec![4, 5]));
    let z2 = g.constant(Tensor::zeros(vec![5, 4]));
    let a0 = spectral_attention(&mut g, v, z1, z2).unwrap();
    assert!(g.value(a0).data().iter().all(|&x| x == 0.5));
    let halved = apply_spectral(&mut g, v, a0).unwrap();
    for (h, x) in g.value(halved).data().iter().zip(g.value(v).data()) {
        assert_eq!(*h, x / 2.0);
    }
}

#[test]
fn apply_gates_match_loops_and_never_grow() {
    let mut g = Graph::<f64>::new();
    let vt = rand_tensor(&[2, 3, 4, 5], 3);
    let v = g.constant(vt.clone());
    let gate = g.constant(rand_tensor(&[2, 5], 4).map(|x| (x + 1.0) / 2.0));
    let out = apply_spectral(&mut g, v, gate).unwrap();
    let sgate = g.constant(rand_tensor(&[2, 3, 4, 1], 5).map(|x| (x + 1.0) / 2.0));
    let sout = apply_spatial(&mut g, v, sgate).unwrap();
    for n in 0..2 {
        for p in 0..12 {
            for c in 0..5 {
                let i = (n * 12 + p) * 5 + c;
                let x = vt.data()[i];
                let a = g.value(gate).data()[n * 5 + c];
                let s = g.value(sgate).data()[n * 12 + p];
                assert_eq!(g.value(out).data()[i], x * a);
                assert_eq!(g.value(sout).data()[i], x * s);
                assert!(g.value(out).data()[i].abs() <= x.abs());
                assert!(g.value(sout).data()[i].abs() <= x.abs());
            }
        }
    }
}

#[test]
fn spatial_attention_examples() {
    let mut g = Graph::<f64>::new();
    let mut flat = Tensor::zeros(vec![1, 9, 9, 3]);
    for (i, v) in flat.data_mut().iter_mut().enumerate() {
        *v = [0.2, -1.0, 0.7][i % 3];
    }
    let v = g.constant(flat);
    let k = g.constant(rand_tensor(&[3, 3, 2, 1], 6));
    let b = g.constant(rand_tensor(&[1], 7));
    let a = spatial_attention(&mut g, v, k, b).unwrap();
    assert_eq!(g.shape(a), &[1, 9, 9, 1]);
    let av = g.value(a).data().to_vec();
    assert!(av.iter().all(|&x| x > 0.0 && x < 1.0));
    for y in 1..8 {
        for x in 1..8 {
            assert!((av[y * 9 + x] - av[4 * 9 + 4]).abs() < 1e-12);
        }
    }
    let zk = g.constant(Tensor::zeros(vec![3, 3, 2, 1]));
    let zb = g.constant(Tensor::zeros(vec![1]));
    let a0 = spatial_attention(&mut g, v, zk, zb).unwrap();
    assert!(g.value(a0).data().iter().all(|&x| x == 0.5));
}

#[test]
fn default_sized_cnn_emits_150_per_slice() {
    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), 1).unwrap();
    let s = random_sample(&cfg, 2);
    let mut g = Graph::<f32>::new();
    let vars = model.params.register(&mut g);
    let x = g.constant(slice_batch(&cfg, &[&s]).unwrap());
    let fwd = forward(&mut g, &cfg, &vars, x).unwrap();
    assert_eq!(g.shape(fwd.input), &[6, 19, 19, 10]);
    assert_eq!(g.shape(fwd.embedding), &[6, 150]);
    assert_eq!(g.shape(fwd.capture), &[6, 19, 19, 64]);
    assert_eq!(g.shape(fwd.sequence), &[1, 6, 72]);
    assert_eq!(g.shape(fwd.pooled), &[1, 72]);
    assert_eq!(g.shape(fwd.probs), &[1, 3]);
    let total: f32 = g.value(fwd.probs).data().iter().sum();
    assert!((total - 1.0).abs() < 1e-6);
}

#[test]
fn disabled_attention_ignores_its_parameters() {
    let mut cfg = ModelConfig::tiny();
    cfg.attention = AttentionFlags::NONE;
    let s = random_sample(&cfg, 3);
    let ps = tiny_params(&cfg, 4);
    let mut other = ps.clone();
    for (name, p) in other.iter_mut() {
        if name.contains("spectral") || name.contains("spatial") || name.starts_with("temporal") {
            p.value = p.value.map(|v| v * 3.0 + 0.5);
        }
    }
    let (a, b) = (run(&cfg, &ps, &[&s]), run(&cfg, &other, &[&s]));
    assert_eq!(a.g.value(a.fwd.probs), b.g.value(b.fwd.probs));
    assert_eq!(a.g.value(a.fwd.embedding), b.g.value(b.fwd.embedding));
}

#[test]
fn disabled_attention_gets_zero_gradient() {
    for flags in [
        AttentionFlags { spectral: false, ..AttentionFlags::ALL },
        AttentionFlags { spatial: false, ..AttentionFlags::ALL },
        AttentionFlags { temporal: false, ..AttentionFlags::ALL },
    ] {
        let cfg = ModelConfig { attention: flags, ..ModelConfig::tiny() };
        let ps = tiny_params(&cfg, 5);
        let s = random_sample(&cfg, 6);
        let mut r = run(&cfg, &ps, &[&s]);
        let l = loss(&mut r.g, &r.fwd, &[1]).unwrap();
        r.g.backward(l).unwrap();
        let grads = ps.gradients(&r.g, &r.vars);
        for (name, gt) in grads.iter() {
            let off = (!flags.spectral && name.contains("spectral"))
                || (!flags.spatial && name.contains("spatial"))
                || (!flags.temporal && name.starts_with("temporal"));
            let nonzero = gt.data().iter().any(|&v| v != 0.0);
            if off {
                assert!(!nonzero, "{} leaks gradient into {name}", flags.label());
            }
        }
        let conv = grads.get("cnn.conv0.kernel").unwrap();
        assert!(conv.data().iter().any(|&v| v != 0.0));
    }
}

#[test]
fn zero_input_and_biases_give_zero_conv_activations() {
    let cfg = ModelConfig::tiny();
    let mut ps = tiny_params(&cfg, 7);
    for (name, p) in ps.iter_mut() {
        if name.starts_with("cnn.conv") && name.ends_with("bias") {
            p.value.data_mut().fill(0.0);
        }
    }
    let s = Sample4D::zeros([5, 5, 4, 2], 0);
    let r = run(&cfg, &ps, &[&s]);
    assert!(r.g.value(r.fwd.capture).data().iter().all(|&v| v == 0.0));
}

#[test]
fn cnn_parameters_are_shared_across_slices() {
    let cfg = ModelConfig::tiny();
    let ps = tiny_params(&cfg, 8);
    assert_eq!(ps.names().filter(|n| n.starts_with("cnn.conv0.kernel")).count(), 1);
    let s = random_sample(&cfg, 9);
    let base = run(&cfg, &ps, &[&s]);
    let mut bumped = ps.clone();
    bumped.get_mut("cnn.conv0.kernel").unwrap().data_mut()[0] += 0.25;
    let moved = run(&cfg, &bumped, &[&s]);
    let (a, b) = (base.g.value(base.fwd.embedding), moved.g.value(moved.fwd.embedding));
    for t in 0..cfg.slices {
        let row = |x: &Tensor<f64>| x.data()[t * cfg.fc_units..(t + 1) * cfg.fc_units].to_vec();
        assert_ne!(row(a), row(b), "slice {t} unaffected");
    }
}

fn lstm_store(u: usize, input: usize, seed: u64) -> ParamStore<f64> {
    let mut ps = ParamStore::new();
    for (name, shape) in [("w_ih", vec![4 * u, input]), ("w_hh", vec![4 * u, u]), ("b", vec![4 * u])] {
        ps.insert(name, Param { value: rand_tensor(&shape, seed + name.len() as u64), init: Init::Zeros }).unwrap();
    }
    ps
}

#[test]
fn lstm_step_zero_weights_and_saturated_forget() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(rand_tensor(&[2, 3], 10));
    let h0 = g.constant(rand_tensor(&[2, 4], 11));
    let c0 = g.constant(rand_tensor(&[2, 4], 12));
    let zero_ih = g.constant(Tensor::zeros(vec![16, 3]));
    let zero_hh = g.constant(Tensor::zeros(vec![16, 4]));
    let zero_b = g.constant(Tensor::zeros(vec![16]));
    let zh = g.constant(Tensor::zeros(vec![2, 4]));
    let (h, c) = lstm_step(&mut g, x, zh, zh, zero_ih, zero_hh, zero_b, 4).unwrap();
    assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    assert!(g.value(c).data().iter().all(|&v| v == 0.0));

    let mut bias = vec![0.0; 16];
    bias[..4].fill(-60.0);
    bias[4..8].fill(60.0);
    bias[12..].fill(2.0);
    let b = g.constant(Tensor::new(vec![16], bias).unwrap());
    let (h, c) = lstm_step(&mut g, x, h0, c0, zero_ih, zero_hh, b, 4).unwrap();
    let o = 1.0 / (1.0 + (-2.0f64).exp());
    for ((&hv, &cv), &cp) in g.value(h).data().iter().zip(g.value(c).data()).zip(g.value(c0).data()) {
        assert!((cv - cp).abs() < 1e-12);
        assert!((hv - o * cp.tanh()).abs() < 1e-12);
    }
}

#[test]
fn lstm_step_gradient_check() {
    let mut ps = lstm_store(3, 5, 13);
    for (name, t) in [("x", rand_tensor(&[2, 5], 14)), ("h", rand_tensor(&[2, 3], 15)), ("c", rand_tensor(&[2, 3], 16))] {
        ps.insert(name, Param { value: t, init: Init::Zeros }).unwrap();
    }
    let probe = rand_tensor(&[2, 3], 17);
    let report = grad_check(
        &ps,
        |g, v| {
            let (h, c) = lstm_step(g, v["x"], v["h"], v["c"], v["w_ih"], v["w_hh"], v["b"], 3)?;
            let hc = g.mul(h, c)?;
            let w = g.constant(probe.clone());
            let s = g.mul(hc, w)?;
            Ok(g.sum(s))
        },
        &GradCheckConfig { h: 1e-5, samples_per_tensor: 30, seed: 1 },
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn bilstm_shapes_zero_params_and_time_reversal() {
    let cfg = ModelConfig { slices: 4, lstm_units: 3, fc_units: 5, ..ModelConfig::tiny() };
    let zero = zero_params(&cfg);
    let mut g = Graph::<f64>::new();
    let vars = zero.register(&mut g);
    let e = g.constant(rand_tensor(&[8, 5], 18));
    let y = bilstm_forward(&mut g, &cfg, &vars, e).unwrap();
    assert_eq!(g.shape(y), &[2, 4, 6]);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));

    let mut tied = tiny_params(&cfg, 19);
    for part in ["w_ih", "w_hh", "bias"] {
        let fwd = tied.get(&format!("lstm.fwd.{part}")).unwrap().clone();
        set(&mut tied, &format!("lstm.bwd.{part}"), fwd);
    }
    let seq = rand_tensor(&[4, 5], 20);
    let mut rev = seq.clone();
    for t in 0..4 {
        rev.data_mut()[t * 5..(t + 1) * 5].copy_from_slice(&seq.data()[(3 - t) * 5..(4 - t) * 5]);
    }
    let mut g = Graph::<f64>::new();
    let vars = tied.register(&mut g);
    let (a, b) = (g.constant(seq), g.constant(rev));
    let (ya, yb) = (bilstm_forward(&mut g, &cfg, &vars, a).unwrap(), bilstm_forward(&mut g, &cfg, &vars, b).unwrap());
    let (ya, yb) = (g.value(ya).data(), g.value(yb).data());
    for i in 0..4 {
        let j = 3 - i;
        for k in 0..3 {
            assert!((yb[i * 6 + k] - ya[j * 6 + 3 + k]).abs() < 1e-12);
            assert!((yb[i * 6 + 3 + k] - ya[j * 6 + k]).abs() < 1e-12);
        }
    }
}

#[test]
fn temporal_attention_examples() {
    let cfg = ModelConfig::tiny();
    let mut ps = tiny_params(&cfg, 21);
    let mut g = Graph::<f64>::new();
    let vars = ps.register(&mut g);
    let row = rand_tensor(&[8], 22);
    let same = Tensor::from_fn(vec![1, 6, 8], |i| row.data()[i % 8]);
    let y = g.constant(same);
    let a = temporal_attention(&mut g, &vars, y).unwrap();
    assert!(g.value(a).data().iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-12));

    let y = g.constant(rand_tensor(&[3, 6, 8], 23));
    let a = temporal_attention(&mut g, &vars, y).unwrap();
    for r in g.value(a).data().chunks(6) {
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    let before = g.value(a).clone();
    ps.get_mut("temporal.b2").unwrap().data_mut()[0] += 7.5;
    let mut g2 = Graph::<f64>::new();
    let vars2 = ps.register(&mut g2);
    let y2 = g2.constant(g.value(y).clone());
    let a2 = temporal_attention(&mut g2, &vars2, y2).unwrap();
    for (p, q) in before.data().iter().zip(g2.value(a2).data()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn aggregate_examples() {
    let mut g = Graph::<f64>::new();
    let yt = rand_tensor(&[1, 6, 5], 24);
    let y = g.constant(yt.clone());
    let mut onehot = vec![0.0; 6];
    onehot[2] = 1.0;
    let a = g.constant(Tensor::new(vec![1, 6], onehot).unwrap());
    let l = aggregate(&mut g, y, a).unwrap();
    assert_eq!(g.value(l).data(), &yt.data()[10..15]);

    let u = uniform_weights(&mut g, 1, 6);
    let m = aggregate(&mut g, y, u).unwrap();
    let w = g.constant(rand_tensor(&[1, 6], 25));
    let w = g.softmax(w).unwrap();
    let cvx = aggregate(&mut g, y, w).unwrap();
    for e in 0..5 {
        let col: Vec<f64> = (0..6).map(|t| yt.data()[t * 5 + e]).collect();
        let mean = col.iter().sum::<f64>() / 6.0;
        assert!((g.value(m).data()[e] - mean).abs() < 1e-12);
        let v = g.value(cvx).data()[e];
        assert!(col.iter().cloned().fold(f64::MAX, f64::min) <= v + 1e-12);
        assert!(v <= col.iter().cloned().fold(f64::MIN, f64::max) + 1e-12);
    }
}

#[test]
fn classify_examples() {
    let cfg = ModelConfig::tiny();
    let zero = zero_params(&cfg);
    let mut g = Graph::<f64>::new();
    let vars = zero.register(&mut g);
    let l = g.constant(rand_tensor(&[2, 8], 26));
    let (_, p) = classify(&mut g, &vars, l).unwrap();
    assert!(g.value(p).data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));

    let ps = tiny_params(&cfg, 27);
    let mut g = Graph::<f64>::new();
    let vars = ps.register(&mut g);
    let l = g.constant(rand_tensor(&[2, 8], 28));
    let (_, p) = classify(&mut g, &vars, l).unwrap();
    assert_eq!(g.shape(p), &[2, 3]);
    for r in g.value(p).data().chunks(3) {
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn temporal_flag_off_averages_rows() {
    let cfg = ModelConfig { attention: AttentionFlags { temporal: false, ..AttentionFlags::ALL }, ..ModelConfig::tiny() };
    let ps = tiny_params(&cfg, 29);
    let s = random_sample(&cfg, 30);
    let r = run(&cfg, &ps, &[&s]);
    let y = r.g.value(r.fwd.sequence).data();
    let l = r.g.value(r.fwd.pooled).data();
    for e in 0..8 {
        let mean = (y[e] + y[8 + e]) / 2.0;
        assert!((l[e] - mean).abs() < 1e-12);
    }
}

#[test]
fn forward_is_bit_deterministic_and_batch_independent() {
    let cfg = ModelConfig::tiny();
    let model = Model::new(cfg.clone(), 31).unwrap();
    let (s1, s2) = (random_sample(&cfg, 32), random_sample(&cfg, 33));
    let a = model.predict(&[&s1, &s2]).unwrap();
    let b = model.predict(&[&s1, &s2]).unwrap();
    assert_eq!(a, b);
    let single = model.predict(&[&s2]).unwrap();
    for (x, y) in single[0].iter().zip(&a[1]) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn inspect_reports_gates_in_range() {
    let cfg = ModelConfig::tiny();
    let model = Model::new(cfg.clone(), 34).unwrap();
    let (p, maps) = model.inspect(&random_sample(&cfg, 35)).unwrap();
    assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    assert_eq!(maps.spectral.len(), 4);
    for m in maps.spectral.iter().chain(&maps.spatial) {
        assert!(m.as_ref().unwrap().data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
    assert_eq!(maps.temporal.shape(), &[1, 2]);
}

#[test]
fn end_to_end_gradient_check_tiny() {
    let cfg = ModelConfig::tiny();
    let ps = tiny_params(&cfg, 36);
    let samples: Vec<Sample4D> = (0..2).map(|i| random_sample(&cfg, 40 + i)).collect();
    let refs: Vec<&Sample4D> = samples.iter().collect();
    let input = slice_batch::<f64>(&cfg, &refs).unwrap();
    let report = grad_check(
        &ps,
        |g, v| {
            let x = g.constant(input.clone());
            let fwd = forward(g, &cfg, v, x)?;
            loss(g, &fwd, &[0, 2])
        },
        &GradCheckConfig { h: 1e-5, samples_per_tensor: 8, seed: 2 },
    )
    .unwrap();
    assert!(report.checked > 100, "{report:?}");
    assert!(report.max_rel_error <= 1e-4, "{report:?}");
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut model = Model::new(ModelConfig::tiny(), 37).unwrap();
    model.features = FeatureMode::De;
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, model);
    let mut wrong = model.to_checkpoint().unwrap();
    wrong.tensors.remove("model.classifier.bias");
    assert!(Model::from_checkpoint(&wrong).is_err());
}

