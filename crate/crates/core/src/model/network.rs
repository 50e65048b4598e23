//! Graph construction for the attention CNN, the bidirectional LSTM, temporal
//! attention and the classifier.

use rand::Rng;

use crate::diffcore::{Graph, Init, Padding, ParamStore, ParamVars, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::repr4d::Sample4D;

/// Draw a fresh parameter set for `cfg`.
pub fn init_params<F: Real>(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<ParamStore<F>> {
    cfg.validate()?;
    let mut ps = ParamStore::new();
    let mut cin = cfg.depth;
    for (l, (&c, &k)) in cfg.conv_channels.iter().zip(&cfg.conv_kernels).enumerate() {
        ps.init(&format!("cnn.conv{l}.kernel"), [k, k, cin, c], Init::HeUniform { fan_in: k * k * cin }, rng)?;
        ps.init(&format!("cnn.conv{l}.bias"), [c], Init::Zeros, rng)?;
        let hid = cfg.attention_hidden(c);
        let xavier = Init::XavierUniform { fan_in: c, fan_out: hid };
        ps.init(&format!("cnn.spectral{l}.w1"), [hid, c], xavier, rng)?;
        ps.init(&format!("cnn.spectral{l}.w2"), [c, hid], xavier, rng)?;
        let ks = cfg.spatial_kernel;
        let spatial = Init::XavierUniform { fan_in: ks * ks * 2, fan_out: ks * ks };
        ps.init(&format!("cnn.spatial{l}.kernel"), [ks, ks, 2, 1], spatial, rng)?;
        ps.init(&format!("cnn.spatial{l}.bias"), [1], Init::Zeros, rng)?;
        cin = c;
    }
    let flat = cfg.flat_len();
    ps.init("cnn.fc.weight", [cfg.fc_units, flat], Init::HeUniform { fan_in: flat }, rng)?;
    ps.init("cnn.fc.bias", [cfg.fc_units], Init::Zeros, rng)?;
    let u = cfg.lstm_units;
    for dir in ["fwd", "bwd"] {
        let x_init = Init::XavierUniform { fan_in: cfg.fc_units, fan_out: 4 * u };
        ps.init(&format!("lstm.{dir}.w_ih"), [4 * u, cfg.fc_units], x_init, rng)?;
        ps.init(&format!("lstm.{dir}.w_hh"), [4 * u, u], Init::XavierUniform { fan_in: u, fan_out: 4 * u }, rng)?;
        ps.init(&format!("lstm.{dir}.bias"), [4 * u], Init::LstmBias { units: u, forget: 1.0 }, rng)?;
    }
    let (y, th) = (cfg.sequence_width(), cfg.temporal_hidden);
    ps.init("temporal.w1", [th, y], Init::XavierUniform { fan_in: y, fan_out: th }, rng)?;
    ps.init("temporal.b1", [th], Init::Zeros, rng)?;
    ps.init("temporal.w2", [1, th], Init::XavierUniform { fan_in: th, fan_out: 1 }, rng)?;
    ps.init("temporal.b2", [1], Init::Zeros, rng)?;
    ps.init("classifier.weight", [cfg.classes, y], Init::XavierUniform { fan_in: y, fan_out: cfg.classes }, rng)?;
    ps.init("classifier.bias", [cfg.classes], Init::Zeros, rng)?;
    Ok(ps)
}

/// Lay out samples as `[B * slices, H, W, depth]` images; image `b * slices + t`
/// is slice `t` of sample `b`.
pub fn slice_batch<F: Real>(cfg: &ModelConfig, samples: &[&Sample4D]) -> Result<Tensor<F>> {
    let want = [cfg.grid_h, cfg.grid_w, cfg.depth, cfg.slices];
    let (t_len, d) = (cfg.slices, cfg.depth);
    let cells = cfg.grid_h * cfg.grid_w;
    let mut out = vec![F::zero(); samples.len() * t_len * cells * d];
    for (b, s) in samples.iter().enumerate() {
        if s.dims != want {
            return Err(Error::shape(format!("sample dims {:?}, model expects {want:?}", s.dims)));
        }
        for cell in 0..cells {
            for k in 0..d {
                for t in 0..t_len {
                    out[((b * t_len + t) * cells + cell) * d + k] = F::of(s.values[(cell * d + k) * t_len + t] as f64);
                }
            }
        }
    }
    Tensor::new(vec![samples.len() * t_len, cfg.grid_h, cfg.grid_w, d], out)
}

/// Channel gate `[N, C]` from pooled spatial statistics through a shared
/// bias-free bottleneck MLP.
pub fn spectral_attention<F: Real>(g: &mut Graph<F>, v: Var, w1: Var, w2: Var) -> Result<Var> {
    let avg = g.global_avg_spatial(v)?;
    let max = g.global_max_spatial(v)?;
    let mlp = |g: &mut Graph<F>, x: Var| -> Result<Var> {
        let h = g.dense(x, w1, None)?;
        let h = g.relu(h);
        g.dense(h, w2, None)
    };
    let a = mlp(g, avg)?;
    let m = mlp(g, max)?;
    let s = g.add(a, m)?;
    Ok(g.sigmoid(s))
}

pub fn apply_spectral<F: Real>(g: &mut Graph<F>, v: Var, gate: Var) -> Result<Var> {
    g.scale_channels(v, gate)
}

/// Cell gate `[N, H, W, 1]` from the channel mean and max maps.
pub fn spatial_attention<F: Real>(g: &mut Graph<F>, v: Var, kernel: Var, bias: Var) -> Result<Var> {
    let avg = g.avg_over_channels(v)?;
    let max = g.max_over_channels(v)?;
    let both = g.concat_last(&[avg, max])?;
    let s = g.conv2d(both, kernel, Some(bias), Padding::Same)?;
    Ok(g.sigmoid(s))
}

pub fn apply_spatial<F: Real>(g: &mut Graph<F>, v: Var, gate: Var) -> Result<Var> {
    g.scale_spatial(v, gate)
}

/// Per-stage attention gates, `None` where the mechanism is disabled.
#[derive(Clone, Debug, Default)]
pub struct StageGates {
    pub spectral: Vec<Option<Var>>,
    pub spatial: Vec<Option<Var>>,
}

pub struct CnnOutput {
    /// `[N, fc_units]` slice embeddings.
    pub embedding: Var,
    /// Last stage after its attention modules, before pooling.
    pub capture: Var,
    pub gates: StageGates,
}

/// Shared CNN over `[N, H, W, depth]` images.
pub fn cnn_forward<F: Real>(g: &mut Graph<F>, cfg: &ModelConfig, p: &ParamVars, x: Var) -> Result<CnnOutput> {
    let n = g.shape(x)[0];
    let mut v = x;
    let mut gates = StageGates::default();
    for l in 0..cfg.conv_channels.len() {
        let z = g.conv2d(v, p[&format!("cnn.conv{l}.kernel")], Some(p[&format!("cnn.conv{l}.bias")]), Padding::Same)?;
        v = g.relu(z);
        if cfg.attention.spectral {
            let a = spectral_attention(g, v, p[&format!("cnn.spectral{l}.w1")], p[&format!("cnn.spectral{l}.w2")])?;
            v = apply_spectral(g, v, a)?;
            gates.spectral.push(Some(a));
        } else {
            gates.spectral.push(None);
        }
        if cfg.attention.spatial {
            let a = spatial_attention(g, v, p[&format!("cnn.spatial{l}.kernel")], p[&format!("cnn.spatial{l}.bias")])?;
            v = apply_spatial(g, v, a)?;
            gates.spatial.push(Some(a));
        } else {
            gates.spatial.push(None);
        }
    }
    let capture = v;
    let pooled = g.max_pool2d(v)?;
    let flat = g.reshape(pooled, vec![n, cfg.flat_len()])?;
    let fc = g.dense(flat, p["cnn.fc.weight"], Some(p["cnn.fc.bias"]))?;
    Ok(CnnOutput { embedding: g.relu(fc), capture, gates })
}

/// One LSTM cell update from a precomputed input projection `zx = W_ih x + b`
/// (`[B, 4u]`, gate blocks ordered input, forget, cell, output):
///
/// ```text
/// z = zx + W_hh h
/// i = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
/// c' = f * c + i * g
/// h' = o * tanh(c')
/// ```
pub fn lstm_cell<F: Real>(g: &mut Graph<F>, zx: Var, h: Var, c: Var, w_hh: Var, units: usize) -> Result<(Var, Var)> {
    let zh = g.dense(h, w_hh, None)?;
    let z = g.add(zx, zh)?;
    let gate = |g: &mut Graph<F>, k: usize| g.slice_last(z, k * units, units);
    let (zi, zf, zg, zo) = (gate(g, 0)?, gate(g, 1)?, gate(g, 2)?, gate(g, 3)?);
    let (i, f, cand, o) = (g.sigmoid(zi), g.sigmoid(zf), g.tanh(zg), g.sigmoid(zo));
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// [`lstm_cell`] with the input projection computed from `x: [B, in]`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step<F: Real>(
    g: &mut Graph<F>,
    x: Var,
    h: Var,
    c: Var,
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    units: usize,
) -> Result<(Var, Var)> {
    let zx = g.dense(x, w_ih, Some(bias))?;
    lstm_cell(g, zx, h, c, w_hh, units)
}

/// Bidirectional LSTM over `[B * T, D]` slice embeddings (row `b * T + t`).
/// Returns `[B, T, 2u]`; row `t` concatenates the forward state after step
/// `t` with the backward state after it has consumed steps `T-1..=t`.
pub fn bilstm_forward<F: Real>(g: &mut Graph<F>, cfg: &ModelConfig, p: &ParamVars, embed: Var) -> Result<Var> {
    let (t_len, u) = (cfg.slices, cfg.lstm_units);
    let rows = g.shape(embed)[0];
    if !rows.is_multiple_of(t_len) {
        return Err(Error::shape(format!("{rows} embeddings for {t_len} slices")));
    }
    let b = rows / t_len;
    let run = |g: &mut Graph<F>, dir: &str, order: Vec<usize>| -> Result<Vec<Var>> {
        let zx_all = g.dense(embed, p[&format!("lstm.{dir}.w_ih")], Some(p[&format!("lstm.{dir}.bias")]))?;
        let mut h = g.constant(Tensor::zeros(vec![b, u]));
        let mut c = h;
        let mut out = vec![h; t_len];
        for t in order {
            let idx: Vec<usize> = (0..b).map(|bi| bi * t_len + t).collect();
            let zx = g.gather_rows(zx_all, &idx)?;
            (h, c) = lstm_cell(g, zx, h, c, p[&format!("lstm.{dir}.w_hh")], u)?;
            out[t] = h;
        }
        Ok(out)
    };
    let fwd = run(g, "fwd", (0..t_len).collect())?;
    let bwd = run(g, "bwd", (0..t_len).rev().collect())?;
    let steps = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &r)| g.concat_last(&[f, r]))
        .collect::<Result<Vec<_>>>()?;
    g.stack_time(&steps)
}

/// Softmax weights `[B, T]` over the sequence rows of `y: [B, T, D]`.
pub fn temporal_attention<F: Real>(g: &mut Graph<F>, p: &ParamVars, y: Var) -> Result<Var> {
    let [b, t, d] = *g.shape(y) else {
        return Err(Error::shape("temporal attention expects [B, T, D]"));
    };
    let rows = g.reshape(y, vec![b * t, d])?;
    let h = g.dense(rows, p["temporal.w1"], Some(p["temporal.b1"]))?;
    let h = g.relu(h);
    let score = g.dense(h, p["temporal.w2"], Some(p["temporal.b2"]))?;
    let score = g.reshape(score, vec![b, t])?;
    g.softmax(score)
}

/// Uniform weights `[B, T]` used when temporal attention is disabled.
pub fn uniform_weights<F: Real>(g: &mut Graph<F>, b: usize, t: usize) -> Var {
    g.constant(Tensor::full(vec![b, t], F::one() / F::of(t as f64)))
}

pub fn aggregate<F: Real>(g: &mut Graph<F>, y: Var, weights: Var) -> Result<Var> {
    g.attend(weights, y)
}

/// Returns `(logits, probabilities)`, each `[B, classes]`.
pub fn classify<F: Real>(g: &mut Graph<F>, p: &ParamVars, pooled: Var) -> Result<(Var, Var)> {
    let logits = g.dense(pooled, p["classifier.weight"], Some(p["classifier.bias"]))?;
    let probs = g.softmax(logits)?;
    Ok((logits, probs))
}

/// Handles to every intermediate of one forward pass.
pub struct ForwardVars {
    pub input: Var,
    /// `[B * T, fc_units]`.
    pub embedding: Var,
    /// `[B * T, H, W, C_last]`.
    pub capture: Var,
    pub gates: StageGates,
    /// `[B, T, 2u]`.
    pub sequence: Var,
    /// `[B, T]`.
    pub temporal: Var,
    /// `[B, 2u]`.
    pub pooled: Var,
    pub logits: Var,
    pub probs: Var,
}

/// Full network on a prepared `[B * T, H, W, depth]` input node.
pub fn forward<F: Real>(g: &mut Graph<F>, cfg: &ModelConfig, p: &ParamVars, input: Var) -> Result<ForwardVars> {
    let cnn = cnn_forward(g, cfg, p, input)?;
    let sequence = bilstm_forward(g, cfg, p, cnn.embedding)?;
    let b = g.shape(sequence)[0];
    let temporal = if cfg.attention.temporal {
        temporal_attention(g, p, sequence)?
    } else {
        uniform_weights(g, b, cfg.slices)
    };
    let pooled = aggregate(g, sequence, temporal)?;
    let (logits, probs) = classify(g, p, pooled)?;
    Ok(ForwardVars {
        input,
        embedding: cnn.embedding,
        capture: cnn.capture,
        gates: cnn.gates,
        sequence,
        temporal,
        pooled,
        logits,
        probs,
    })
}

/// Mean cross-entropy of `labels` under the forward pass's probabilities.
pub fn loss<F: Real>(g: &mut Graph<F>, fwd: &ForwardVars, labels: &[usize]) -> Result<Var> {
    g.nll(fwd.probs, labels, PROB_FLOOR)
}

/// Probability floor inside the log of the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;
