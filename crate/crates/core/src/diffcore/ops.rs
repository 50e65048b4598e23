//! Forward semantics of every differentiable operation. Adjoints live in
//! `graph.rs`.

use crate::diffcore::graph::Op;
use crate::diffcore::kernels::{self, first_argmax, nhwc, ConvGeom};
use crate::diffcore::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

/// Spatial padding mode of [`Graph::conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding that keeps the spatial size.
    Same,
    /// No padding; output shrinks by `k - 1`.
    Valid,
}

fn same_shape(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

fn last_dim(shape: &[usize], what: &str) -> Result<usize> {
    shape
        .last()
        .copied()
        .ok_or_else(|| Error::shape(format!("{what}: scalar input")))
}

impl<F: Real> Graph<F> {
    fn unary(&mut self, x: Var, op: Op, f: impl Fn(F) -> F) -> Var {
        let out = self.value(x).map(f);
        self.push(out, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.shape(a), self.shape(b), "add")?;
        let out = Tensor::new(
            self.shape(a).to_vec(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(&x, &y)| x + y)
                .collect(),
        )?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Element-wise product of same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.shape(a), self.shape(b), "mul")?;
        let out = Tensor::new(
            self.shape(a).to_vec(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(&x, &y)| x * y)
                .collect(),
        )?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        if self.tracking() {
            let masks: Vec<u64> = self
                .value(x)
                .data()
                .chunks(64)
                .map(|c| c.iter().fold(0u64, |m, &v| m << 1 | (v > F::zero()) as u64))
                .collect();
            masks.into_iter().for_each(|m| self.mix(m));
        }
        self.unary(x, Op::Relu(x), |v| if v > F::zero() { v } else { F::zero() })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), |v| v.tanh())
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: F = t.data().iter().copied().sum();
        let m = s / F::of(t.len() as f64);
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    /// Affine map `W x + b` for `x` of shape `[n]` or `[N, n]` and `W: [m, n]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (batch, n) = match *xs.as_slice() {
            [n] => (1, n),
            [b, n] => (b, n),
            _ => return Err(Error::shape(format!("dense: input must be rank 1 or 2, got {xs:?}"))),
        };
        let [m, wn] = *ws.as_slice() else {
            return Err(Error::shape(format!("dense: weight must be [m, n], got {ws:?}")));
        };
        if wn != n {
            return Err(Error::shape(format!("dense: weight {ws:?} against input {xs:?}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(Error::shape(format!(
                    "dense: bias {:?} for {m} outputs",
                    self.shape(b)
                )));
            }
        }
        let mut out = vec![F::zero(); batch * m];
        kernels::matmul(
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            &mut out,
            batch,
            n,
            m,
            false,
        );
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(m) {
                for (o, &bi) in row.iter_mut().zip(bv) {
                    *o += bi;
                }
            }
        }
        let shape = if xs.len() == 1 { vec![m] } else { vec![batch, m] };
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(Tensor::new(shape, out)?, Op::Dense { x, w, b }, &parents))
    }

    /// Stride-1 cross-correlation of `x: [N, H, W, Cin]` (or `[H, W, Cin]`)
    /// with `kernel: [k, k, Cin, Cout]`; `k` must be odd.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, padding: Padding) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (n, h, w, cin) = nhwc(&xs)?;
        let ks = self.shape(kernel).to_vec();
        let [k, k2, kin, cout] = *ks.as_slice() else {
            return Err(Error::shape(format!("conv2d: kernel must be [k, k, Cin, Cout], got {ks:?}")));
        };
        if k != k2 || k % 2 == 0 {
            return Err(Error::shape(format!("conv2d: kernel must be square with odd size, got {ks:?}")));
        }
        if kin != cin {
            return Err(Error::shape(format!("conv2d: kernel {ks:?} against input {xs:?}")));
        }
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(Error::shape(format!("conv2d: bias {:?} for {cout} maps", self.shape(b))));
            }
        }
        let (pad, oh, ow) = match padding {
            Padding::Same => (k / 2, h, w),
            Padding::Valid => {
                if h < k || w < k {
                    return Err(Error::shape(format!("conv2d: {k}x{k} valid kernel on {h}x{w} input")));
                }
                (0, h - k + 1, w - k + 1)
            }
        };
        let geom = ConvGeom { n, h, w, cin, k, pad, oh, ow, cout };
        let mut out = vec![F::zero(); n * oh * ow * cout];
        kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
            &mut out,
        );
        let shape = if xs.len() == 3 { vec![oh, ow, cout] } else { vec![n, oh, ow, cout] };
        let parents: Vec<Var> = [Some(x), Some(kernel), bias].into_iter().flatten().collect();
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Conv2d { x, w: kernel, b: bias, geom },
            &parents,
        ))
    }

    fn routed(&mut self, x: Var, shape: Vec<usize>, argmax: Vec<usize>) -> Result<Var> {
        if self.tracking() {
            for &i in &argmax {
                self.mix(i as u64);
            }
        }
        let xv = self.value(x).data();
        let out = argmax.iter().map(|&i| xv[i]).collect();
        Ok(self.push(Tensor::new(shape, out)?, Op::Route { x, argmax }, &[x]))
    }

    /// 2×2 max pooling with stride 2; a trailing odd row/column is dropped.
    /// Ties go to the first element in row-major order.
    pub fn max_pool2d(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (n, h, w, c) = nhwc(&xs)?;
        let (oh, ow) = (h / 2, w / 2);
        let xv = self.value(x).data();
        let mut argmax = Vec::with_capacity(n * oh * ow * c);
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ci in 0..c {
                        let at = |dy: usize, dx: usize| ((ni * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ci;
                        argmax.push(first_argmax(xv, [at(0, 0), at(0, 1), at(1, 0), at(1, 1)].into_iter()));
                    }
                }
            }
        }
        let shape = if xs.len() == 3 { vec![oh, ow, c] } else { vec![n, oh, ow, c] };
        self.routed(x, shape, argmax)
    }

    /// Mean over the spatial axes: `[N, H, W, C] -> [N, C]`.
    pub fn global_avg_spatial(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (n, h, w, c) = nhwc(&xs)?;
        let xv = self.value(x).data();
        let scale = F::one() / F::of((h * w) as f64);
        let mut out = vec![F::zero(); n * c];
        for ni in 0..n {
            let o = &mut out[ni * c..(ni + 1) * c];
            for row in xv[ni * h * w * c..(ni + 1) * h * w * c].chunks(c) {
                for (d, &v) in o.iter_mut().zip(row) {
                    *d += v;
                }
            }
            o.iter_mut().for_each(|d| *d *= scale);
        }
        let shape = if xs.len() == 3 { vec![c] } else { vec![n, c] };
        Ok(self.push(Tensor::new(shape, out)?, Op::GlobalAvg(x), &[x]))
    }

    /// Maximum over the spatial axes: `[N, H, W, C] -> [N, C]`.
    pub fn global_max_spatial(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (n, h, w, c) = nhwc(&xs)?;
        let xv = self.value(x).data();
        let mut argmax = Vec::with_capacity(n * c);
        for ni in 0..n {
            for ci in 0..c {
                argmax.push(first_argmax(xv, (0..h * w).map(|p| (ni * h * w + p) * c + ci)));
            }
        }
        let shape = if xs.len() == 3 { vec![c] } else { vec![n, c] };
        self.routed(x, shape, argmax)
    }

    /// Mean over the channel axis: `[N, H, W, C] -> [N, H, W, 1]`.
    pub fn avg_over_channels(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (_, _, _, c) = nhwc(&xs)?;
        let scale = F::one() / F::of(c as f64);
        let out = self
            .value(x)
            .data()
            .chunks(c)
            .map(|row| row.iter().copied().sum::<F>() * scale)
            .collect();
        let mut shape = xs.clone();
        *shape.last_mut().expect("rank checked") = 1;
        Ok(self.push(Tensor::new(shape, out)?, Op::ChannelAvg(x), &[x]))
    }

    /// Maximum over the channel axis: `[N, H, W, C] -> [N, H, W, 1]`.
    pub fn max_over_channels(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (_, _, _, c) = nhwc(&xs)?;
        let xv = self.value(x).data();
        let argmax = (0..xv.len() / c)
            .map(|p| first_argmax(xv, p * c..(p + 1) * c))
            .collect();
        let mut shape = xs.clone();
        *shape.last_mut().expect("rank checked") = 1;
        self.routed(x, shape, argmax)
    }

    /// Concatenate along the last axis; leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_last: no inputs"))?;
        let lead = self.shape(*first)[..self.shape(*first).len().saturating_sub(1)].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::shape(format!("concat_last: {s:?} against leading axes {lead:?}")));
            }
            widths.push(*s.last().expect("nonempty"));
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &wd) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * wd..(r + 1) * wd]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(Tensor::new(shape, out)?, Op::ConcatLast(parts.to_vec()), parts))
    }

    /// `out[n, h, w, c] = v[n, h, w, c] * a[n, c]`.
    pub fn scale_channels(&mut self, v: Var, a: Var) -> Result<Var> {
        let vs = self.shape(v).to_vec();
        let (n, h, w, c) = nhwc(&vs)?;
        let want: Vec<usize> = if vs.len() == 3 { vec![c] } else { vec![n, c] };
        same_shape(self.shape(a), &want, "scale_channels gate")?;
        let av = self.value(a).data();
        let out = self
            .value(v)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * av[(i / (h * w * c)) * c + i % c])
            .collect();
        Ok(self.push(Tensor::new(vs, out)?, Op::ScaleChannels { v, a }, &[v, a]))
    }

    /// `out[n, h, w, c] = v[n, h, w, c] * a[n, h, w, 0]`.
    pub fn scale_spatial(&mut self, v: Var, a: Var) -> Result<Var> {
        let vs = self.shape(v).to_vec();
        let (_, _, _, c) = nhwc(&vs)?;
        let mut want = vs.clone();
        *want.last_mut().expect("rank checked") = 1;
        same_shape(self.shape(a), &want, "scale_spatial gate")?;
        let av = self.value(a).data();
        let out = self
            .value(v)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * av[i / c])
            .collect();
        Ok(self.push(Tensor::new(vs, out)?, Op::ScaleSpatial { v, a }, &[v, a]))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// `x[..., start..start + len]`.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let d = last_dim(&xs, "slice_last")?;
        if start + len > d {
            return Err(Error::shape(format!("slice_last: {start}..{} of axis {d}", start + len)));
        }
        let out = self
            .value(x)
            .data()
            .chunks(d)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = xs;
        *shape.last_mut().expect("rank checked") = len;
        Ok(self.push(Tensor::new(shape, out)?, Op::SliceLast { x, start }, &[x]))
    }

    /// Select rows (entries of the leading axis) in the given order.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let r = *xs.first().ok_or_else(|| Error::shape("gather_rows: scalar input"))?;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::shape(format!("gather_rows: row {bad} of {r}")));
        }
        let row_len: usize = xs[1..].iter().product();
        let xv = self.value(x).data();
        let out = rows
            .iter()
            .flat_map(|&i| xv[i * row_len..(i + 1) * row_len].iter().copied())
            .collect();
        let mut shape = xs;
        shape[0] = rows.len();
        Ok(self.push(Tensor::new(shape, out)?, Op::GatherRows { x, rows: rows.to_vec() }, &[x]))
    }

    /// Stack `T` tensors of shape `[B, D]` into `[B, T, D]`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        let first = steps.first().ok_or_else(|| Error::shape("stack_time: no inputs"))?;
        let s0 = self.shape(*first).to_vec();
        let [b, d] = *s0.as_slice() else {
            return Err(Error::shape(format!("stack_time: steps must be [B, D], got {s0:?}")));
        };
        for &s in steps {
            same_shape(self.shape(s), &s0, "stack_time")?;
        }
        let t_len = steps.len();
        let mut out = vec![F::zero(); b * t_len * d];
        for (t, &s) in steps.iter().enumerate() {
            for (bi, row) in self.value(s).data().chunks(d).enumerate() {
                out[(bi * t_len + t) * d..][..d].copy_from_slice(row);
            }
        }
        Ok(self.push(Tensor::new(vec![b, t_len, d], out)?, Op::StackTime(steps.to_vec()), steps))
    }

    /// Softmax over the last axis, computed after subtracting the row maximum.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let d = last_dim(&xs, "softmax")?;
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(d) {
            softmax_in_place(row);
        }
        Ok(self.push(Tensor::new(xs, out)?, Op::SoftmaxLast(x), &[x]))
    }

    /// Attention-weighted sum over time: `a: [B, T]`, `y: [B, T, D] -> [B, D]`
    /// (or `[T]`, `[T, D] -> [D]`).
    pub fn attend(&mut self, a: Var, y: Var) -> Result<Var> {
        let as_ = self.shape(a).to_vec();
        let ys = self.shape(y).to_vec();
        let ok = ys.len() == as_.len() + 1 && ys[..as_.len()] == as_[..] && !as_.is_empty();
        if !ok {
            return Err(Error::shape(format!("attend: weights {as_:?} against sequence {ys:?}")));
        }
        let d = ys[ys.len() - 1];
        let t_len = ys[ys.len() - 2];
        let batch = self.value(a).len() / t_len;
        let av = self.value(a).data();
        let yv = self.value(y).data();
        let mut out = vec![F::zero(); batch * d];
        for b in 0..batch {
            let o = &mut out[b * d..(b + 1) * d];
            for t in 0..t_len {
                let wt = av[b * t_len + t];
                for (dst, &v) in o.iter_mut().zip(&yv[(b * t_len + t) * d..][..d]) {
                    *dst += wt * v;
                }
            }
        }
        let shape = if as_.len() == 1 { vec![d] } else { vec![batch, d] };
        Ok(self.push(Tensor::new(shape, out)?, Op::Attend { a, y }, &[a, y]))
    }

    /// Mean negative log-likelihood of `labels` under row probabilities
    /// `p: [B, C]`, with each probability floored at `floor`.
    pub fn nll(&mut self, p: Var, labels: &[usize], floor: f64) -> Result<Var> {
        let ps = self.shape(p).to_vec();
        let [b, c] = *ps.as_slice() else {
            return Err(Error::shape(format!("nll: probabilities must be [B, C], got {ps:?}")));
        };
        if labels.len() != b || labels.iter().any(|&l| l >= c) {
            return Err(Error::shape(format!("nll: labels {labels:?} for {b}x{c} probabilities")));
        }
        let fl = F::of(floor);
        let pv = self.value(p).data();
        let floored: Vec<bool> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| pv[i * c + l] <= fl)
            .collect();
        let total: F = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -pv[i * c + l].max(fl).ln())
            .sum();
        let loss = total / F::of(b as f64);
        if self.tracking() {
            for f in floored {
                self.mix(f as u64);
            }
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Nll { p, labels: labels.to_vec(), floor },
            &[p],
        ))
    }

    /// Single element of `x` (flat row-major index) as a scalar node.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var> {
        let n = self.value(x).len();
        if index >= n {
            return Err(Error::shape(format!("select: index {index} of {n}")));
        }
        let v = self.value(x).data()[index];
        Ok(self.push(Tensor::scalar(v), Op::Select { x, index }, &[x]))
    }
}

#[inline]
pub(crate) fn sigmoid<F: Real>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

pub(crate) fn softmax_in_place<F: Real>(row: &mut [F]) {
    let m = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut s = F::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
