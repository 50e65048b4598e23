use crate::diffcore::kernels;
use crate::diffcore::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: kernels::ConvGeom,
    },
    /// Gradient routed to a recorded source index per output element.
    Route {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvg(Var),
    ChannelAvg(Var),
    ConcatLast(Vec<Var>),
    ScaleChannels {
        v: Var,
        a: Var,
    },
    ScaleSpatial {
        v: Var,
        a: Var,
    },
    Reshape(Var),
    SliceLast {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
    StackTime(Vec<Var>),
    SoftmaxLast(Var),
    Attend {
        a: Var,
        y: Var,
    },
    Nll {
        p: Var,
        labels: Vec<usize>,
        floor: f64,
    },
    Select {
        x: Var,
        index: usize,
    },
}

/// Tape of tensor operations supporting reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so walking the tape backwards is a
/// reverse topological traversal.
pub struct Graph<F> {
    pub(crate) values: Vec<Tensor<F>>,
    grads: Vec<Option<Vec<F>>>,
    pub(crate) ops: Vec<Op>,
    requires: Vec<bool>,
    pattern: Option<u64>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            grads: Vec::new(),
            ops: Vec::new(),
            requires: Vec::new(),
            pattern: None,
        }
    }

    /// A graph that fingerprints every piecewise branch taken (relu signs,
    /// max-selection indices, probability floors). Two evaluations with equal
    /// fingerprints lie on the same smooth piece of the function.
    pub fn with_kink_tracking() -> Self {
        let mut g = Self::new();
        g.pattern = Some(0xcbf2_9ce4_8422_2325);
        g
    }

    pub fn pattern(&self) -> Option<u64> {
        self.pattern
    }

    pub(crate) fn mix(&mut self, word: u64) {
        if let Some(h) = self.pattern.as_mut() {
            *h ^= word;
            *h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn tracking(&self) -> bool {
        self.pattern.is_some()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Trainable leaf: gradients flow into it.
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Data leaf: no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub(crate) fn push(&mut self, value: Tensor<F>, op: Op, parents: &[Var]) -> Var {
        let req = parents.iter().any(|p| self.requires[p.0]);
        self.push_raw(value, op, req)
    }

    fn push_raw(&mut self, value: Tensor<F>, op: Op, requires: bool) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(op);
        self.requires.push(requires);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    /// Gradient of the last `backward` target with respect to `v`; zeros when
    /// `v` did not influence it.
    pub fn grad(&self, v: Var) -> Tensor<F> {
        let shape = self.values[v.0].shape().to_vec();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Populate gradients of the scalar `loss` with respect to every node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.values[loss.0].shape()
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            if !self.requires[i] {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.backprop(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }


    fn backprop(&mut self, i: usize, g: &[F]) {
        let Graph {
            values,
            grads,
            ops,
            requires,
            ..
        } = self;
        let values: &[Tensor<F>] = values;
        let requires: &[bool] = requires;
        macro_rules! acc {
            ($v:expr) => {
                acc(grads, requires, values, $v)
            };
        }
        match &ops[i] {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(ga) = acc!(v) {
                        add_into(ga, g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let bv = values[b.0].data();
                if let Some(ga) = acc!(*a) {
                    for ((d, &gi), &bi) in ga.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                }
                let av = values[a.0].data();
                if let Some(gb) = acc!(*b) {
                    for ((d, &gi), &ai) in gb.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Relu(x) => {
                let xv = values[x.0].data();
                if let Some(gx) = acc!(*x) {
                    for ((d, &gi), &xi) in gx.iter_mut().zip(g).zip(xv) {
                        if xi > F::zero() {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = values[i].data();
                if let Some(gx) = acc!(*x) {
                    for ((d, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (F::one() - yi);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = values[i].data();
                if let Some(gx) = acc!(*x) {
                    for ((d, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                        *d += gi * (F::one() - yi * yi);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = acc!(*x) {
                    let s = g[0] / F::of(gx.len() as f64);
                    gx.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::Dense { x, w, b } => back_dense(grads, requires, values, *x, *w, *b, g),
            Op::Conv2d { x, w, b, geom } => back_conv(grads, requires, values, *x, *w, *b, geom, g),
            Op::Route { x, argmax } => {
                if let Some(gx) = acc!(*x) {
                    for (&src, &gi) in argmax.iter().zip(g) {
                        gx[src] += gi;
                    }
                }
            }
            Op::GlobalAvg(x) => {
                let shape = values[x.0].shape().to_vec();
                let (n, h, w, c) = kernels::nhwc(&shape).expect("validated at forward");
                if let Some(gx) = acc!(*x) {
                    let scale = F::one() / F::of((h * w) as f64);
                    for ni in 0..n {
                        for p in 0..h * w {
                            let row = &mut gx[(ni * h * w + p) * c..][..c];
                            for (d, &gi) in row.iter_mut().zip(&g[ni * c..(ni + 1) * c]) {
                                *d += gi * scale;
                            }
                        }
                    }
                }
            }
            Op::ChannelAvg(x) => {
                let c = *values[x.0].shape().last().expect("rank checked");
                if let Some(gx) = acc!(*x) {
                    let scale = F::one() / F::of(c as f64);
                    for (row, &gi) in gx.chunks_mut(c).zip(g) {
                        row.iter_mut().for_each(|d| *d += gi * scale);
                    }
                }
            }
            Op::ConcatLast(parts) => {
                let widths: Vec<usize> = parts
                    .iter()
                    .map(|p| *values[p.0].shape().last().expect("rank checked"))
                    .collect();
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (p, &wd) in parts.iter().zip(&widths) {
                    if let Some(gp) = acc!(*p) {
                        for (dst, src) in gp.chunks_mut(wd).zip(g.chunks(total)) {
                            add_into(dst, &src[offset..offset + wd]);
                        }
                    }
                    offset += wd;
                }
            }
            Op::ScaleChannels { v, a } => {
                let c = *values[v.0].shape().last().expect("rank checked");
                let av = values[a.0].data();
                let vv = values[v.0].data();
                let per_image = vv.len() / av.len() * c;
                if let Some(gv) = acc!(*v) {
                    for (idx, d) in gv.iter_mut().enumerate() {
                        let n = idx / per_image;
                        *d += g[idx] * av[n * c + idx % c];
                    }
                }
                if let Some(ga) = acc!(*a) {
                    for (idx, &vi) in vv.iter().enumerate() {
                        let n = idx / per_image;
                        ga[n * c + idx % c] += g[idx] * vi;
                    }
                }
            }
            Op::ScaleSpatial { v, a } => {
                let c = *values[v.0].shape().last().expect("rank checked");
                let av = values[a.0].data();
                let vv = values[v.0].data();
                if let Some(gv) = acc!(*v) {
                    for (idx, d) in gv.iter_mut().enumerate() {
                        *d += g[idx] * av[idx / c];
                    }
                }
                if let Some(ga) = acc!(*a) {
                    for (idx, &vi) in vv.iter().enumerate() {
                        ga[idx / c] += g[idx] * vi;
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = acc!(*x) {
                    add_into(gx, g);
                }
            }
            Op::SliceLast { x, start } => {
                let d_in = *values[x.0].shape().last().expect("rank checked");
                let d_out = *values[i].shape().last().expect("rank checked");
                if let Some(gx) = acc!(*x) {
                    for (dst, src) in gx.chunks_mut(d_in).zip(g.chunks(d_out)) {
                        add_into(&mut dst[*start..*start + d_out], src);
                    }
                }
            }
            Op::GatherRows { x, rows } => {
                let row_len = if rows.is_empty() { 0 } else { g.len() / rows.len() };
                if let Some(gx) = acc!(*x) {
                    for (k, &r) in rows.iter().enumerate() {
                        add_into(
                            &mut gx[r * row_len..(r + 1) * row_len],
                            &g[k * row_len..(k + 1) * row_len],
                        );
                    }
                }
            }
            Op::StackTime(parts) => {
                let t_len = parts.len();
                let d = *values[i].shape().last().expect("rank checked");
                for (t, p) in parts.iter().enumerate() {
                    if let Some(gp) = acc!(*p) {
                        for (b, dst) in gp.chunks_mut(d).enumerate() {
                            add_into(dst, &g[(b * t_len + t) * d..][..d]);
                        }
                    }
                }
            }
            Op::SoftmaxLast(x) => {
                let y = values[i].data();
                let d = *values[i].shape().last().expect("rank checked");
                if let Some(gx) = acc!(*x) {
                    for ((dst, yr), gr) in gx.chunks_mut(d).zip(y.chunks(d)).zip(g.chunks(d)) {
                        let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for ((o, &yi), &gi) in dst.iter_mut().zip(yr).zip(gr) {
                            *o += yi * (gi - dot);
                        }
                    }
                }
            }
            Op::Attend { a, y } => {
                let ys = values[y.0].shape().to_vec();
                let (t_len, d) = (ys[ys.len() - 2], ys[ys.len() - 1]);
                let av = values[a.0].data();
                let yv = values[y.0].data();
                let batch = av.len() / t_len;
                if let Some(ga) = acc!(*a) {
                    for b in 0..batch {
                        for t in 0..t_len {
                            let yr = &yv[(b * t_len + t) * d..][..d];
                            let gr = &g[b * d..][..d];
                            ga[b * t_len + t] += yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        }
                    }
                }
                if let Some(gy) = acc!(*y) {
                    for b in 0..batch {
                        for t in 0..t_len {
                            let w = av[b * t_len + t];
                            let dst = &mut gy[(b * t_len + t) * d..][..d];
                            for (o, &gi) in dst.iter_mut().zip(&g[b * d..][..d]) {
                                *o += w * gi;
                            }
                        }
                    }
                }
            }
            Op::Nll { p, labels, floor } => {
                let pv = values[p.0].data();
                let classes = pv.len() / labels.len();
                let scale = g[0] / F::of(labels.len() as f64);
                let floor = F::of(*floor);
                if let Some(gp) = acc!(*p) {
                    for (b, &l) in labels.iter().enumerate() {
                        let pi = pv[b * classes + l];
                        if pi > floor {
                            gp[b * classes + l] -= scale / pi;
                        }
                    }
                }
            }
            Op::Select { x, index } => {
                if let Some(gx) = acc!(*x) {
                    gx[*index] += g[0];
                }
            }
        }
    }

}

type Grads<F> = Vec<Option<Vec<F>>>;

fn acc<'a, F: Real>(
    grads: &'a mut Grads<F>,
    requires: &[bool],
    values: &[Tensor<F>],
    v: Var,
) -> Option<&'a mut [F]> {
    if !requires[v.0] {
        return None;
    }
    let n = values[v.0].len();
    Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); n]))
}

#[allow(clippy::too_many_arguments)]
fn back_dense<F: Real>(
    grads: &mut Grads<F>,
    requires: &[bool],
    values: &[Tensor<F>],
    x: Var,
    w: Var,
    b: Option<Var>,
    g: &[F],
) {
        let xs = values[x.0].shape().to_vec();
        let ws = values[w.0].shape().to_vec();
        let (m, n) = (ws[0], ws[1]);
        let batch = if xs.len() == 1 { 1 } else { xs[0] };
        if requires[x.0] {
            let wv = values[w.0].data();
            let gx = acc(grads, requires, values, x).expect("requires checked");
            kernels::matmul(g, false, wv, false, gx, batch, m, n, true);
        }
        if requires[w.0] {
            let xv = values[x.0].data();
            let gw = acc(grads, requires, values, w).expect("requires checked");
            kernels::matmul(g, true, xv, false, gw, m, batch, n, true);
        }
        if let Some(b) = b {
            if let Some(gb) = acc(grads, requires, values, b) {
                for row in g.chunks(m) {
                    add_into(gb, row);
                }
            }
        }
    }

#[allow(clippy::too_many_arguments)]
fn back_conv<F: Real>(
    grads: &mut Grads<F>,
    requires: &[bool],
    values: &[Tensor<F>],
    x: Var,
    w: Var,
    b: Option<Var>,
    geom: &kernels::ConvGeom,
    g: &[F],
) {
        if let Some(b) = b {
            if let Some(gb) = acc(grads, requires, values, b) {
                for row in g.chunks(geom.cout) {
                    add_into(gb, row);
                }
            }
        }
        let need_x = requires[x.0];
        let need_w = requires[w.0];
        if !need_x && !need_w {
            return;
        }
        let mut gx = need_x.then(|| vec![F::zero(); values[x.0].len()]);
        let mut gw = need_w.then(|| vec![F::zero(); values[w.0].len()]);
        kernels::conv2d_backward(
            geom,
            values[x.0].data(),
            values[w.0].data(),
            g,
            gx.as_deref_mut(),
            gw.as_deref_mut(),
        );
        if let Some(gx) = gx {
            add_into(acc(grads, requires, values, x).expect("requires checked"), &gx);
        }
        if let Some(gw) = gw {
            add_into(acc(grads, requires, values, w).expect("requires checked"), &gw);
        }
    }

fn add_into<F: Real>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
