//! Reverse-mode differentiation over a linear record of executed operations.
//!
//! Every op appends a node whose inputs were created earlier, so the node list
//! is already in topological order and `backward` is a single reverse sweep.

use std::rc::Rc;

use crate::error::{FgseError, Result};
use crate::numcore::tensor::Tensor;

pub const SELU_LAMBDA: f32 = 1.050_701;
pub const SELU_ALPHA: f32 = 1.673_263_2;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f32),
    Selu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f32>,
    },
    GatherRows {
        x: Var,
        idx: Rc<[Option<usize>]>,
    },
    ScatterAddRows {
        x: Var,
        idx: Rc<[usize]>,
    },
    SegmentSoftmax {
        x: Var,
        seg: Rc<[usize]>,
        n_seg: usize,
    },
    SegmentMean {
        x: Var,
        seg: Rc<[usize]>,
        counts: Vec<usize>,
    },
    HeadDot {
        a: Var,
        b: Var,
        heads: usize,
    },
    HeadScale {
        x: Var,
        alpha: Var,
        heads: usize,
    },
    Reshape(Var),
    Sum(Var),
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f32>,
    op: Op,
    requires_grad: bool,
}

/// Records differentiable computations; one tape per forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
}

fn cols_of(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

/// `c (+)= op(a) · op(b)` for row-major buffers, where `op` optionally transposes.
/// `m×k` and `k×n` are the logical (post-transpose) dimensions.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, c: &mut [f32], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slice lengths above cover every element addressed by the
    // given dimensions and strides.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f32>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf; it participates in backward if the tensor requires grad.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a leaf that always receives a gradient.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f32>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(FgseError::shape("constant", &shape, &[data.len()]));
        }
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f32] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node shape is consistent")
    }

    pub fn scalar(&self, v: Var) -> f32 {
        self.nodes[v.0].value[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.grads[v.0].as_deref()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn matrix(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        let cols = cols_of(&n.shape);
        (n.value.len() / cols.max(1), cols)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(FgseError::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(FgseError::shape("add", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(FgseError::shape("mul", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), rg))
    }

    /// Adds a length-`c` vector to every row of an `r×c` value.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, cols) = self.matrix(x);
        if self.value(bias).len() != cols {
            return Err(FgseError::shape("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(cols) {
            row.iter_mut().zip(b).for_each(|(o, b)| *o += b);
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias(x, bias), rg))
    }

    /// `x · w + b` with `w` stored as `[in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let out = self.value(x).iter().map(|v| v * s).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, Op::Scale(x, s), rg)
    }

    pub fn selu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| selu_scalar(v)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, Op::Selu(x), rg)
    }

    /// Normalizes each row over the last axis, then applies `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f32) -> Result<Var> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(FgseError::Argument(format!(
                "layer_norm eps must be a positive finite value, got {eps}"
            )));
        }
        let (rows, d) = self.matrix(x);
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(FgseError::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let xs = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let mut xhat = vec![0.0; rows * d];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f32>() / d as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let xh = (row[c] - mean) * rs;
                xhat[r * d + c] = xh;
                out[r * d + c] = xh * g[c] + b[c];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            self.shape(x).to_vec(),
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Row-wise softmax over the last axis (max-subtracted).
    pub fn softmax(&mut self, x: Var) -> Var {
        let (_, c) = self.matrix(x);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c.max(1)) {
            softmax_in_place(row);
        }
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, Op::Softmax(x), rg)
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, c) = self.matrix(logits);
        if rows != targets.len() {
            return Err(FgseError::shape("cross_entropy", self.shape(logits), &[targets.len()]));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(FgseError::Index {
                what: "cross_entropy target class",
                index: t,
                len: c,
            });
        }
        let mut probs = self.value(logits).to_vec();
        let mut loss = 0.0f64;
        for (r, row) in probs.chunks_mut(c).enumerate() {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f32>().ln() + max;
            loss += f64::from(lse - row[targets[r]]);
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        let value = if rows == 0 { 0.0 } else { (loss / rows as f64) as f32 };
        let rg = self.rg(logits);
        Ok(self.push(
            vec![],
            vec![value],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Selects rows by index; `None` yields a zero row.
    pub fn gather_rows(&mut self, x: Var, idx: Rc<[Option<usize>]>) -> Result<Var> {
        let (rows, c) = self.matrix(x);
        let mut out = vec![0.0; idx.len() * c];
        let xs = self.value(x);
        for (o, i) in out.chunks_mut(c.max(1)).zip(idx.iter()) {
            if let Some(i) = *i {
                if i >= rows {
                    return Err(FgseError::Index {
                        what: "gather_rows",
                        index: i,
                        len: rows,
                    });
                }
                o.copy_from_slice(&xs[i * c..(i + 1) * c]);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![idx.len(), c], out, Op::GatherRows { x, idx }, rg))
    }

    /// `out[idx[e]] += x[e]` into `n` output rows.
    pub fn scatter_add_rows(&mut self, x: Var, idx: Rc<[usize]>, n: usize) -> Result<Var> {
        let (rows, c) = self.matrix(x);
        if rows != idx.len() {
            return Err(FgseError::shape("scatter_add_rows", self.shape(x), &[idx.len()]));
        }
        let mut out = vec![0.0; n * c];
        let xs = self.value(x);
        for (e, &i) in idx.iter().enumerate() {
            if i >= n {
                return Err(FgseError::Index {
                    what: "scatter_add_rows",
                    index: i,
                    len: n,
                });
            }
            out[i * c..(i + 1) * c]
                .iter_mut()
                .zip(&xs[e * c..(e + 1) * c])
                .for_each(|(o, v)| *o += v);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![n, c], out, Op::ScatterAddRows { x, idx }, rg))
    }

    /// Softmax down each column, separately within each segment of rows.
    pub fn segment_softmax(&mut self, x: Var, seg: Rc<[usize]>, n_seg: usize) -> Result<Var> {
        let (rows, h) = self.matrix(x);
        if rows != seg.len() {
            return Err(FgseError::shape("segment_softmax", self.shape(x), &[seg.len()]));
        }
        if let Some(&s) = seg.iter().find(|&&s| s >= n_seg) {
            return Err(FgseError::Index {
                what: "segment_softmax segment",
                index: s,
                len: n_seg,
            });
        }
        let xs = self.value(x);
        let mut max = vec![f32::NEG_INFINITY; n_seg * h];
        for (e, &s) in seg.iter().enumerate() {
            for k in 0..h {
                let m = &mut max[s * h + k];
                *m = m.max(xs[e * h + k]);
            }
        }
        let mut out = vec![0.0; rows * h];
        let mut sum = vec![0.0f32; n_seg * h];
        for (e, &s) in seg.iter().enumerate() {
            for k in 0..h {
                let v = (xs[e * h + k] - max[s * h + k]).exp();
                out[e * h + k] = v;
                sum[s * h + k] += v;
            }
        }
        for (e, &s) in seg.iter().enumerate() {
            for k in 0..h {
                out[e * h + k] /= sum[s * h + k];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(self.shape(x).to_vec(), out, Op::SegmentSoftmax { x, seg, n_seg }, rg))
    }

    /// Mean of the rows belonging to each segment. Every segment must be non-empty.
    pub fn segment_mean(&mut self, x: Var, seg: Rc<[usize]>, n_seg: usize) -> Result<Var> {
        let (rows, c) = self.matrix(x);
        if rows != seg.len() {
            return Err(FgseError::shape("segment_mean", self.shape(x), &[seg.len()]));
        }
        let mut counts = vec![0usize; n_seg];
        let mut out = vec![0.0; n_seg * c];
        let xs = self.value(x);
        for (e, &s) in seg.iter().enumerate() {
            if s >= n_seg {
                return Err(FgseError::Index {
                    what: "segment_mean segment",
                    index: s,
                    len: n_seg,
                });
            }
            counts[s] += 1;
            out[s * c..(s + 1) * c]
                .iter_mut()
                .zip(&xs[e * c..(e + 1) * c])
                .for_each(|(o, v)| *o += v);
        }
        if let Some(empty) = counts.iter().position(|&n| n == 0) {
            return Err(FgseError::Argument(format!("segment_mean: segment {empty} is empty")));
        }
        for (s, &n) in counts.iter().enumerate() {
            let inv = 1.0 / n as f32;
            out[s * c..(s + 1) * c].iter_mut().for_each(|o| *o *= inv);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![n_seg, c], out, Op::SegmentMean { x, seg, counts }, rg))
    }

    /// Per-row dot products within each of `heads` equal column blocks: `[m×d],[m×d] -> [m×heads]`.
    pub fn head_dot(&mut self, a: Var, b: Var, heads: usize) -> Result<Var> {
        let (m, d) = self.matrix(a);
        if self.shape(a) != self.shape(b) || heads == 0 || d % heads != 0 {
            return Err(FgseError::shape("head_dot", self.shape(a), self.shape(b)));
        }
        let dh = d / heads;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * heads];
        for e in 0..m {
            for k in 0..heads {
                let lo = e * d + k * dh;
                out[e * heads + k] = av[lo..lo + dh].iter().zip(&bv[lo..lo + dh]).map(|(x, y)| x * y).sum();
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, heads], out, Op::HeadDot { a, b, heads }, rg))
    }

    /// Multiplies each head's column block of `x [m×d]` by `alpha [m×heads]`.
    pub fn head_scale(&mut self, x: Var, alpha: Var, heads: usize) -> Result<Var> {
        let (m, d) = self.matrix(x);
        let (ma, h) = self.matrix(alpha);
        if ma != m || h != heads || heads == 0 || d % heads != 0 {
            return Err(FgseError::shape("head_scale", self.shape(x), self.shape(alpha)));
        }
        let dh = d / heads;
        let (xv, al) = (self.value(x), self.value(alpha));
        let mut out = vec![0.0; m * d];
        for e in 0..m {
            for c in 0..d {
                out[e * d + c] = xv[e * d + c] * al[e * heads + c / dh];
            }
        }
        let rg = self.rg(x) || self.rg(alpha);
        Ok(self.push(self.shape(x).to_vec(), out, Op::HeadScale { x, alpha, heads }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(FgseError::shape("reshape", self.shape(x), &shape));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape, out, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().map(|&v| f64::from(v)).sum::<f64>() as f32;
        let rg = self.rg(x);
        self.push(vec![], vec![s], Op::Sum(x), rg)
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(FgseError::shape("backward", &self.nodes[loss.0].shape, &[1]));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let Tape { nodes, grads } = self;
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop(nodes, grads, node, &g);
        }
        Ok(())
    }
}

fn accum<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f32>>], v: Var) -> Option<&'a mut Vec<f32>> {
    let n = &nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]))
}

fn backprop(nodes: &[Node], grads: &mut [Option<Vec<f32>>], node: &Node, g: &[f32]) {
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
            let n = nodes[b.0].shape[1];
            if let Some(da) = accum(nodes, grads, *a) {
                gemm(m, n, k, g, false, &nodes[b.0].value, true, da, true);
            }
            if let Some(db) = accum(nodes, grads, *b) {
                gemm(k, m, n, &nodes[a.0].value, true, g, false, db, true);
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(d) = accum(nodes, grads, *v) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::Mul(a, b) => {
            if let Some(da) = accum(nodes, grads, *a) {
                let bv = &nodes[b.0].value;
                da.iter_mut().zip(g).zip(bv).for_each(|((d, g), y)| *d += g * y);
            }
            if let Some(db) = accum(nodes, grads, *b) {
                let av = &nodes[a.0].value;
                db.iter_mut().zip(g).zip(av).for_each(|((d, g), x)| *d += g * x);
            }
        }
        Op::AddBias(x, bias) => {
            if let Some(dx) = accum(nodes, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
            if let Some(db) = accum(nodes, grads, *bias) {
                let c = db.len();
                for row in g.chunks(c) {
                    db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::Scale(x, s) => {
            if let Some(dx) = accum(nodes, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, g)| *d += g * s);
            }
        }
        Op::Selu(x) => {
            if let Some(dx) = accum(nodes, grads, *x) {
                let xv = &nodes[x.0].value;
                let yv = &node.value;
                for i in 0..dx.len() {
                    let slope = if xv[i] > 0.0 {
                        SELU_LAMBDA
                    } else {
                        yv[i] + SELU_LAMBDA * SELU_ALPHA
                    };
                    dx[i] += g[i] * slope;
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        } => {
            let d = cols_of(&node.shape);
            let gv = &nodes[gain.0].value;
            if let Some(dg) = accum(nodes, grads, *gain) {
                for (gr, xr) in g.chunks(d).zip(xhat.chunks(d)) {
                    for c in 0..d {
                        dg[c] += gr[c] * xr[c];
                    }
                }
            }
            if let Some(db) = accum(nodes, grads, *bias) {
                for gr in g.chunks(d) {
                    db.iter_mut().zip(gr).for_each(|(d, g)| *d += g);
                }
            }
            if let Some(dx) = accum(nodes, grads, *x) {
                let inv_d = 1.0 / d as f32;
                for (r, ((gr, xr), dxr)) in g.chunks(d).zip(xhat.chunks(d)).zip(dx.chunks_mut(d)).enumerate() {
                    let mut mean_gy = 0.0;
                    let mut mean_gyx = 0.0;
                    for c in 0..d {
                        let gy = gr[c] * gv[c];
                        mean_gy += gy;
                        mean_gyx += gy * xr[c];
                    }
                    mean_gy *= inv_d;
                    mean_gyx *= inv_d;
                    for c in 0..d {
                        let gy = gr[c] * gv[c];
                        dxr[c] += rstd[r] * (gy - mean_gy - xr[c] * mean_gyx);
                    }
                }
            }
        }
        Op::Softmax(x) => {
            if let Some(dx) = accum(nodes, grads, *x) {
                let c = cols_of(&node.shape).max(1);
                for ((yr, gr), dr) in node.value.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                    let dot: f32 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for k in 0..c {
                        dr[k] += yr[k] * (gr[k] - dot);
                    }
                }
            }
        }
        Op::CrossEntropy { logits, targets, probs } => {
            if let Some(dx) = accum(nodes, grads, *logits) {
                let rows = targets.len();
                if rows == 0 {
                    return;
                }
                let c = probs.len() / rows;
                let s = g[0] / rows as f32;
                for (r, &t) in targets.iter().enumerate() {
                    for k in 0..c {
                        let onehot = if k == t { 1.0 } else { 0.0 };
                        dx[r * c + k] += s * (probs[r * c + k] - onehot);
                    }
                }
            }
        }
        Op::GatherRows { x, idx } => {
            if let Some(dx) = accum(nodes, grads, *x) {
                let c = cols_of(&node.shape).max(1);
                for (gr, i) in g.chunks(c).zip(idx.iter()) {
                    if let Some(i) = *i {
                        dx[i * c..(i + 1) * c].iter_mut().zip(gr).for_each(|(d, g)| *d += g);
                    }
                }
            }
        }
        Op::ScatterAddRows { x, idx } => {
            if let Some(dx) = accum(nodes, grads, *x) {
                let c = cols_of(&node.shape).max(1);
                for (e, &i) in idx.iter().enumerate() {
                    dx[e * c..(e + 1) * c]
                        .iter_mut()
                        .zip(&g[i * c..(i + 1) * c])
                        .for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::SegmentSoftmax { x, seg, n_seg } => {
            if let Some(dx) = accum(nodes, grads, *x) {
                let h = cols_of(&node.shape).max(1);
                let y = &node.value;
                let mut dot = vec![0.0f32; n_seg * h];
                for (e, &s) in seg.iter().enumerate() {
                    for k in 0..h {
                        dot[s * h + k] += g[e * h + k] * y[e * h + k];
                    }
                }
                for (e, &s) in seg.iter().enumerate() {
                    for k in 0..h {
                        dx[e * h + k] += y[e * h + k] * (g[e * h + k] - dot[s * h + k]);
                    }
                }
            }
        }
        Op::SegmentMean { x, seg, counts } => {
            if let Some(dx) = accum(nodes, grads, *x) {
                let c = cols_of(&node.shape).max(1);
                for (e, &s) in seg.iter().enumerate() {
                    let inv = 1.0 / counts[s] as f32;
                    dx[e * c..(e + 1) * c]
                        .iter_mut()
                        .zip(&g[s * c..(s + 1) * c])
                        .for_each(|(d, g)| *d += g * inv);
                }
            }
        }
        Op::HeadDot { a, b, heads } => {
            let d = cols_of(&nodes[a.0].shape);
            let dh = d / heads;
            for (target, other) in [(a, b), (b, a)] {
                if let Some(dt) = accum(nodes, grads, *target) {
                    let ov = &nodes[other.0].value;
                    for (e, gr) in g.chunks(*heads).enumerate() {
                        for c in 0..d {
                            dt[e * d + c] += gr[c / dh] * ov[e * d + c];
                        }
                    }
                }
            }
        }
        Op::HeadScale { x, alpha, heads } => {
            let d = cols_of(&node.shape);
            let dh = d / heads;
            if let Some(dx) = accum(nodes, grads, *x) {
                let al = &nodes[alpha.0].value;
                for (e, gr) in g.chunks(d).enumerate() {
                    for c in 0..d {
                        dx[e * d + c] += gr[c] * al[e * heads + c / dh];
                    }
                }
            }
            if let Some(da) = accum(nodes, grads, *alpha) {
                let xv = &nodes[x.0].value;
                for (e, gr) in g.chunks(d).enumerate() {
                    for c in 0..d {
                        da[e * heads + c / dh] += gr[c] * xv[e * d + c];
                    }
                }
            }
        }
        Op::Reshape(x) => {
            if let Some(dx) = accum(nodes, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
        }
        Op::Sum(x) => {
            if let Some(dx) = accum(nodes, grads, *x) {
                dx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
    }
}

pub fn selu_scalar(v: f32) -> f32 {
    if v > 0.0 {
        SELU_LAMBDA * v
    } else {
        SELU_LAMBDA * SELU_ALPHA * v.exp_m1()
    }
}

pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}
