use std::collections::HashMap;

use rand::Rng;

use super::kernels::{self, ConvGeom, BCE_CLAMP};
use super::{Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<f64>,
        geom: ConvGeom,
    },
    WindowPool {
        x: Var,
        scores: Var,
        windows: Vec<(usize, usize)>,
        weights: Vec<f64>,
    },
    Dropout(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
    Bce(Var, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive ops. Nodes are appended in evaluation order,
/// so reverse index order is a valid topological order for the adjoint pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every leaf flagged `requires_grad`.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.all_finite() {
        Ok(t)
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contrib: &[f64]) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a += c;
            }
        }
        None => *slot = Some(contrib.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records an input. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, x: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = kernels::transpose(self.value(a))?;
        Ok(self.unary(a, v, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::add(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::sub(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::mul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// `x[m,n] + bias[n]` applied to every row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let v = kernels::add_row(self.value(x), self.value(bias))?;
        let rg = self.rg(&[x, bias]);
        Ok(self.push(v, Op::AddRow(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = kernels::scale(self.value(x), s);
        self.unary(x, v, Op::Scale(x, s))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = kernels::sigmoid(self.value(x));
        self.unary(x, v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = kernels::tanh(self.value(x));
        self.unary(x, v, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = kernels::relu(self.value(x));
        self.unary(x, v, Op::Relu(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let v = kernels::gelu(self.value(x));
        self.unary(x, v, Op::Gelu(x))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let v = finite("softmax", kernels::softmax(self.value(x)))?;
        Ok(self.unary(x, v, Op::Softmax(x)))
    }

    /// Softmax of `logits + mask` along the last axis. The mask is a constant
    /// of `0`/`-inf` entries and never enters the graph as a value.
    pub fn masked_softmax(&mut self, logits: Var, mask: &Tensor) -> Result<Var> {
        let v = kernels::masked_softmax(self.value(logits), mask)?;
        // the adjoint only needs the output, same as the unmasked softmax
        Ok(self.unary(logits, v, Op::Softmax(logits)))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (v, xhat, inv_std) = kernels::layer_norm(self.value(x), self.value(gamma), self.value(beta))?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let ts: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = kernels::concat_rows(&ts)?;
        let rg = self.rg(parts);
        Ok(self.push(v, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let ts: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = kernels::concat_cols(&ts)?;
        let rg = self.rg(parts);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let v = kernels::slice_rows(self.value(x), start, end)?;
        Ok(self.unary(x, v, Op::SliceRows(x, start)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let v = kernels::slice_cols(self.value(x), start, end)?;
        Ok(self.unary(x, v, Op::SliceCols(x, start)))
    }

    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let v = kernels::gather_rows(self.value(table), idx)?;
        Ok(self.unary(table, v, Op::GatherRows(table, idx.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?.with_requires_grad(false);
        Ok(self.unary(x, v, Op::Reshape(x)))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (v, cols, geom) = kernels::conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(v, Op::Conv2d { x, w, b, cols, geom }, rg))
    }

    /// Windowed attention pooling; see [`kernels::window_pool`].
    pub fn window_pool(&mut self, x: Var, scores: Var, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
        let t = self.value(x).shape()[0];
        let (v, weights) = kernels::window_pool(self.value(x), self.value(scores), kernel, stride, pad)?;
        let windows = kernels::pool_windows(t, kernel, stride, pad);
        let rg = self.rg(&[x, scores]);
        Ok(self.push(
            v,
            Op::WindowPool {
                x,
                scores,
                windows,
                weights,
            },
            rg,
        ))
    }

    /// Inverted dropout with keep-probability `1 - p`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let v = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.unary(x, v, Op::Dropout(x, mask))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.unary(x, Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.unary(x, Tensor::scalar(s), Op::Mean(x))
    }

    /// Mean binary cross-entropy of probabilities `pred` against `labels`.
    pub fn bce(&mut self, pred: Var, labels: &Tensor) -> Result<Var> {
        let l = kernels::bce(self.value(pred), labels)?;
        if !l.is_finite() {
            return Err(TensorError::NonFinite { op: "bce_loss" });
        }
        Ok(self.unary(pred, Tensor::scalar(l), Op::Bce(pred, labels.clone())))
    }

    /// Reverse pass from a scalar. Does not mutate the tape, so it can be
    /// replayed and always yields the same result.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(TensorError::NonScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Op::Leaf = node.op {
                let t = Tensor::new(node.value.shape().to_vec(), g).expect("grad shape");
                out.grads.insert(Var(idx), t);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        Ok(out)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2("matmul").unwrap();
                let n = self.value(*b).shape()[1];
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    kernels::gemm_nt(m, n, k, g, self.value(*b).data(), &mut da);
                    accumulate(&mut grads[a.0], &da);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    kernels::gemm_tn(k, m, n, self.value(*a).data(), g, &mut db);
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(*a).dims2("transpose").unwrap();
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                accumulate(&mut grads[a.0], &da);
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g);
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g);
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g);
                }
                if self.wants(*b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(&mut grads[b.0], &neg);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let da: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                    accumulate(&mut grads[a.0], &da);
                }
                if self.wants(*b) {
                    let db: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::AddRow(x, b) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g);
                }
                if self.wants(*b) {
                    let n = self.value(*b).numel();
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::Scale(x, s) => {
                let dx: Vec<f64> = g.iter().map(|v| v * s).collect();
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Sigmoid(x) => {
                let dx: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Tanh(x) => {
                let dx: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let dx: Vec<f64> = g.iter().zip(xv).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect();
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(xv)
                    .map(|(g, &x)| g * kernels::gelu_grad_scalar(x))
                    .collect();
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Softmax(x) => {
                let n = *node.value.shape().last().unwrap();
                let mut dx = vec![0.0; y.len()];
                for ((dr, yr), gr) in dx.chunks_mut(n).zip(y.chunks(n)).zip(g.chunks(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(&mut grads[x.0], &dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = self.value(*gamma).numel();
                let gm = self.value(*gamma).data();
                if self.wants(*gamma) {
                    let mut dg = vec![0.0; n];
                    for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            dg[j] += gr[j] * hr[j];
                        }
                    }
                    accumulate(&mut grads[gamma.0], &dg);
                }
                if self.wants(*beta) {
                    let mut db = vec![0.0; n];
                    for gr in g.chunks(n) {
                        for j in 0..n {
                            db[j] += gr[j];
                        }
                    }
                    accumulate(&mut grads[beta.0], &db);
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; g.len()];
                    let nf = n as f64;
                    for (i, ((dr, gr), hr)) in dx.chunks_mut(n).zip(g.chunks(n)).zip(xhat.chunks(n)).enumerate() {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..n {
                            let dh = gr[j] * gm[j];
                            s1 += dh;
                            s2 += dh * hr[j];
                        }
                        for j in 0..n {
                            let dh = gr[j] * gm[j];
                            dr[j] = inv_std[i] / nf * (nf * dh - s1 - hr[j] * s2);
                        }
                    }
                    accumulate(&mut grads[x.0], &dx);
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).numel();
                    if self.wants(*p) {
                        accumulate(&mut grads[p.0], &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.shape()[1];
                let m = node.value.shape()[0];
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).shape()[1];
                    if self.wants(*p) {
                        let mut dp = Vec::with_capacity(m * w);
                        for i in 0..m {
                            dp.extend_from_slice(&g[i * total + off..i * total + off + w]);
                        }
                        accumulate(&mut grads[p.0], &dp);
                    }
                    off += w;
                }
            }
            Op::SliceRows(x, start) => {
                let src = self.value(*x);
                let n = src.shape()[1];
                let mut dx = vec![0.0; src.numel()];
                dx[start * n..start * n + g.len()].copy_from_slice(g);
                accumulate(&mut grads[x.0], &dx);
            }
            Op::SliceCols(x, start) => {
                let src = self.value(*x);
                let (m, n) = (src.shape()[0], src.shape()[1]);
                let w = node.value.shape()[1];
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    dx[i * n + start..i * n + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                accumulate(&mut grads[x.0], &dx);
            }
            Op::GatherRows(table, idx) => {
                let src = self.value(*table);
                let n = src.shape()[1];
                let mut dt = vec![0.0; src.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..n {
                        dt[i * n + j] += g[r * n + j];
                    }
                }
                accumulate(&mut grads[table.0], &dt);
            }
            Op::Reshape(x) => accumulate(&mut grads[x.0], g),
            Op::Conv2d { x, w, b, cols, geom } => {
                let cout = node.value.shape()[0];
                let l = geom.out_h() * geom.out_w();
                let patch = cols.len() / l;
                if self.wants(*b) {
                    let db: Vec<f64> = g.chunks(l).map(|r| r.iter().sum()).collect();
                    accumulate(&mut grads[b.0], &db);
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; cout * patch];
                    kernels::gemm_nt(cout, l, patch, g, cols, &mut dw);
                    accumulate(&mut grads[w.0], &dw);
                }
                if self.wants(*x) {
                    let mut dcols = vec![0.0; patch * l];
                    kernels::gemm_tn(patch, cout, l, self.value(*w).data(), g, &mut dcols);
                    let mut dx = vec![0.0; self.value(*x).numel()];
                    kernels::col2im(&dcols, geom, &mut dx);
                    accumulate(&mut grads[x.0], &dx);
                }
            }
            Op::WindowPool {
                x,
                scores,
                windows,
                weights,
            } => {
                let xt = self.value(*x);
                let (t, d) = (xt.shape()[0], xt.shape()[1]);
                let mut dx = vec![0.0; t * d];
                let mut ds = vec![0.0; t];
                let mut off = 0;
                for (wi, &(lo, hi)) in windows.iter().enumerate() {
                    let gw = &g[wi * d..(wi + 1) * d];
                    let yw = &y[wi * d..(wi + 1) * d];
                    let gy: f64 = gw.iter().zip(yw).map(|(a, b)| a * b).sum();
                    for (j, i) in (lo..hi).enumerate() {
                        let a = weights[off + j];
                        let xi = xt.row(i);
                        let mut gx = 0.0;
                        for c in 0..d {
                            dx[i * d + c] += a * gw[c];
                            gx += gw[c] * xi[c];
                        }
                        ds[i] += a * (gx - gy);
                    }
                    off += hi - lo;
                }
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], &dx);
                }
                if self.wants(*scores) {
                    accumulate(&mut grads[scores.0], &ds);
                }
            }
            Op::Dropout(x, mask) => {
                let dx: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                accumulate(&mut grads[x.0], &vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                accumulate(&mut grads[x.0], &vec![g[0] / n as f64; n]);
            }
            Op::Bce(pred, labels) => {
                let p = self.value(*pred).data();
                let n = p.len() as f64;
                let dx: Vec<f64> = p
                    .iter()
                    .zip(labels.data())
                    .map(|(&p, &l)| {
                        let pos = if p > BCE_CLAMP { l / p } else { 0.0 };
                        let neg = if 1.0 - p > BCE_CLAMP { (1.0 - l) / (1.0 - p) } else { 0.0 };
                        -g[0] * (pos - neg) / n
                    })
                    .collect();
                accumulate(&mut grads[pred.0], &dx);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 0.25);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let y = g.scale(x, 2.0);
        assert_eq!(g.backward(y).unwrap_err(), TensorError::NonScalar(vec![2]));
    }

    #[test]
    fn backward_replay_is_identical() {
        let mut g = Graph::new();
        let a = g.param(Tensor::matrix(2, 2, vec![0.3, -0.1, 0.7, 0.2]).unwrap());
        let b = g.param(Tensor::matrix(2, 2, vec![1.0, 0.5, -0.4, 0.9]).unwrap());
        let c = g.matmul(a, b).unwrap();
        let s = g.softmax(c).unwrap();
        let t = g.tanh(s);
        let loss = g.sum(t);
        let first = g.backward(loss).unwrap();
        let second = g.backward(loss).unwrap();
        for v in [a, b] {
            assert_eq!(first.get(v).unwrap().data(), second.get(v).unwrap().data());
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let x = g.param(Tensor::vector(vec![3.0, 4.0]));
        let y = g.mul(c, x).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn masked_positions_get_zero_gradient() {
        let ninf = f64::NEG_INFINITY;
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![0.1, 0.4, -0.3]));
        let mask = Tensor::vector(vec![0.0, 0.0, ninf]);
        let p = g.masked_softmax(x, &mask).unwrap();
        let w = g.constant(Tensor::vector(vec![1.0, 0.0, 5.0]));
        let y = g.mul(p, w).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        let dx = grads.get(x).unwrap().data();
        assert_eq!(dx[2], 0.0);
        assert!(dx.iter().all(|v| v.is_finite()));
    }
}
