//! Define-by-run reverse-mode differentiation over row-major matrices.
//!
//! A [`Graph`] is rebuilt for every batch. Each node stores its forward value
//! and the operation that produced it; [`Graph::backward`] walks the tape in
//! reverse and returns the gradient of a scalar node with respect to every
//! parameter leaf.

use std::collections::BTreeMap;

use super::ops::{self, MIN_NORM};
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Exp(Var),
    Relu(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    NormalizeRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var },
    CrossEntropy { logits: Var, targets: Vec<usize> },
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, summed per parameter.
#[derive(Clone, Debug, Default)]
pub struct ParamGrads {
    grads: BTreeMap<ParamId, Tensor>,
}

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    /// Accumulates every gradient into the store.
    pub fn apply_to(&self, store: &mut ParamStore) {
        for (id, g) in self.iter() {
            store.accumulate(id, g);
        }
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (m×k) · bᵀ` where `b` is n×k.
fn matmul_t(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out.push(super::tensor::dot(arow, &b[j * k..(j + 1) * k]));
        }
    }
    out
}

/// `aᵀ (k×m) · b` where `a` is m×k and `b` is m×n.
fn t_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

const GELU_C: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (k * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    let t = (k * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * GELU_C * x * x)
}

struct LayerNormStats {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm_stats(x: &Tensor) -> LayerNormStats {
    let (m, n) = dims(x);
    let mut xhat = Vec::with_capacity(m * n);
    let mut inv_std = Vec::with_capacity(m);
    for row in x.row_iter() {
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        xhat.extend(row.iter().map(|v| (v - mean) * is));
        inv_std.push(is);
    }
    LayerNormStats { xhat, inv_std }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)
            .item()
            .expect("scalar() called on a non-scalar node")
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Leaf bound to a stored parameter. Non-trainable parameters act as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        let op = if p.trainable { Op::Param(id) } else { Op::Input };
        self.push(p.value.clone(), op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = dims(self.value(a));
        let (k2, n) = dims(self.value(b));
        assert_eq!(k, k2, "matmul inner dimensions");
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    /// `a · bᵀ`, both operands row-major with equal widths.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = dims(self.value(a));
        let (n, k2) = dims(self.value(b));
        assert_eq!(k, k2, "matmul_t widths");
        let out = matmul_t(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shapes");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Add(a, b))
    }

    /// Adds a row vector to every row of a matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        let n = va.cols();
        assert_eq!(vr.len(), n, "add_row width");
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + vr.data()[i % n])
            .collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shapes");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    /// Multiplies every entry of `a` by the one-element node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let c = self.scalar(s);
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::ScaleBy(a, s))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let n = out.cols();
        for row in out.data_mut().chunks_mut(n) {
            ops::softmax_in_place(row);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Scales every row to unit L2 norm. Fails on a zero-norm row.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        let n = out.cols();
        for row in out.data_mut().chunks_mut(n) {
            let norm = super::tensor::norm(row);
            if !(norm > MIN_NORM) {
                return Err(Error::DegenerateFeature);
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(self.push(out, Op::NormalizeRows(a)))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let vx = self.value(x);
        let n = vx.cols();
        assert_eq!(self.value(gain).len(), n, "layer_norm gain width");
        assert_eq!(self.value(bias).len(), n, "layer_norm bias width");
        let stats = layer_norm_stats(vx);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let data = stats
            .xhat
            .iter()
            .enumerate()
            .map(|(i, xh)| g[i % n] * xh + b[i % n])
            .collect();
        let shape = vx.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::LayerNorm { x, gain, bias })
    }

    /// Mean cross-entropy over rows, fused with log-softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        if v.rows() != targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} logit rows for {} targets",
                v.rows(),
                targets.len()
            )));
        }
        let mut total = 0.0;
        for (row, &t) in v.row_iter().zip(targets) {
            total += ops::cross_entropy(row, t)?;
        }
        let loss = total / targets.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Gradient of the scalar node `loss` with respect to every trainable
    /// parameter leaf reachable from it.
    pub fn backward(&self, loss: Var) -> Result<ParamGrads> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = ParamGrads::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut send = |v: Var, d: Vec<f64>| match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(d),
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let t = Tensor::from_parts(node.value.shape().to_vec(), g);
                    match out.grads.get_mut(id) {
                        Some(acc) => acc
                            .data_mut()
                            .iter_mut()
                            .zip(t.data())
                            .for_each(|(a, b)| *a += b),
                        None => {
                            out.grads.insert(*id, t);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k) = dims(va);
                    let n = vb.cols();
                    // dA = dC · Bᵀ, dB = Aᵀ · dC
                    send(*a, matmul_t(&g, vb.data(), m, n, k));
                    send(*b, t_matmul(va.data(), &g, m, k, n));
                }
                Op::MatMulT(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k) = dims(va);
                    let n = vb.rows();
                    // C = A·Bᵀ: dA = dC · B, dB = dCᵀ · A
                    send(*a, matmul(&g, vb.data(), m, n, k));
                    send(*b, t_matmul(&g, va.data(), m, n, k));
                }
                Op::Add(a, b) => {
                    send(*b, g.clone());
                    send(*a, g);
                }
                Op::AddRow(a, r) => {
                    let n = self.value(*r).len();
                    let mut dr = vec![0.0; n];
                    for (i, v) in g.iter().enumerate() {
                        dr[i % n] += v;
                    }
                    send(*r, dr);
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    send(*a, g.iter().zip(vb).map(|(x, y)| x * y).collect());
                    send(*b, g.iter().zip(va).map(|(x, y)| x * y).collect());
                }
                Op::Scale(a, c) => send(*a, g.iter().map(|x| x * c).collect()),
                Op::ScaleBy(a, s) => {
                    let c = self.scalar(*s);
                    let va = self.value(*a).data();
                    let ds: f64 = g.iter().zip(va).map(|(x, y)| x * y).sum();
                    send(*a, g.iter().map(|x| x * c).collect());
                    send(*s, vec![ds]);
                }
                Op::Exp(a) => send(
                    *a,
                    g.iter().zip(node.value.data()).map(|(x, y)| x * y).collect(),
                ),
                Op::Relu(a) => {
                    let va = self.value(*a).data();
                    send(
                        *a,
                        g.iter()
                            .zip(va)
                            .map(|(x, y)| if *y > 0.0 { *x } else { 0.0 })
                            .collect(),
                    );
                }
                Op::Gelu(a) => {
                    let va = self.value(*a).data();
                    send(*a, g.iter().zip(va).map(|(x, y)| x * gelu_grad(*y)).collect());
                }
                Op::SoftmaxRows(a) => {
                    let n = node.value.cols();
                    let mut d = Vec::with_capacity(g.len());
                    for (gr, yr) in g.chunks(n).zip(node.value.data().chunks(n)) {
                        let inner = super::tensor::dot(gr, yr);
                        d.extend(gr.iter().zip(yr).map(|(gi, yi)| yi * (gi - inner)));
                    }
                    send(*a, d);
                }
                Op::NormalizeRows(a) => {
                    let va = self.value(*a);
                    let n = va.cols();
                    let mut d = Vec::with_capacity(g.len());
                    for ((gr, yr), xr) in g
                        .chunks(n)
                        .zip(node.value.data().chunks(n))
                        .zip(va.data().chunks(n))
                    {
                        let norm = super::tensor::norm(xr);
                        let inner = super::tensor::dot(gr, yr);
                        d.extend(gr.iter().zip(yr).map(|(gi, yi)| (gi - yi * inner) / norm));
                    }
                    send(*a, d);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let vx = self.value(*x);
                    let n = vx.cols();
                    let stats = layer_norm_stats(vx);
                    let gv = self.value(*gain).data();
                    let mut dgain = vec![0.0; n];
                    let mut dbias = vec![0.0; n];
                    let mut dx = Vec::with_capacity(g.len());
                    for (r, (gr, xh)) in g.chunks(n).zip(stats.xhat.chunks(n)).enumerate() {
                        let dxhat: Vec<f64> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                        let mean_dx = super::tensor::dot(&dxhat, xh) / n as f64;
                        let is = stats.inv_std[r];
                        for j in 0..n {
                            dgain[j] += gr[j] * xh[j];
                            dbias[j] += gr[j];
                            dx.push(is * (dxhat[j] - mean_d - xh[j] * mean_dx));
                        }
                    }
                    send(*gain, dgain);
                    send(*bias, dbias);
                    send(*x, dx);
                }
                Op::CrossEntropy { logits, targets } => {
                    let vl = self.value(*logits);
                    let n = vl.cols();
                    let scale = g[0] / targets.len() as f64;
                    let mut d = Vec::with_capacity(vl.len());
                    for (row, &t) in vl.row_iter().zip(targets) {
                        let mut p = row.to_vec();
                        ops::softmax_in_place(&mut p);
                        p[t] -= 1.0;
                        d.extend(p.iter().map(|v| v * scale));
                    }
                    debug_assert_eq!(d.len(), targets.len() * n);
                    send(*logits, d);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    send(*a, vec![g[0]; n]);
                }
            }
        }
        Ok(out)
    }
}
