//! Reverse-mode autodiff over the fixed op set the tagger needs.
//!
//! A `Graph` is rebuilt per step: parameter leaves copy their values out
//! of a [`ParamStore`], ops record enough state for the backward pass,
//! and [`Graph::write_grads`] accumulates leaf gradients back into the
//! store. Ops outside this set (broadcasting, convolutions, ...) are
//! deliberately absent.

use std::collections::HashMap;

use super::kernels::{matmul_acc, matmul_at_acc, matmul_bt_acc, softmax_row};
use super::loss::cross_entropy_kernel;
use super::store::ParamStore;
use super::tensor::Tensor;
use crate::{Error, Result};

const LAYER_NORM_EPS: f32 = 1e-12;
/// Additive pre-softmax bias that masks PAD keys out of attention.
const ATTENTION_MASK_BIAS: f32 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Projection weights for one attention block.
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub wq: NodeId,
    pub bq: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub wo: NodeId,
    pub bo: NodeId,
}

struct AttentionCache {
    q: Vec<f32>,
    k: Vec<f32>,
    v: Vec<f32>,
    probs: Vec<f32>,
    ctx: Vec<f32>,
}

struct LayerNormCache {
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
}

enum Op {
    Leaf,
    Param,
    Gather {
        table: NodeId,
        ids: Vec<u32>,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    AddBias {
        a: NodeId,
        bias: NodeId,
    },
    Matmul {
        a: NodeId,
        b: NodeId,
    },
    /// a [m×k] times the transpose of b [v×k]; used for the tied MLM
    /// output projection against the embedding matrix.
    MatmulBT {
        a: NodeId,
        b: NodeId,
    },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        cache: LayerNormCache,
    },
    Gelu {
        x: NodeId,
    },
    Attention {
        x: NodeId,
        w: AttentionWeights,
        seq: usize,
        heads: usize,
        cache: AttentionCache,
    },
    CrossEntropy {
        logits: NodeId,
        labels: Vec<i64>,
        ignore: i64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
    grads: Vec<Option<Vec<f32>>>,
    scalar_f64: HashMap<usize, f64>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// f64 loss of a cross-entropy node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.scalar_f64
            .get(&id.0)
            .copied()
            .unwrap_or_else(|| self.nodes[id.0].value.data()[0] as f64)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Parameter leaf bound to a store entry. The same name always maps
    /// to the same node, so re-using a parameter (weight tying) routes
    /// every gradient contribution to one leaf.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let tensor = store
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?
            .clone();
        let id = self.push(tensor, Op::Param);
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    /// Embedding lookup: rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let (rows, cols) = self.value(table).dims2()?;
        let data = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            let id = id as usize;
            if id >= rows {
                return Err(Error::invalid(format!(
                    "id {id} out of range for table with {rows} rows"
                )));
            }
            out.extend_from_slice(&data[id * cols..(id + 1) * cols]);
        }
        let value = Tensor::from_vec(&[ids.len(), cols], out)?;
        Ok(self.push(value, Op::Gather { table, ids: ids.to_vec() }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::from_vec(self.value(a).shape().to_vec().as_slice(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// Row-broadcast bias: a [m×n] + bias [n].
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(a).dims2()?;
        if self.value(bias).shape() != [n] {
            return Err(Error::shape(format!(
                "add_bias: bias {:?} for matrix [{m}, {n}]",
                self.value(bias).shape()
            )));
        }
        let b = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, &y) in row.iter_mut().zip(b) {
                *x += y;
            }
        }
        let value = Tensor::from_vec(&[m, n], data)?;
        Ok(self.push(value, Op::AddBias { a, bias }))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::shape(format!("matmul: [{m}×{k}] · [{k2}×{n}]")));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(&mut out, self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::from_vec(&[m, n], out)?;
        Ok(self.push(value, Op::Matmul { a, b }))
    }

    /// a [m×k] · bᵀ with b [v×k]; output [m×v].
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.value(a).dims2()?;
        let (v, k2) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::shape(format!("matmul_bt: [{m}×{k}] · [{v}×{k2}]ᵀ")));
        }
        let mut out = vec![0.0; m * v];
        matmul_bt_acc(&mut out, self.value(a).data(), self.value(b).data(), m, k, v);
        let value = Tensor::from_vec(&[m, v], out)?;
        Ok(self.push(value, Op::MatmulBT { a, b }))
    }

    /// Linear layer: x·w + b.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// Per-row layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        if self.value(gain).shape() != [n] || self.value(bias).shape() != [n] {
            return Err(Error::shape(format!(
                "layer_norm: gain {:?} bias {:?} for width {n}",
                self.value(gain).shape(),
                self.value(bias).shape()
            )));
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let xd = self.value(x).data();
        let mut out = vec![0.0f32; m * n];
        let mut xhat = vec![0.0f32; m * n];
        let mut inv_std = vec![0.0f32; m];
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f32>() / n as f32;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = inv;
            for j in 0..n {
                let xh = (row[j] - mean) * inv;
                xhat[i * n + j] = xh;
                out[i * n + j] = g[j] * xh + b[j];
            }
        }
        let value = Tensor::from_vec(&[m, n], out)?;
        Ok(self.push(
            value,
            Op::LayerNorm { x, gain, bias, cache: LayerNormCache { xhat, inv_std } },
        ))
    }

    /// GELU activation (tanh approximation).
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| gelu_fwd(v)).collect();
        let value = Tensor::from_vec(self.value(x).shape().to_vec().as_slice(), data)
            .expect("same shape");
        self.push(value, Op::Gelu { x })
    }

    /// Multi-head self-attention over `batch` sequences of length `seq`.
    ///
    /// `x` is [batch*seq × hidden]; `mask[i]` is 1.0 for a real position
    /// and 0.0 for PAD. Masked positions are excluded as attention keys
    /// via an additive -1e9 pre-softmax bias.
    pub fn attention(
        &mut self,
        x: NodeId,
        w: AttentionWeights,
        mask: &[f32],
        batch: usize,
        seq: usize,
        heads: usize,
    ) -> Result<NodeId> {
        let (rows, hidden) = self.value(x).dims2()?;
        if rows != batch * seq {
            return Err(Error::shape(format!(
                "attention: {rows} rows for batch {batch} × seq {seq}"
            )));
        }
        if mask.len() != rows {
            return Err(Error::shape(format!(
                "attention: mask length {} for {rows} rows",
                mask.len()
            )));
        }
        if hidden % heads != 0 {
            return Err(Error::shape(format!(
                "attention: hidden {hidden} not divisible by {heads} heads"
            )));
        }
        let d = hidden / heads;
        let scale = 1.0 / (d as f32).sqrt();

        let project = |this: &Graph, wt: NodeId, bt: NodeId| -> Result<Vec<f32>> {
            let (k, k2) = this.value(wt).dims2()?;
            if k != hidden || k2 != hidden {
                return Err(Error::shape(format!(
                    "attention projection weight {:?} for hidden {hidden}",
                    this.value(wt).shape()
                )));
            }
            let mut out = vec![0.0; rows * hidden];
            matmul_acc(&mut out, this.value(x).data(), this.value(wt).data(), rows, hidden, hidden);
            let bias = this.value(bt).data();
            for row in out.chunks_mut(hidden) {
                for (o, &b) in row.iter_mut().zip(bias) {
                    *o += b;
                }
            }
            Ok(out)
        };
        let q = project(self, w.wq, w.bq)?;
        let k = project(self, w.wk, w.bk)?;
        let v = project(self, w.wv, w.bv)?;

        let mut probs = vec![0.0f32; batch * heads * seq * seq];
        let mut ctx = vec![0.0f32; rows * hidden];
        {
            use rayon::prelude::*;
            let q = &q;
            let k = &k;
            let v = &v;
            probs
                .par_chunks_mut(heads * seq * seq)
                .zip(ctx.par_chunks_mut(seq * hidden))
                .enumerate()
                .for_each(|(b, (p_block, c_block))| {
                    let base = b * seq;
                    for h in 0..heads {
                        let off = h * d;
                        for i in 0..seq {
                            let q_row = &q[(base + i) * hidden + off..(base + i) * hidden + off + d];
                            let p_row = &mut p_block[h * seq * seq + i * seq..h * seq * seq + (i + 1) * seq];
                            for j in 0..seq {
                                let k_row =
                                    &k[(base + j) * hidden + off..(base + j) * hidden + off + d];
                                let mut dot = 0.0f32;
                                for (a, b) in q_row.iter().zip(k_row) {
                                    dot += a * b;
                                }
                                p_row[j] =
                                    dot * scale + (1.0 - mask[base + j]) * ATTENTION_MASK_BIAS;
                            }
                            softmax_row(p_row);
                            let c_row = &mut c_block[i * hidden + off..i * hidden + off + d];
                            for j in 0..seq {
                                let pj = p_row[j];
                                if pj == 0.0 {
                                    continue;
                                }
                                let v_row =
                                    &v[(base + j) * hidden + off..(base + j) * hidden + off + d];
                                for (c, &vv) in c_row.iter_mut().zip(v_row) {
                                    *c += pj * vv;
                                }
                            }
                        }
                    }
                });
        }

        let mut out = vec![0.0; rows * hidden];
        matmul_acc(&mut out, &ctx, self.value(w.wo).data(), rows, hidden, hidden);
        let bo = self.value(w.bo).data();
        for row in out.chunks_mut(hidden) {
            for (o, &b) in row.iter_mut().zip(bo) {
                *o += b;
            }
        }
        let value = Tensor::from_vec(&[rows, hidden], out)?;
        Ok(self.push(
            value,
            Op::Attention { x, w, seq, heads, cache: AttentionCache { q, k, v, probs, ctx } },
        ))
    }

    /// Scalar mean cross-entropy over non-ignored rows of `logits`.
    pub fn cross_entropy_loss(
        &mut self,
        logits: NodeId,
        labels: &[i64],
        ignore: i64,
    ) -> Result<NodeId> {
        let (n, c) = self.value(logits).dims2()?;
        let (loss, _) =
            cross_entropy_kernel(self.value(logits).data(), n, c, labels, ignore, false)?;
        let value = Tensor::from_vec(&[1], vec![loss as f32])?;
        let id = self.push(
            value,
            Op::CrossEntropy { logits, labels: labels.to_vec(), ignore },
        );
        self.scalar_f64.insert(id.0, loss);
        Ok(id)
    }

    fn grad_or_zeros(&mut self, id: NodeId) -> &mut Vec<f32> {
        let len = self.nodes[id.0].value.len();
        self.grads[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    /// Reverse pass from a scalar node. Populates per-node gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape("backward requires a scalar loss node"));
        }
        if !self.nodes[loss.0].value.data()[0].is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(dy) = self.grads[idx].take() else { continue };
            // Reinstall so callers can inspect gradients afterwards.
            self.backward_op(idx, &dy)?;
            self.grads[idx] = Some(dy);
        }
        Ok(())
    }

    fn backward_op(&mut self, idx: usize, dy: &[f32]) -> Result<()> {
        // Values are read through raw pointers to the nodes vec while
        // gradients are written; ops never alias their own output.
        match &self.nodes[idx].op {
            Op::Leaf | Op::Param => {}
            Op::Gather { table, ids } => {
                let (table, ids) = (*table, ids.clone());
                let (_, cols) = self.nodes[table.0].value.dims2()?;
                let dt = self.grad_or_zeros(table);
                for (i, &id) in ids.iter().enumerate() {
                    let dst = &mut dt[id as usize * cols..(id as usize + 1) * cols];
                    let src = &dy[i * cols..(i + 1) * cols];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                for (d, &s) in self.grad_or_zeros(a).iter_mut().zip(dy) {
                    *d += s;
                }
                for (d, &s) in self.grad_or_zeros(b).iter_mut().zip(dy) {
                    *d += s;
                }
            }
            Op::AddBias { a, bias } => {
                let (a, bias) = (*a, *bias);
                let n = self.nodes[bias.0].value.len();
                for (d, &s) in self.grad_or_zeros(a).iter_mut().zip(dy) {
                    *d += s;
                }
                let db = self.grad_or_zeros(bias);
                for row in dy.chunks(n) {
                    for (d, &s) in db.iter_mut().zip(row) {
                        *d += s;
                    }
                }
            }
            Op::Matmul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = self.nodes[a.0].value.dims2()?;
                let (_, n) = self.nodes[b.0].value.dims2()?;
                let a_data = self.nodes[a.0].value.data().to_vec();
                let b_data = self.nodes[b.0].value.data().to_vec();
                matmul_bt_acc(self.grad_or_zeros(a), dy, &b_data, m, n, k);
                matmul_at_acc(self.grad_or_zeros(b), &a_data, dy, m, k, n);
            }
            Op::MatmulBT { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = self.nodes[a.0].value.dims2()?;
                let (v, _) = self.nodes[b.0].value.dims2()?;
                let a_data = self.nodes[a.0].value.data().to_vec();
                let b_data = self.nodes[b.0].value.data().to_vec();
                matmul_acc(self.grad_or_zeros(a), dy, &b_data, m, v, k);
                matmul_at_acc(self.grad_or_zeros(b), dy, &a_data, m, v, k);
            }
            Op::LayerNorm { x, gain, bias, cache } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let (m, n) = self.nodes[x.0].value.dims2()?;
                let xhat = cache.xhat.clone();
                let inv_std = cache.inv_std.clone();
                let g = self.nodes[gain.0].value.data().to_vec();

                {
                    let dg = self.grad_or_zeros(gain);
                    for i in 0..m {
                        for j in 0..n {
                            dg[j] += dy[i * n + j] * xhat[i * n + j];
                        }
                    }
                }
                {
                    let db = self.grad_or_zeros(bias);
                    for row in dy.chunks(n) {
                        for (d, &s) in db.iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                }
                let dx = self.grad_or_zeros(x);
                let n_f = n as f32;
                for i in 0..m {
                    let mut mean_h = 0.0f32;
                    let mut mean_hx = 0.0f32;
                    for j in 0..n {
                        let h = dy[i * n + j] * g[j];
                        mean_h += h;
                        mean_hx += h * xhat[i * n + j];
                    }
                    mean_h /= n_f;
                    mean_hx /= n_f;
                    for j in 0..n {
                        let h = dy[i * n + j] * g[j];
                        dx[i * n + j] += inv_std[i] * (h - mean_h - xhat[i * n + j] * mean_hx);
                    }
                }
            }
            Op::Gelu { x } => {
                let x = *x;
                let xv = self.nodes[x.0].value.data().to_vec();
                let dx = self.grad_or_zeros(x);
                for ((d, &s), &v) in dx.iter_mut().zip(dy).zip(&xv) {
                    *d += s * gelu_bwd(v);
                }
            }
            Op::Attention { x, w, seq, heads, cache } => {
                let x = *x;
                let w = *w;
                let (seq, heads) = (*seq, *heads);
                let (rows, hidden) = self.nodes[x.0].value.dims2()?;
                let d = hidden / heads;
                let scale = 1.0 / (d as f32).sqrt();
                let q = cache.q.clone();
                let k = cache.k.clone();
                let v = cache.v.clone();
                let probs = cache.probs.clone();
                let ctx = cache.ctx.clone();
                let x_data = self.nodes[x.0].value.data().to_vec();
                let wo = self.nodes[w.wo.0].value.data().to_vec();
                let wq = self.nodes[w.wq.0].value.data().to_vec();
                let wk = self.nodes[w.wk.0].value.data().to_vec();
                let wv = self.nodes[w.wv.0].value.data().to_vec();

                // Output projection.
                matmul_at_acc(self.grad_or_zeros(w.wo), &ctx, dy, rows, hidden, hidden);
                {
                    let dbo = self.grad_or_zeros(w.bo);
                    for row in dy.chunks(hidden) {
                        for (dst, &s) in dbo.iter_mut().zip(row) {
                            *dst += s;
                        }
                    }
                }
                let mut dctx = vec![0.0f32; rows * hidden];
                matmul_bt_acc(&mut dctx, dy, &wo, rows, hidden, hidden);

                // Attention core, independent per sequence.
                let mut dq = vec![0.0f32; rows * hidden];
                let mut dk = vec![0.0f32; rows * hidden];
                let mut dv = vec![0.0f32; rows * hidden];
                {
                    use rayon::prelude::*;
                    let (q, k, v, probs, dctx) = (&q, &k, &v, &probs, &dctx);
                    dq.par_chunks_mut(seq * hidden)
                        .zip(dk.par_chunks_mut(seq * hidden))
                        .zip(dv.par_chunks_mut(seq * hidden))
                        .enumerate()
                        .for_each(|(b, ((dq_b, dk_b), dv_b))| {
                            let base = b * seq;
                            let mut dp = vec![0.0f32; seq];
                            for h in 0..heads {
                                let off = h * d;
                                let p_head = &probs[(b * heads + h) * seq * seq..];
                                for i in 0..seq {
                                    let p_row = &p_head[i * seq..(i + 1) * seq];
                                    let dc_row = &dctx
                                        [(base + i) * hidden + off..(base + i) * hidden + off + d];
                                    let mut dot_pp = 0.0f32;
                                    for j in 0..seq {
                                        let v_row = &v[(base + j) * hidden + off
                                            ..(base + j) * hidden + off + d];
                                        let mut acc = 0.0f32;
                                        for (a, b2) in dc_row.iter().zip(v_row) {
                                            acc += a * b2;
                                        }
                                        dp[j] = acc;
                                        dot_pp += acc * p_row[j];
                                        // dV accumulation.
                                        let dv_row =
                                            &mut dv_b[j * hidden + off..j * hidden + off + d];
                                        let pj = p_row[j];
                                        if pj != 0.0 {
                                            for (dst, &s) in dv_row.iter_mut().zip(dc_row) {
                                                *dst += pj * s;
                                            }
                                        }
                                    }
                                    // Softmax backward, then score scale.
                                    let q_row = &q[(base + i) * hidden + off
                                        ..(base + i) * hidden + off + d];
                                    let dq_row =
                                        &mut dq_b[i * hidden + off..i * hidden + off + d];
                                    for j in 0..seq {
                                        let ds = p_row[j] * (dp[j] - dot_pp) * scale;
                                        if ds == 0.0 {
                                            continue;
                                        }
                                        let k_row = &k[(base + j) * hidden + off
                                            ..(base + j) * hidden + off + d];
                                        for (dst, &s) in dq_row.iter_mut().zip(k_row) {
                                            *dst += ds * s;
                                        }
                                        let dk_row =
                                            &mut dk_b[j * hidden + off..j * hidden + off + d];
                                        for (dst, &s) in dk_row.iter_mut().zip(q_row) {
                                            *dst += ds * s;
                                        }
                                    }
                                }
                            }
                        });
                }

                // Project gradients back through Q/K/V linears.
                matmul_at_acc(self.grad_or_zeros(w.wq), &x_data, &dq, rows, hidden, hidden);
                matmul_at_acc(self.grad_or_zeros(w.wk), &x_data, &dk, rows, hidden, hidden);
                matmul_at_acc(self.grad_or_zeros(w.wv), &x_data, &dv, rows, hidden, hidden);
                for (bias, dsrc) in [(w.bq, &dq), (w.bk, &dk), (w.bv, &dv)] {
                    let db = self.grad_or_zeros(bias);
                    for row in dsrc.chunks(hidden) {
                        for (dst, &s) in db.iter_mut().zip(row) {
                            *dst += s;
                        }
                    }
                }
                let dx = self.grad_or_zeros(x);
                matmul_bt_acc(dx, &dq, &wq, rows, hidden, hidden);
                matmul_bt_acc(dx, &dk, &wk, rows, hidden, hidden);
                matmul_bt_acc(dx, &dv, &wv, rows, hidden, hidden);
            }
            Op::CrossEntropy { logits, labels, ignore } => {
                let (logits, labels, ignore) = (*logits, labels.clone(), *ignore);
                let (n, c) = self.nodes[logits.0].value.dims2()?;
                let logits_data = self.nodes[logits.0].value.data().to_vec();
                let (_, grad) =
                    cross_entropy_kernel(&logits_data, n, c, &labels, ignore, true)?;
                let g = grad.expect("requested grad");
                let upstream = dy[0];
                let dl = self.grad_or_zeros(logits);
                for (d, &s) in dl.iter_mut().zip(&g) {
                    *d += upstream * s;
                }
            }
        }
        Ok(())
    }

    /// Gradient of a node after `backward`, if any reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.grads[id.0].as_deref()
    }

    /// Accumulate parameter-leaf gradients into the store.
    pub fn write_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (name, &id) in &self.params {
            let Some(grad) = self.grads[id.0].as_ref() else { continue };
            let tensor = store
                .get_mut(name)
                .ok_or_else(|| Error::invalid(format!("parameter `{name}` vanished")))?;
            if tensor.len() != grad.len() {
                return Err(Error::shape(format!("grad size changed for `{name}`")));
            }
            for (d, &s) in tensor.grad_mut().iter_mut().zip(grad) {
                *d += s;
            }
        }
        Ok(())
    }
}

fn gelu_fwd(x: f32) -> f32 {
    const S: f32 = 0.797_884_6; // sqrt(2/pi)
    const C: f32 = 0.044_715;
    0.5 * x * (1.0 + (S * (x + C * x * x * x)).tanh())
}

fn gelu_bwd(x: f32) -> f32 {
    const S: f32 = 0.797_884_6;
    const C: f32 = 0.044_715;
    let u = S * (x + C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * S * (1.0 + 3.0 * C * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences against the graph's analytic gradient
    /// for a loss built by `build`. All tensors enter as parameters.
    fn check_op_gradients<F>(store: &mut ParamStore, build: F, tol: f64)
    where
        F: Fn(&mut Graph, &ParamStore) -> NodeId,
    {
        let mut g = Graph::new();
        let loss = build(&mut g, store);
        g.backward(loss).unwrap();
        store.clear_grads();
        g.write_grads(store).unwrap();

        let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
        for name in names {
            let len = store.get(&name).unwrap().len();
            let analytic = store
                .get(&name)
                .unwrap()
                .grad()
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; len]);
            for i in 0..len {
                let eps = 1e-2f32;
                let orig = store.get(&name).unwrap().data()[i];
                store.get_mut(&name).unwrap().data_mut()[i] = orig + eps;
                let hi_at = store.get(&name).unwrap().data()[i];
                let mut gh = Graph::new();
                let l = build(&mut gh, store);
                let hi = gh.scalar(l);
                store.get_mut(&name).unwrap().data_mut()[i] = orig - eps;
                let lo_at = store.get(&name).unwrap().data()[i];
                let mut gl = Graph::new();
                let l = build(&mut gl, store);
                let lo = gl.scalar(l);
                store.get_mut(&name).unwrap().data_mut()[i] = orig;

                let fd = (hi - lo) / ((hi_at - lo_at) as f64);
                let an = analytic[i] as f64;
                let denom = fd.abs().max(an.abs()).max(0.05);
                let rel = (fd - an).abs() / denom;
                assert!(
                    rel < tol,
                    "{name}[{i}]: fd {fd:.6e} vs analytic {an:.6e} (rel {rel:.3e})"
                );
            }
        }
    }

    fn randn_store(entries: &[(&str, &[usize])], seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, shape) in entries {
            store
                .insert(*name, Tensor::randn(shape, 0.5, &mut rng), true)
                .unwrap();
        }
        store
    }

    #[test]
    fn matmul_bias_ce_gradients() {
        let mut store = randn_store(&[("x", &[3, 4]), ("w", &[4, 5]), ("b", &[5])], 1);
        check_op_gradients(
            &mut store,
            |g, s| {
                let x = g.param(s, "x").unwrap();
                let w = g.param(s, "w").unwrap();
                let b = g.param(s, "b").unwrap();
                let y = g.linear(x, w, b).unwrap();
                g.cross_entropy_loss(y, &[0, 3, -1], -1).unwrap()
            },
            2e-2,
        );
    }

    #[test]
    fn matmul_bt_gradients_share_the_table() {
        // Tied use: the same table feeds a gather and the transposed
        // output projection, as the lexical layer does.
        let mut store = randn_store(&[("emb", &[6, 4])], 2);
        check_op_gradients(
            &mut store,
            |g, s| {
                let emb = g.param(s, "emb").unwrap();
                let x = g.gather(emb, &[1, 4, 2]).unwrap();
                let logits = g.matmul_bt(x, emb).unwrap();
                g.cross_entropy_loss(logits, &[5, 0, 2], -1).unwrap()
            },
            2e-2,
        );
    }

    #[test]
    fn layer_norm_gelu_gradients() {
        let mut store = randn_store(&[("x", &[4, 6]), ("g", &[6]), ("b", &[6]), ("w", &[6, 3])], 3);
        check_op_gradients(
            &mut store,
            |g, s| {
                let x = g.param(s, "x").unwrap();
                let gain = g.param(s, "g").unwrap();
                let bias = g.param(s, "b").unwrap();
                let w = g.param(s, "w").unwrap();
                let n = g.layer_norm(x, gain, bias).unwrap();
                let a = g.gelu(n);
                let y = g.matmul(a, w).unwrap();
                g.cross_entropy_loss(y, &[0, 1, 2, 0], -1).unwrap()
            },
            2e-2,
        );
    }

    #[test]
    fn attention_gradients_with_padding() {
        let entries: Vec<(&str, &[usize])> = vec![
            ("x", &[6, 8]),
            ("wq", &[8, 8]),
            ("bq", &[8]),
            ("wk", &[8, 8]),
            ("bk", &[8]),
            ("wv", &[8, 8]),
            ("bv", &[8]),
            ("wo", &[8, 8]),
            ("bo", &[8]),
            ("head", &[8, 4]),
        ];
        let mut store = randn_store(&entries, 4);
        // Two sequences of length 3; last position of the second masked.
        let mask = vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        check_op_gradients(
            &mut store,
            |g, s| {
                let x = g.param(s, "x").unwrap();
                let w = AttentionWeights {
                    wq: g.param(s, "wq").unwrap(),
                    bq: g.param(s, "bq").unwrap(),
                    wk: g.param(s, "wk").unwrap(),
                    bk: g.param(s, "bk").unwrap(),
                    wv: g.param(s, "wv").unwrap(),
                    bv: g.param(s, "bv").unwrap(),
                    wo: g.param(s, "wo").unwrap(),
                    bo: g.param(s, "bo").unwrap(),
                };
                let a = g.attention(x, w, &mask, 2, 3, 2).unwrap();
                let head = g.param(s, "head").unwrap();
                let y = g.matmul(a, head).unwrap();
                g.cross_entropy_loss(y, &[0, 1, 2, 3, 0, -1], -1).unwrap()
            },
            3e-2,
        );
    }

    #[test]
    fn residual_add_gradients() {
        let mut store = randn_store(&[("x", &[2, 3]), ("w", &[3, 3])], 5);
        check_op_gradients(
            &mut store,
            |g, s| {
                let x = g.param(s, "x").unwrap();
                let w = g.param(s, "w").unwrap();
                let y = g.matmul(x, w).unwrap();
                let r = g.add(x, y).unwrap();
                g.cross_entropy_loss(r, &[0, 2], -1).unwrap()
            },
            2e-2,
        );
    }

    #[test]
    fn masked_keys_receive_no_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        for name in ["wq", "wk", "wv", "wo"] {
            store.insert(name, Tensor::randn(&[4, 4], 0.3, &mut rng), true).unwrap();
        }
        for name in ["bq", "bk", "bv", "bo"] {
            store.insert(name, Tensor::zeros(&[4]), true).unwrap();
        }
        store.insert("x", Tensor::randn(&[3, 4], 1.0, &mut rng), true).unwrap();

        let mask = vec![1.0, 1.0, 0.0];
        let mut g = Graph::new();
        let x = g.param(&store, "x").unwrap();
        let w = AttentionWeights {
            wq: g.param(&store, "wq").unwrap(),
            bq: g.param(&store, "bq").unwrap(),
            wk: g.param(&store, "wk").unwrap(),
            bk: g.param(&store, "bk").unwrap(),
            wv: g.param(&store, "wv").unwrap(),
            bv: g.param(&store, "bv").unwrap(),
            wo: g.param(&store, "wo").unwrap(),
            bo: g.param(&store, "bo").unwrap(),
        };
        let out = g.attention(x, w, &mask, 1, 3, 2).unwrap();
        let baseline = g.value(out).data().to_vec();

        // Changing the PAD row must not affect the unmasked outputs.
        store.get_mut("x").unwrap().data_mut()[8..12]
            .iter_mut()
            .for_each(|v| *v += 100.0);
        let mut g2 = Graph::new();
        let x = g2.param(&store, "x").unwrap();
        let w = AttentionWeights {
            wq: g2.param(&store, "wq").unwrap(),
            bq: g2.param(&store, "bq").unwrap(),
            wk: g2.param(&store, "wk").unwrap(),
            bk: g2.param(&store, "bk").unwrap(),
            wv: g2.param(&store, "wv").unwrap(),
            bv: g2.param(&store, "bv").unwrap(),
            wo: g2.param(&store, "wo").unwrap(),
            bo: g2.param(&store, "bo").unwrap(),
        };
        let out2 = g2.attention(x, w, &mask, 1, 3, 2).unwrap();
        let shifted = g2.value(out2).data();
        for i in 0..8 {
            assert_eq!(baseline[i].to_bits(), shifted[i].to_bits(), "row leak at {i}");
        }
    }

    #[test]
    fn forward_is_pure() {
        let mut store = randn_store(&[("x", &[2, 4]), ("w", &[4, 4])], 9);
        let run = |store: &ParamStore| {
            let mut g = Graph::new();
            let x = g.param(store, "x").unwrap();
            let w = g.param(store, "w").unwrap();
            let y = g.matmul(x, w).unwrap();
            g.value(y).data().to_vec()
        };
        let a = run(&store);
        let b = run(&store);
        assert_eq!(a, b);
        let _ = &mut store;
    }
}
