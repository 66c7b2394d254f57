//! Tape-based reverse-mode autodiff over [`Matrix`] values.
//!
//! A [`Graph`] is rebuilt per forward pass: each operation records its
//! parents and result on the tape, `backward` walks the tape in reverse
//! and accumulates gradients. The op set is exactly what the encoders,
//! fusion assemblies, and task losses need; losses are fused ops with
//! analytic, numerically stable backward rules.

use super::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// (R,C) plus a (1,C) row broadcast over all rows.
    AddRow(NodeId, NodeId),
    AddConst(NodeId, Matrix),
    Scale(NodeId, f64),
    Mul(NodeId, NodeId),
    MulConst(NodeId, Matrix),
    MatMul {
        a: NodeId,
        b: NodeId,
        ta: bool,
        tb: bool,
    },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols {
        src: NodeId,
        start: usize,
    },
    SliceRows {
        src: NodeId,
        start: usize,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    },
    /// Per-sample weighted binary cross-entropy on logits with a
    /// per-class positive weight; produces a scalar.
    BceWithLogits {
        logits: NodeId,
        targets: Matrix,
        pos_weight: Vec<f64>,
        sample_weights: Vec<f64>,
    },
    /// Per-sample weighted softmax cross-entropy on logits; scalar.
    CrossEntropy {
        logits: NodeId,
        classes: Vec<usize>,
        sample_weights: Vec<f64>,
    },
    /// Fixed-coefficient sum of scalar nodes.
    SumScalars(Vec<(NodeId, f64)>),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target w.r.t. `id`; `None` when
    /// the node did not influence the target.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        debug_assert_eq!((va.rows(), va.cols()), (vb.rows(), vb.cols()));
        let mut out = va.clone();
        out.add_assign(vb);
        self.push(out, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        debug_assert_eq!(vr.rows(), 1);
        debug_assert_eq!(va.cols(), vr.cols());
        let mut out = va.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c) + vr.get(0, c);
                out.set(r, c, v);
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn add_const(&mut self, a: NodeId, c: Matrix) -> NodeId {
        let va = &self.nodes[a.0].value;
        debug_assert_eq!((va.rows(), va.cols()), (c.rows(), c.cols()));
        let mut out = va.clone();
        for (o, k) in out.data_mut().iter_mut().zip(c.data().iter()) {
            *o += k;
        }
        self.push(out, Op::AddConst(a, c))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let out = self.nodes[a.0].value.map(|v| v * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        debug_assert_eq!((va.rows(), va.cols()), (vb.rows(), vb.cols()));
        let data: Vec<f64> = va
            .data()
            .iter()
            .zip(vb.data().iter())
            .map(|(x, y)| x * y)
            .collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn mul_const(&mut self, a: NodeId, mask: Matrix) -> NodeId {
        let va = &self.nodes[a.0].value;
        debug_assert_eq!((va.rows(), va.cols()), (mask.rows(), mask.cols()));
        let data: Vec<f64> = va
            .data()
            .iter()
            .zip(mask.data().iter())
            .map(|(x, y)| x * y)
            .collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data);
        self.push(out, Op::MulConst(a, mask))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> NodeId {
        let out = self.nodes[a.0].value.matmul(&self.nodes[b.0].value, ta, tb);
        self.push(out, Op::MatMul { a, b, ta, tb })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut out = Matrix::zeros(rows, total);
        let mut at = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[at..at + v.cols()].copy_from_slice(v.row(r));
            }
            at += v.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.nodes[parts[0].0].value.cols();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.rows()).sum();
        let mut out = Matrix::zeros(total, cols);
        let mut at = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.cols(), cols, "concat_rows col mismatch");
            for r in 0..v.rows() {
                out.row_mut(at + r).copy_from_slice(v.row(r));
            }
            at += v.rows();
        }
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let v = &self.nodes[src.0].value;
        assert!(start + len <= v.cols());
        let mut out = Matrix::zeros(v.rows(), len);
        for r in 0..v.rows() {
            out.row_mut(r).copy_from_slice(&v.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { src, start })
    }

    pub fn slice_rows(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let v = &self.nodes[src.0].value;
        assert!(start + len <= v.rows());
        let mut out = Matrix::zeros(len, v.cols());
        for r in 0..len {
            out.row_mut(r).copy_from_slice(v.row(start + r));
        }
        self.push(out, Op::SliceRows { src, start })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.nodes[a.0].value.map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.nodes[a.0].value.map(stable_sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.nodes[a.0].value.map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Row-wise softmax. `-inf` entries (attention masking) come out as
    /// exactly zero; each row must keep at least one finite entry.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value;
        let mut out = Matrix::zeros(v.rows(), v.cols());
        for r in 0..v.rows() {
            let row = v.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            debug_assert!(max.is_finite(), "softmax row fully masked");
            let mut sum = 0.0;
            let orow = out.row_mut(r);
            for (o, &x) in orow.iter_mut().zip(row.iter()) {
                *o = (x - max).exp();
                sum += *o;
            }
            for o in orow.iter_mut() {
                *o /= sum;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Per-row layer normalization with learned gain and bias (1,C).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> NodeId {
        let v = &self.nodes[x.0].value;
        let g = &self.nodes[gain.0].value;
        let b = &self.nodes[bias.0].value;
        debug_assert_eq!(g.rows(), 1);
        debug_assert_eq!(b.rows(), 1);
        debug_assert_eq!(g.cols(), v.cols());
        let c = v.cols() as f64;
        let mut out = Matrix::zeros(v.rows(), v.cols());
        for r in 0..v.rows() {
            let row = v.row(r);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c;
            let inv = 1.0 / (var + eps).sqrt();
            let orow = out.row_mut(r);
            for j in 0..row.len() {
                orow[j] = (row[j] - mean) * inv * g.get(0, j) + b.get(0, j);
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, eps })
    }

    /// Scalar loss: Σ_i w_i · mean_c [ pw_c·y·softplus(−x) + (1−y)·softplus(x) ].
    /// `sample_weights` carry the batch averaging (and any per-sample
    /// label masking); they are applied as given, not renormalized here.
    pub fn bce_with_logits(
        &mut self,
        logits: NodeId,
        targets: Matrix,
        pos_weight: Vec<f64>,
        sample_weights: Vec<f64>,
    ) -> NodeId {
        let v = &self.nodes[logits.0].value;
        debug_assert_eq!((v.rows(), v.cols()), (targets.rows(), targets.cols()));
        debug_assert_eq!(pos_weight.len(), v.cols());
        debug_assert_eq!(sample_weights.len(), v.rows());
        let c = v.cols() as f64;
        let mut total = 0.0;
        for r in 0..v.rows() {
            if sample_weights[r] == 0.0 {
                continue;
            }
            let mut row_loss = 0.0;
            for j in 0..v.cols() {
                let x = v.get(r, j);
                let y = targets.get(r, j);
                row_loss += pos_weight[j] * y * softplus(-x) + (1.0 - y) * softplus(x);
            }
            total += sample_weights[r] * row_loss / c;
        }
        self.push(
            Matrix::scalar(total),
            Op::BceWithLogits {
                logits,
                targets,
                pos_weight,
                sample_weights,
            },
        )
    }

    /// Scalar loss: Σ_i w_i · (logsumexp(x_i) − x_i[class_i]).
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        classes: Vec<usize>,
        sample_weights: Vec<f64>,
    ) -> NodeId {
        let v = &self.nodes[logits.0].value;
        debug_assert_eq!(classes.len(), v.rows());
        debug_assert_eq!(sample_weights.len(), v.rows());
        let mut total = 0.0;
        for r in 0..v.rows() {
            if sample_weights[r] == 0.0 {
                continue;
            }
            let row = v.row(r);
            debug_assert!(classes[r] < row.len(), "class index out of range");
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
            total += sample_weights[r] * (lse - row[classes[r]]);
        }
        self.push(
            Matrix::scalar(total),
            Op::CrossEntropy {
                logits,
                classes,
                sample_weights,
            },
        )
    }

    pub fn sum_scalars(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        assert!(!terms.is_empty());
        let mut total = 0.0;
        for (id, k) in terms {
            let v = &self.nodes[id.0].value;
            debug_assert!(v.is_scalar());
            total += k * v.scalar_value();
        }
        self.push(Matrix::scalar(total), Op::SumScalars(terms.to_vec()))
    }

    fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    /// Reverse pass from a scalar node. Gradients of every contributing
    /// node are available through [`Graph::grad`] afterwards.
    pub fn backward(&mut self, loss: NodeId) {
        assert!(self.nodes[loss.0].value.is_scalar(), "backward target must be scalar");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Matrix>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    Self::accumulate(&mut grads, a, g.clone());
                    Self::accumulate(&mut grads, b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let (a, row) = (*a, *row);
                    let mut rg = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            let v = rg.get(0, c) + g.get(r, c);
                            rg.set(0, c, v);
                        }
                    }
                    Self::accumulate(&mut grads, a, g.clone());
                    Self::accumulate(&mut grads, row, rg);
                }
                Op::AddConst(a, _) => {
                    let a = *a;
                    Self::accumulate(&mut grads, a, g.clone());
                }
                Op::Scale(a, k) => {
                    let (a, k) = (*a, *k);
                    Self::accumulate(&mut grads, a, g.map(|v| v * k));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let va = self.nodes[a.0].value.clone();
                    let vb = self.nodes[b.0].value.clone();
                    let da = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect(),
                    );
                    let db = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect(),
                    );
                    Self::accumulate(&mut grads, a, da);
                    Self::accumulate(&mut grads, b, db);
                }
                Op::MulConst(a, mask) => {
                    let a = *a;
                    let da = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(mask.data()).map(|(x, y)| x * y).collect(),
                    );
                    Self::accumulate(&mut grads, a, da);
                }
                Op::MatMul { a, b, ta, tb } => {
                    let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    let (da, db) = match (ta, tb) {
                        (false, false) => (g.matmul(vb, false, true), va.matmul(&g, true, false)),
                        (false, true) => (g.matmul(vb, false, false), g.matmul(va, true, false)),
                        (true, false) => (vb.matmul(&g, false, true), va.matmul(&g, false, false)),
                        (true, true) => (vb.matmul(&g, true, true), g.matmul(va, true, true)),
                    };
                    Self::accumulate(&mut grads, a, da);
                    Self::accumulate(&mut grads, b, db);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let cols = self.nodes[p.0].value.cols();
                        let mut dp = Matrix::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[at..at + cols]);
                        }
                        at += cols;
                        Self::accumulate(&mut grads, p, dp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        let mut dp = Matrix::zeros(rows, g.cols());
                        for r in 0..rows {
                            dp.row_mut(r).copy_from_slice(g.row(at + r));
                        }
                        at += rows;
                        Self::accumulate(&mut grads, p, dp);
                    }
                }
                Op::SliceCols { src, start } => {
                    let (src, start) = (*src, *start);
                    let v = &self.nodes[src.0].value;
                    let mut dp = Matrix::zeros(v.rows(), v.cols());
                    for r in 0..g.rows() {
                        dp.row_mut(r)[start..start + g.cols()].copy_from_slice(g.row(r));
                    }
                    Self::accumulate(&mut grads, src, dp);
                }
                Op::SliceRows { src, start } => {
                    let (src, start) = (*src, *start);
                    let v = &self.nodes[src.0].value;
                    let mut dp = Matrix::zeros(v.rows(), v.cols());
                    for r in 0..g.rows() {
                        dp.row_mut(start + r).copy_from_slice(g.row(r));
                    }
                    Self::accumulate(&mut grads, src, dp);
                }
                Op::Relu(a) => {
                    let a = *a;
                    let out = &self.nodes[idx].value;
                    let da = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(out.data())
                            .map(|(x, y)| if *y > 0.0 { *x } else { 0.0 })
                            .collect(),
                    );
                    Self::accumulate(&mut grads, a, da);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let out = &self.nodes[idx].value;
                    let da = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(out.data())
                            .map(|(x, s)| x * s * (1.0 - s))
                            .collect(),
                    );
                    Self::accumulate(&mut grads, a, da);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let out = &self.nodes[idx].value;
                    let da = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(out.data())
                            .map(|(x, t)| x * (1.0 - t * t))
                            .collect(),
                    );
                    Self::accumulate(&mut grads, a, da);
                }
                Op::SoftmaxRows(a) => {
                    let a = *a;
                    let y = &self.nodes[idx].value;
                    let mut da = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let dot: f64 = gr.iter().zip(yr.iter()).map(|(x, y)| x * y).sum();
                        let dr = da.row_mut(r);
                        for j in 0..gr.len() {
                            dr[j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    Self::accumulate(&mut grads, a, da);
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let (x, gain, bias, eps) = (*x, *gain, *bias, *eps);
                    let v = self.nodes[x.0].value.clone();
                    let gn = self.nodes[gain.0].value.clone();
                    let c = v.cols() as f64;
                    let mut dx = Matrix::zeros(v.rows(), v.cols());
                    let mut dgain = Matrix::zeros(1, v.cols());
                    let mut dbias = Matrix::zeros(1, v.cols());
                    for r in 0..v.rows() {
                        let row = v.row(r);
                        let mean = row.iter().sum::<f64>() / c;
                        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c;
                        let inv = 1.0 / (var + eps).sqrt();
                        let gr = g.row(r);
                        // xhat and dxhat for this row
                        let mut m_dxhat = 0.0;
                        let mut m_dxhat_xhat = 0.0;
                        let mut xhat = vec![0.0; row.len()];
                        let mut dxhat = vec![0.0; row.len()];
                        for j in 0..row.len() {
                            xhat[j] = (row[j] - mean) * inv;
                            dxhat[j] = gr[j] * gn.get(0, j);
                            m_dxhat += dxhat[j];
                            m_dxhat_xhat += dxhat[j] * xhat[j];
                            dgain.row_mut(0)[j] += gr[j] * xhat[j];
                            dbias.row_mut(0)[j] += gr[j];
                        }
                        m_dxhat /= c;
                        m_dxhat_xhat /= c;
                        let dr = dx.row_mut(r);
                        for j in 0..row.len() {
                            dr[j] = (dxhat[j] - m_dxhat - xhat[j] * m_dxhat_xhat) * inv;
                        }
                    }
                    Self::accumulate(&mut grads, x, dx);
                    Self::accumulate(&mut grads, gain, dgain);
                    Self::accumulate(&mut grads, bias, dbias);
                }
                Op::BceWithLogits {
                    logits,
                    targets,
                    pos_weight,
                    sample_weights,
                } => {
                    let logits = *logits;
                    let v = &self.nodes[logits.0].value;
                    let c = v.cols() as f64;
                    let gs = g.scalar_value();
                    let mut da = Matrix::zeros(v.rows(), v.cols());
                    for r in 0..v.rows() {
                        let w = sample_weights[r];
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..v.cols() {
                            let x = v.get(r, j);
                            let y = targets.get(r, j);
                            let d = (1.0 - y) * stable_sigmoid(x)
                                - pos_weight[j] * y * stable_sigmoid(-x);
                            da.set(r, j, gs * w * d / c);
                        }
                    }
                    Self::accumulate(&mut grads, logits, da);
                }
                Op::CrossEntropy {
                    logits,
                    classes,
                    sample_weights,
                } => {
                    let logits = *logits;
                    let classes = classes.clone();
                    let sample_weights = sample_weights.clone();
                    let v = &self.nodes[logits.0].value;
                    let gs = g.scalar_value();
                    let mut da = Matrix::zeros(v.rows(), v.cols());
                    for r in 0..v.rows() {
                        let w = sample_weights[r];
                        if w == 0.0 {
                            continue;
                        }
                        let row = v.row(r);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|&x| (x - max).exp()).sum();
                        let dr = da.row_mut(r);
                        for j in 0..row.len() {
                            let p = (row[j] - max).exp() / denom;
                            dr[j] = gs * w * (p - if j == classes[r] { 1.0 } else { 0.0 });
                        }
                    }
                    Self::accumulate(&mut grads, logits, da);
                }
                Op::SumScalars(terms) => {
                    let terms = terms.clone();
                    let gs = g.scalar_value();
                    for (id, k) in terms {
                        Self::accumulate(&mut grads, id, Matrix::scalar(gs * k));
                    }
                }
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
    }
}
