//! Sequence encoders: masked mean pooling with an MLP stack, a
//! bidirectional LSTM read at the sequence edges, and a transformer
//! encoder pooled at a prepended CLS position.
//!
//! All three consume a padded `(S, d)` matrix plus a step mask and emit
//! a `(1, output_dim)` node. Masked steps never leak: pooling weights
//! them zero, the LSTM skips them, and attention assigns them exactly
//! zero weight, so appending padding leaves encodings bit-identical.

use crate::backbones::ForwardCtx;
use crate::error::{Error, Result};
use crate::nn::{Matrix, NodeId, ParamId, ParamLayout};

pub trait SequenceEncoder: Send + Sync {
    fn output_dim(&self) -> usize;
    fn encode(&self, ctx: &mut ForwardCtx, seq: &Matrix, mask: &[bool]) -> Result<NodeId>;
}

fn active_steps(mask: &[bool], rows: usize) -> Result<Vec<usize>> {
    let steps: Vec<usize> = mask
        .iter()
        .take(rows)
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    if steps.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(steps)
}

/// Row of pooling weights: 1/count on active steps, 0 elsewhere.
fn mean_weights(mask: &[bool], rows: usize) -> Result<Vec<f64>> {
    let steps = active_steps(mask, rows)?;
    let inv = 1.0 / steps.len() as f64;
    let mut weights = vec![0.0; rows];
    for s in steps {
        weights[s] = inv;
    }
    Ok(weights)
}

/// Mean over the unmasked steps of a sequence.
pub fn masked_mean(seq: &Matrix, mask: &[bool]) -> Result<Vec<f64>> {
    let weights = mean_weights(mask, seq.rows())?;
    let mut out = vec![0.0; seq.cols()];
    for (r, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(seq.row(r)) {
            *o += w * v;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Mean pooling + MLP
// ---------------------------------------------------------------------------

pub struct AvgEncoder {
    hidden_dims: Vec<usize>,
    dropout: f64,
    layers: Vec<(ParamId, ParamId)>,
}

impl AvgEncoder {
    pub fn build(
        prefix: &str,
        input_dim: usize,
        hidden_dims: &[usize],
        dropout: f64,
        layout: &mut ParamLayout,
    ) -> Result<Self> {
        if hidden_dims.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "{prefix}: mean-pool encoder needs a non-empty hidden stack"
            )));
        }
        let mut layers = Vec::with_capacity(hidden_dims.len());
        let mut d_in = input_dim;
        for (i, &d_out) in hidden_dims.iter().enumerate() {
            let w = layout.register(format!("{prefix}/l{i}/weight"), d_in, d_out);
            let b = layout.register(format!("{prefix}/l{i}/bias"), 1, d_out);
            layers.push((w, b));
            d_in = d_out;
        }
        Ok(AvgEncoder {
            hidden_dims: hidden_dims.to_vec(),
            dropout,
            layers,
        })
    }
}

impl SequenceEncoder for AvgEncoder {
    fn output_dim(&self) -> usize {
        *self.hidden_dims.last().unwrap()
    }

    fn encode(&self, ctx: &mut ForwardCtx, seq: &Matrix, mask: &[bool]) -> Result<NodeId> {
        let weights = mean_weights(mask, seq.rows())?;
        let w = ctx.graph.constant(Matrix::row_vector(&weights));
        let x = ctx.graph.constant(seq.clone());
        let mut h = ctx.graph.matmul(w, x, false, false);
        for &(wid, bid) in &self.layers {
            let wl = ctx.leaf(wid);
            let bl = ctx.leaf(bid);
            let lin = ctx.graph.matmul(h, wl, false, false);
            let biased = ctx.graph.add(lin, bl);
            let act = ctx.graph.relu(biased);
            h = ctx.dropout(act, self.dropout);
        }
        Ok(h)
    }
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM
// ---------------------------------------------------------------------------

struct LstmDirection {
    wx: ParamId,
    wh: ParamId,
    bias: ParamId,
}

impl LstmDirection {
    fn build(prefix: &str, input_dim: usize, hidden: usize, layout: &mut ParamLayout) -> Self {
        LstmDirection {
            wx: layout.register(format!("{prefix}/wx"), input_dim, 4 * hidden),
            wh: layout.register(format!("{prefix}/wh"), hidden, 4 * hidden),
            bias: layout.register(format!("{prefix}/lstm_bias"), 1, 4 * hidden),
        }
    }

    /// Runs the recurrence over the given step indices and returns the
    /// final hidden state.
    fn run(
        &self,
        ctx: &mut ForwardCtx,
        seq_node: NodeId,
        steps: &[usize],
        hidden: usize,
    ) -> NodeId {
        let wx = ctx.leaf(self.wx);
        let wh = ctx.leaf(self.wh);
        let b = ctx.leaf(self.bias);
        let mut h = ctx.graph.constant(Matrix::zeros(1, hidden));
        let mut c = ctx.graph.constant(Matrix::zeros(1, hidden));
        for &t in steps {
            let x_t = ctx.graph.slice_rows(seq_node, t, 1);
            let zx = ctx.graph.matmul(x_t, wx, false, false);
            let zh = ctx.graph.matmul(h, wh, false, false);
            let z0 = ctx.graph.add(zx, zh);
            let z = ctx.graph.add(z0, b);
            let i_gate = {
                let s = ctx.graph.slice_cols(z, 0, hidden);
                ctx.graph.sigmoid(s)
            };
            let f_gate = {
                let s = ctx.graph.slice_cols(z, hidden, hidden);
                ctx.graph.sigmoid(s)
            };
            let g_gate = {
                let s = ctx.graph.slice_cols(z, 2 * hidden, hidden);
                ctx.graph.tanh(s)
            };
            let o_gate = {
                let s = ctx.graph.slice_cols(z, 3 * hidden, hidden);
                ctx.graph.sigmoid(s)
            };
            let fc = ctx.graph.mul(f_gate, c);
            let ig = ctx.graph.mul(i_gate, g_gate);
            c = ctx.graph.add(fc, ig);
            let ct = ctx.graph.tanh(c);
            h = ctx.graph.mul(o_gate, ct);
        }
        h
    }
}

pub struct BiLstmEncoder {
    hidden: usize,
    dropout: f64,
    forward: LstmDirection,
    backward: LstmDirection,
}

impl BiLstmEncoder {
    pub fn build(
        prefix: &str,
        input_dim: usize,
        lstm_dim: usize,
        dropout: f64,
        layout: &mut ParamLayout,
    ) -> Result<Self> {
        if lstm_dim == 0 {
            return Err(Error::InvalidConfig(format!("{prefix}: lstm_dim must be positive")));
        }
        Ok(BiLstmEncoder {
            hidden: lstm_dim,
            dropout,
            forward: LstmDirection::build(&format!("{prefix}/fwd"), input_dim, lstm_dim, layout),
            backward: LstmDirection::build(&format!("{prefix}/bwd"), input_dim, lstm_dim, layout),
        })
    }
}

impl SequenceEncoder for BiLstmEncoder {
    fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// Concatenates the forward state at the last unmasked step with
    /// the backward state at the first, so padding never corrupts the
    /// representation.
    fn encode(&self, ctx: &mut ForwardCtx, seq: &Matrix, mask: &[bool]) -> Result<NodeId> {
        let steps = active_steps(mask, seq.rows())?;
        let seq_node = ctx.graph.constant(seq.clone());
        let h_fwd = self.forward.run(ctx, seq_node, &steps, self.hidden);
        let reversed: Vec<usize> = steps.iter().rev().copied().collect();
        let h_bwd = self.backward.run(ctx, seq_node, &reversed, self.hidden);
        let both = ctx.graph.concat_cols(&[h_fwd, h_bwd]);
        Ok(ctx.dropout(both, self.dropout))
    }
}

// ---------------------------------------------------------------------------
// Transformer encoder with CLS pooling
// ---------------------------------------------------------------------------

struct AttentionLayer {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

pub struct TransformerEncoder {
    model_dim: usize,
    heads: usize,
    dropout: f64,
    input_proj: (ParamId, ParamId),
    cls: ParamId,
    layers: Vec<AttentionLayer>,
}

impl TransformerEncoder {
    pub fn build(
        prefix: &str,
        input_dim: usize,
        model_dim: usize,
        n_layers: usize,
        heads: usize,
        ff_dim: usize,
        dropout: f64,
        layout: &mut ParamLayout,
    ) -> Result<Self> {
        if heads == 0 || model_dim % heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "{prefix}: head count {heads} must divide model dim {model_dim}"
            )));
        }
        if n_layers == 0 {
            return Err(Error::InvalidConfig(format!("{prefix}: needs at least one layer")));
        }
        let input_proj = (
            layout.register(format!("{prefix}/proj/weight"), input_dim, model_dim),
            layout.register(format!("{prefix}/proj/bias"), 1, model_dim),
        );
        let cls = layout.register(format!("{prefix}/cls"), 1, model_dim);
        let layers = (0..n_layers)
            .map(|l| {
                let p = format!("{prefix}/layer{l}");
                AttentionLayer {
                    wq: layout.register(format!("{p}/attn/wq"), model_dim, model_dim),
                    bq: layout.register(format!("{p}/attn/bq/bias"), 1, model_dim),
                    wk: layout.register(format!("{p}/attn/wk"), model_dim, model_dim),
                    bk: layout.register(format!("{p}/attn/bk/bias"), 1, model_dim),
                    wv: layout.register(format!("{p}/attn/wv"), model_dim, model_dim),
                    bv: layout.register(format!("{p}/attn/bv/bias"), 1, model_dim),
                    wo: layout.register(format!("{p}/attn/wo"), model_dim, model_dim),
                    bo: layout.register(format!("{p}/attn/bo/bias"), 1, model_dim),
                    ln1_gain: layout.register(format!("{p}/ln1/ln_gain"), 1, model_dim),
                    ln1_bias: layout.register(format!("{p}/ln1/ln_bias"), 1, model_dim),
                    ff1_w: layout.register(format!("{p}/ff1/weight"), model_dim, ff_dim),
                    ff1_b: layout.register(format!("{p}/ff1/bias"), 1, ff_dim),
                    ff2_w: layout.register(format!("{p}/ff2/weight"), ff_dim, model_dim),
                    ff2_b: layout.register(format!("{p}/ff2/bias"), 1, model_dim),
                    ln2_gain: layout.register(format!("{p}/ln2/ln_gain"), 1, model_dim),
                    ln2_bias: layout.register(format!("{p}/ln2/ln_bias"), 1, model_dim),
                }
            })
            .collect();
        Ok(TransformerEncoder {
            model_dim,
            heads,
            dropout,
            input_proj,
            cls,
            layers,
        })
    }

    /// Sinusoidal position encodings over `len` positions.
    fn position_encodings(len: usize, dim: usize) -> Matrix {
        let mut pe = Matrix::zeros(len, dim);
        for pos in 0..len {
            for i in 0..dim {
                let exponent = 2.0 * (i / 2) as f64 / dim as f64;
                let angle = pos as f64 / 10000f64.powf(exponent);
                pe.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
            }
        }
        pe
    }
}

impl SequenceEncoder for TransformerEncoder {
    fn output_dim(&self) -> usize {
        self.model_dim
    }

    fn encode(&self, ctx: &mut ForwardCtx, seq: &Matrix, mask: &[bool]) -> Result<NodeId> {
        active_steps(mask, seq.rows())?;
        let s = seq.rows();
        let m = self.model_dim;
        let dk = m / self.heads;

        let x_in = ctx.graph.constant(seq.clone());
        let pw = ctx.leaf(self.input_proj.0);
        let pb = ctx.leaf(self.input_proj.1);
        let projected = ctx.graph.matmul(x_in, pw, false, false);
        let projected = ctx.graph.add_row(projected, pb);
        let cls = ctx.leaf(self.cls);
        let mut x = ctx.graph.concat_rows(&[cls, projected]);
        x = ctx.graph.add_const(x, Self::position_encodings(s + 1, m));

        // Additive key mask shared by every query row; the CLS position
        // is always attendable.
        let mut mask_row = vec![0.0f64; s + 1];
        for (i, &active) in mask.iter().take(s).enumerate() {
            if !active {
                mask_row[i + 1] = f64::NEG_INFINITY;
            }
        }
        let mut mask_mat = Matrix::zeros(s + 1, s + 1);
        for r in 0..s + 1 {
            mask_mat.row_mut(r).copy_from_slice(&mask_row);
        }

        for layer in &self.layers {
            let wq = ctx.leaf(layer.wq);
            let bq = ctx.leaf(layer.bq);
            let wk = ctx.leaf(layer.wk);
            let bk = ctx.leaf(layer.bk);
            let wv = ctx.leaf(layer.wv);
            let bv = ctx.leaf(layer.bv);
            let q = ctx.graph.matmul(x, wq, false, false);
            let q = ctx.graph.add_row(q, bq);
            let k = ctx.graph.matmul(x, wk, false, false);
            let k = ctx.graph.add_row(k, bk);
            let v = ctx.graph.matmul(x, wv, false, false);
            let v = ctx.graph.add_row(v, bv);

            let mut head_outputs = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = ctx.graph.slice_cols(q, h * dk, dk);
                let kh = ctx.graph.slice_cols(k, h * dk, dk);
                let vh = ctx.graph.slice_cols(v, h * dk, dk);
                let scores = ctx.graph.matmul(qh, kh, false, true);
                let scaled = ctx.graph.scale(scores, 1.0 / (dk as f64).sqrt());
                let masked = ctx.graph.add_const(scaled, mask_mat.clone());
                let attn = ctx.graph.softmax_rows(masked);
                if let Some(probe) = ctx.attn_probe.as_mut() {
                    probe.push(ctx.graph.value(attn).clone());
                }
                head_outputs.push(ctx.graph.matmul(attn, vh, false, false));
            }
            let merged = ctx.graph.concat_cols(&head_outputs);
            let wo = ctx.leaf(layer.wo);
            let bo = ctx.leaf(layer.bo);
            let out = ctx.graph.matmul(merged, wo, false, false);
            let out = ctx.graph.add_row(out, bo);
            let out = ctx.dropout(out, self.dropout);
            let res = ctx.graph.add(x, out);
            let g1 = ctx.leaf(layer.ln1_gain);
            let b1 = ctx.leaf(layer.ln1_bias);
            x = ctx.graph.layer_norm(res, g1, b1, 1e-5);

            let f1w = ctx.leaf(layer.ff1_w);
            let f1b = ctx.leaf(layer.ff1_b);
            let f2w = ctx.leaf(layer.ff2_w);
            let f2b = ctx.leaf(layer.ff2_b);
            let ff = ctx.graph.matmul(x, f1w, false, false);
            let ff = ctx.graph.add_row(ff, f1b);
            let ff = ctx.graph.relu(ff);
            let ff = ctx.graph.matmul(ff, f2w, false, false);
            let ff = ctx.graph.add_row(ff, f2b);
            let ff = ctx.dropout(ff, self.dropout);
            let res2 = ctx.graph.add(x, ff);
            let g2 = ctx.leaf(layer.ln2_gain);
            let b2 = ctx.leaf(layer.ln2_bias);
            x = ctx.graph.layer_norm(res2, g2, b2, 1e-5);
        }

        Ok(ctx.graph.slice_rows(x, 0, 1))
    }
}
