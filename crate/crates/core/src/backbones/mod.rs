//! Shared representation backbones: three encoders crossed with three
//! fusion assemblies, plus per-task affine heads over one shared
//! representation.
//!
//! Early fusion concatenates the per-step features of all modalities
//! and runs one encoder over the fused sequence. Late fusion encodes
//! each modality with its own encoder, projects each branch to a common
//! width, and combines them by weighted sum — softmax-normalized
//! learned scalars by default, fixed weights for ablations. Hybrid
//! fusion combines the early and late branch vectors the same way,
//! with separate parameters per branch.

pub mod checkpoint;
pub mod encoders;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Modality, TaskSpec};
use crate::error::{Error, Result};
use crate::ingest::PaddedBatch;
use crate::nn::{Graph, Matrix, NodeId, ParamId, ParamLayout, ParamVec};

pub use checkpoint::Checkpoint;
pub use encoders::{AvgEncoder, BiLstmEncoder, SequenceEncoder, TransformerEncoder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Avg,
    Bilstm,
    Transformer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Early,
    Late,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionWeightMode {
    /// Softmax over learned scalars (initialized uniform).
    LearnedSoftmax,
    /// Fixed weights; uniform unless overridden in the config.
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerParams {
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub model_dim: usize,
}

impl Default for TransformerParams {
    fn default() -> Self {
        TransformerParams {
            layers: 2,
            heads: 4,
            ff_dim: 256,
            model_dim: 80,
        }
    }
}

/// Size parameters for one encoder instance; which fields matter
/// depends on the encoder kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    #[serde(default = "BranchConfig::default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "BranchConfig::default_lstm")]
    pub lstm_dim: usize,
    #[serde(default)]
    pub transformer: TransformerParams,
}

impl BranchConfig {
    fn default_hidden() -> Vec<usize> {
        vec![128]
    }

    fn default_lstm() -> usize {
        128
    }

    pub fn avg(hidden_dims: Vec<usize>) -> Self {
        BranchConfig {
            hidden_dims,
            ..Default::default()
        }
    }

    pub fn lstm(lstm_dim: usize) -> Self {
        BranchConfig {
            lstm_dim,
            ..Default::default()
        }
    }

    pub fn transformer(params: TransformerParams) -> Self {
        BranchConfig {
            transformer: params,
            ..Default::default()
        }
    }
}

impl Default for BranchConfig {
    fn default() -> Self {
        BranchConfig {
            hidden_dims: Self::default_hidden(),
            lstm_dim: Self::default_lstm(),
            transformer: TransformerParams::default(),
        }
    }
}

fn default_fusion_dim() -> usize {
    128
}

/// Fully determines the backbone: encoder kind, fusion assembly, and
/// every size knob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub fusion: FusionMode,
    #[serde(default)]
    pub early_branch: BranchConfig,
    /// Per-modality branch configs (text, audio, video) for late fusion.
    #[serde(default)]
    pub late_branches: [BranchConfig; 3],
    /// Common projection width for late/hybrid combination; also the
    /// backbone output width in those modes.
    #[serde(default = "default_fusion_dim")]
    pub fusion_dim: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "ModelConfig::default_weight_mode")]
    pub fusion_weights: FusionWeightMode,
    /// Fixed-mode weights for the three late branches (uniform if None).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_late_weights: Option<[f64; 3]>,
    /// Fixed-mode weights for (early, late) in hybrid mode (uniform if
    /// None).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_hybrid_weights: Option<[f64; 2]>,
}

impl ModelConfig {
    fn default_weight_mode() -> FusionWeightMode {
        FusionWeightMode::LearnedSoftmax
    }

    pub fn new(encoder: EncoderKind, fusion: FusionMode) -> Self {
        ModelConfig {
            encoder,
            fusion,
            early_branch: BranchConfig::default(),
            late_branches: Default::default(),
            fusion_dim: default_fusion_dim(),
            dropout: 0.0,
            fusion_weights: FusionWeightMode::LearnedSoftmax,
            fixed_late_weights: None,
            fixed_hybrid_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        let uses_late = matches!(self.fusion, FusionMode::Late | FusionMode::Hybrid);
        if uses_late && self.fusion_dim == 0 {
            return Err(Error::InvalidConfig("fusion_dim must be positive".into()));
        }
        let check_branch = |name: &str, b: &BranchConfig| -> Result<()> {
            match self.encoder {
                EncoderKind::Avg if b.hidden_dims.is_empty() => Err(Error::InvalidConfig(
                    format!("{name}: hidden_dims must be non-empty"),
                )),
                EncoderKind::Bilstm if b.lstm_dim == 0 => {
                    Err(Error::InvalidConfig(format!("{name}: lstm_dim must be positive")))
                }
                EncoderKind::Transformer => {
                    let t = &b.transformer;
                    if t.heads == 0 || t.model_dim % t.heads != 0 {
                        Err(Error::InvalidConfig(format!(
                            "{name}: heads {} must divide model_dim {}",
                            t.heads, t.model_dim
                        )))
                    } else if t.layers == 0 {
                        Err(Error::InvalidConfig(format!("{name}: layers must be positive")))
                    } else {
                        Ok(())
                    }
                }
                _ => Ok(()),
            }
        };
        if matches!(self.fusion, FusionMode::Early | FusionMode::Hybrid) {
            check_branch("early branch", &self.early_branch)?;
        }
        if uses_late {
            for (i, b) in self.late_branches.iter().enumerate() {
                check_branch(&format!("late branch {i}"), b)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Forward context
// ---------------------------------------------------------------------------

/// Per-forward state: the tape, lazily bound parameter leaves, and the
/// dropout stream. Rebuilt for every batch.
pub struct ForwardCtx<'a> {
    pub graph: Graph,
    layout: &'a ParamLayout,
    values: &'a [f64],
    leaves: Vec<Option<NodeId>>,
    train: bool,
    dropout_rng: Option<ChaCha8Rng>,
    /// When set, transformer encoders push each attention matrix here.
    pub attn_probe: Option<Vec<Matrix>>,
}

impl<'a> ForwardCtx<'a> {
    pub fn eval(layout: &'a ParamLayout, params: &'a ParamVec) -> Self {
        ForwardCtx {
            graph: Graph::new(),
            layout,
            values: &params.data,
            leaves: vec![None; layout.entries().len()],
            train: false,
            dropout_rng: None,
            attn_probe: None,
        }
    }

    pub fn train(layout: &'a ParamLayout, params: &'a ParamVec, dropout_rng: ChaCha8Rng) -> Self {
        ForwardCtx {
            train: true,
            dropout_rng: Some(dropout_rng),
            ..Self::eval(layout, params)
        }
    }

    /// Leaf node for a parameter, created once per forward pass so
    /// repeated uses accumulate into a single gradient.
    pub fn leaf(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.leaves[id.index()] {
            return node;
        }
        let e = self.layout.entry(id);
        let m = Matrix::from_vec(
            e.rows,
            e.cols,
            self.values[e.offset..e.offset + e.len()].to_vec(),
        );
        let node = self.graph.constant(m);
        self.leaves[id.index()] = Some(node);
        node
    }

    /// Inverted dropout: scales kept entries by 1/(1-rate) in train
    /// mode, identity otherwise.
    pub fn dropout(&mut self, node: NodeId, rate: f64) -> NodeId {
        if !self.train || rate <= 0.0 {
            return node;
        }
        let rng = self.dropout_rng.as_mut().expect("train ctx has dropout rng");
        let v = self.graph.value(node);
        let keep = 1.0 - rate;
        let mask = Matrix::from_vec(
            v.rows(),
            v.cols(),
            (0..v.rows() * v.cols())
                .map(|_| {
                    use rand::Rng;
                    if rng.random_range(0.0..1.0) < rate {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
                .collect(),
        );
        self.graph.mul_const(node, mask)
    }

    /// Flat gradient vector aligned with the parameter layout; entries
    /// never touched by the tape are zero.
    pub fn collect_grads(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.total_len()];
        for (i, slot) in self.leaves.iter().enumerate() {
            let Some(node) = slot else { continue };
            let Some(g) = self.graph.grad(*node) else { continue };
            let e = &self.layout.entries()[i];
            out[e.offset..e.offset + e.len()].copy_from_slice(g.data());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Backbone
// ---------------------------------------------------------------------------

enum FusionCombiner {
    Learned(ParamId),
    Fixed(Vec<f64>),
}

impl FusionCombiner {
    fn build(
        mode: FusionWeightMode,
        fixed: Option<Vec<f64>>,
        name: &str,
        arity: usize,
        layout: &mut ParamLayout,
    ) -> Self {
        match mode {
            FusionWeightMode::LearnedSoftmax => {
                FusionCombiner::Learned(layout.register(format!("{name}/fusion_logits"), 1, arity))
            }
            FusionWeightMode::Fixed => {
                let w = fixed.unwrap_or_else(|| vec![1.0 / arity as f64; arity]);
                assert_eq!(w.len(), arity);
                FusionCombiner::Fixed(w)
            }
        }
    }

    /// Weighted sum of `(1, d)` branch vectors: weights @ stacked rows.
    fn combine(&self, ctx: &mut ForwardCtx, parts: &[NodeId]) -> NodeId {
        let stacked = ctx.graph.concat_rows(parts);
        let weights = match self {
            FusionCombiner::Learned(id) => {
                let logits = ctx.leaf(*id);
                ctx.graph.softmax_rows(logits)
            }
            FusionCombiner::Fixed(w) => ctx.graph.constant(Matrix::row_vector(w)),
        };
        ctx.graph.matmul(weights, stacked, false, false)
    }

    /// Current weight values (softmaxed for the learned mode).
    fn weight_values(&self, layout: &ParamLayout, params: &ParamVec) -> Vec<f64> {
        match self {
            FusionCombiner::Fixed(w) => w.clone(),
            FusionCombiner::Learned(id) => {
                let raw = params.slice(layout, *id);
                let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = raw.iter().map(|&v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / sum).collect()
            }
        }
    }
}

struct LateAssembly {
    encoders: [Box<dyn SequenceEncoder>; 3],
    projections: [(ParamId, ParamId); 3],
    combiner: FusionCombiner,
}

struct HybridGlue {
    early_proj: (ParamId, ParamId),
    combiner: FusionCombiner,
}

/// The shared representation function: consumes one sample's three
/// aligned sequences and produces a `(1, output_dim)` vector every task
/// head reads.
pub struct Backbone {
    pub config: ModelConfig,
    pub dims: (usize, usize, usize),
    output_dim: usize,
    early: Option<Box<dyn SequenceEncoder>>,
    late: Option<LateAssembly>,
    hybrid: Option<HybridGlue>,
}

fn build_encoder(
    kind: EncoderKind,
    prefix: &str,
    input_dim: usize,
    branch: &BranchConfig,
    dropout: f64,
    layout: &mut ParamLayout,
) -> Result<Box<dyn SequenceEncoder>> {
    Ok(match kind {
        EncoderKind::Avg => Box::new(AvgEncoder::build(
            prefix,
            input_dim,
            &branch.hidden_dims,
            dropout,
            layout,
        )?),
        EncoderKind::Bilstm => Box::new(BiLstmEncoder::build(
            prefix,
            input_dim,
            branch.lstm_dim,
            dropout,
            layout,
        )?),
        EncoderKind::Transformer => {
            let t = &branch.transformer;
            Box::new(TransformerEncoder::build(
                prefix,
                input_dim,
                t.model_dim,
                t.layers,
                t.heads,
                t.ff_dim,
                dropout,
                layout,
            )?)
        }
    })
}

/// Branch vectors from one forward pass; `combined` is the backbone
/// output `r`.
pub struct BranchOutputs {
    pub early: Option<NodeId>,
    pub late: Option<NodeId>,
    pub combined: NodeId,
}

impl Backbone {
    pub fn build(
        config: &ModelConfig,
        dims: (usize, usize, usize),
        layout: &mut ParamLayout,
    ) -> Result<Self> {
        config.validate()?;
        let (dt, da, dv) = dims;
        let fused_dim = dt + da + dv;
        let mut early = None;
        let mut late = None;
        let mut hybrid = None;

        if matches!(config.fusion, FusionMode::Early | FusionMode::Hybrid) {
            early = Some(build_encoder(
                config.encoder,
                "backbone/early",
                fused_dim,
                &config.early_branch,
                config.dropout,
                layout,
            )?);
        }
        if matches!(config.fusion, FusionMode::Late | FusionMode::Hybrid) {
            let names = ["text", "audio", "video"];
            let mut encoders = Vec::with_capacity(3);
            let mut projections = Vec::with_capacity(3);
            for (i, (&d, name)) in [dt, da, dv].iter().zip(names).enumerate() {
                let enc = build_encoder(
                    config.encoder,
                    &format!("backbone/late/{name}"),
                    d,
                    &config.late_branches[i],
                    config.dropout,
                    layout,
                )?;
                let w = layout.register(
                    format!("backbone/late/{name}/proj/weight"),
                    enc.output_dim(),
                    config.fusion_dim,
                );
                let b = layout.register(format!("backbone/late/{name}/proj/bias"), 1, config.fusion_dim);
                encoders.push(enc);
                projections.push((w, b));
            }
            late = Some(LateAssembly {
                encoders: encoders
                    .try_into()
                    .unwrap_or_else(|_| unreachable!("three branches")),
                projections: projections
                    .try_into()
                    .unwrap_or_else(|_| unreachable!("three branches")),
                combiner: FusionCombiner::build(
                    config.fusion_weights,
                    config.fixed_late_weights.map(|w| w.to_vec()),
                    "backbone/late",
                    3,
                    layout,
                ),
            });
        }
        if config.fusion == FusionMode::Hybrid {
            let early_dim = early.as_ref().unwrap().output_dim();
            hybrid = Some(HybridGlue {
                early_proj: (
                    layout.register("backbone/hybrid/early_proj/weight", early_dim, config.fusion_dim),
                    layout.register("backbone/hybrid/early_proj/bias", 1, config.fusion_dim),
                ),
                combiner: FusionCombiner::build(
                    config.fusion_weights,
                    config.fixed_hybrid_weights.map(|w| w.to_vec()),
                    "backbone/hybrid",
                    2,
                    layout,
                ),
            });
        }

        let output_dim = match config.fusion {
            FusionMode::Early => early.as_ref().unwrap().output_dim(),
            FusionMode::Late | FusionMode::Hybrid => config.fusion_dim,
        };
        Ok(Backbone {
            config: config.clone(),
            dims,
            output_dim,
            early,
            late,
            hybrid,
        })
    }

    /// Width of `r`, fixed at construction; every head consumes it.
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Per-step concatenation of the three modality sequences.
    pub fn fuse_early(text: &Matrix, audio: &Matrix, video: &Matrix) -> Result<Matrix> {
        let s = text.rows();
        if audio.rows() != s || video.rows() != s {
            return Err(Error::dims(
                "fuse_early lengths",
                s,
                format!("audio {}, video {}", audio.rows(), video.rows()),
            ));
        }
        let d = text.cols() + audio.cols() + video.cols();
        let mut fused = Matrix::zeros(s, d);
        for r in 0..s {
            let row = fused.row_mut(r);
            row[..text.cols()].copy_from_slice(text.row(r));
            row[text.cols()..text.cols() + audio.cols()].copy_from_slice(audio.row(r));
            row[text.cols() + audio.cols()..].copy_from_slice(video.row(r));
        }
        Ok(fused)
    }

    fn late_vector(
        &self,
        ctx: &mut ForwardCtx,
        text: &Matrix,
        audio: &Matrix,
        video: &Matrix,
        mask: &[bool],
    ) -> Result<NodeId> {
        let assembly = self.late.as_ref().expect("late assembly");
        let mut projected = Vec::with_capacity(3);
        for (i, seq) in [text, audio, video].into_iter().enumerate() {
            let encoded = assembly.encoders[i].encode(ctx, seq, mask)?;
            let (w, b) = assembly.projections[i];
            let wl = ctx.leaf(w);
            let bl = ctx.leaf(b);
            let lin = ctx.graph.matmul(encoded, wl, false, false);
            projected.push(ctx.graph.add(lin, bl));
        }
        Ok(assembly.combiner.combine(ctx, &projected))
    }

    /// Forward pass for one sample; `mask` flags the real (unpadded)
    /// steps of all three aligned sequences.
    pub fn forward_sample(
        &self,
        ctx: &mut ForwardCtx,
        text: &Matrix,
        audio: &Matrix,
        video: &Matrix,
        mask: &[bool],
    ) -> Result<NodeId> {
        Ok(self.forward_sample_detailed(ctx, text, audio, video, mask)?.combined)
    }

    /// Forward pass exposing the per-branch vectors alongside `r`.
    pub fn forward_sample_detailed(
        &self,
        ctx: &mut ForwardCtx,
        text: &Matrix,
        audio: &Matrix,
        video: &Matrix,
        mask: &[bool],
    ) -> Result<BranchOutputs> {
        if audio.rows() != text.rows() || video.rows() != text.rows() {
            return Err(Error::dims(
                "forward lengths",
                text.rows(),
                format!("audio {}, video {}", audio.rows(), video.rows()),
            ));
        }
        match self.config.fusion {
            FusionMode::Early => {
                let fused = Self::fuse_early(text, audio, video)?;
                let combined = self.early.as_ref().unwrap().encode(ctx, &fused, mask)?;
                Ok(BranchOutputs {
                    early: Some(combined),
                    late: None,
                    combined,
                })
            }
            FusionMode::Late => {
                let combined = self.late_vector(ctx, text, audio, video, mask)?;
                Ok(BranchOutputs {
                    early: None,
                    late: Some(combined),
                    combined,
                })
            }
            FusionMode::Hybrid => {
                let fused = Self::fuse_early(text, audio, video)?;
                let early_raw = self.early.as_ref().unwrap().encode(ctx, &fused, mask)?;
                let glue = self.hybrid.as_ref().unwrap();
                let (w, b) = glue.early_proj;
                let wl = ctx.leaf(w);
                let bl = ctx.leaf(b);
                let lin = ctx.graph.matmul(early_raw, wl, false, false);
                let early_vec = ctx.graph.add(lin, bl);
                let late_vec = self.late_vector(ctx, text, audio, video, mask)?;
                let combined = glue.combiner.combine(ctx, &[early_vec, late_vec]);
                Ok(BranchOutputs {
                    early: Some(early_vec),
                    late: Some(late_vec),
                    combined,
                })
            }
        }
    }

    /// Forward pass over a padded batch: stacks per-sample vectors into
    /// a `(B, output_dim)` representation.
    pub fn forward_batch(&self, ctx: &mut ForwardCtx, batch: &PaddedBatch) -> Result<NodeId> {
        let mut rows = Vec::with_capacity(batch.batch_size);
        for b in 0..batch.batch_size {
            let text = batch.modality_matrix(b, Modality::Text);
            let audio = batch.modality_matrix(b, Modality::Audio);
            let video = batch.modality_matrix(b, Modality::Video);
            let mask = batch.mask_bools(b);
            rows.push(self.forward_sample(ctx, &text, &audio, &video, &mask)?);
        }
        Ok(ctx.graph.concat_rows(&rows))
    }

    /// Current late-fusion weight values (softmaxed in learned mode).
    pub fn late_weight_values(&self, layout: &ParamLayout, params: &ParamVec) -> Option<Vec<f64>> {
        self.late.as_ref().map(|l| l.combiner.weight_values(layout, params))
    }
}

// ---------------------------------------------------------------------------
// Task heads
// ---------------------------------------------------------------------------

/// Affine map from the shared representation to task logits. No hidden
/// layers, no activation; losses consume raw logits.
pub struct TaskHead {
    pub task: TaskSpec,
    weight: ParamId,
    bias: ParamId,
    input_dim: usize,
}

impl TaskHead {
    pub fn build(task: &TaskSpec, input_dim: usize, layout: &mut ParamLayout) -> Self {
        let weight = layout.register(
            format!("head/{}/weight", task.task_id),
            input_dim,
            task.output_dim,
        );
        let bias = layout.register(format!("head/{}/bias", task.task_id), 1, task.output_dim);
        TaskHead {
            task: task.clone(),
            weight,
            bias,
            input_dim,
        }
    }

    pub fn apply(&self, ctx: &mut ForwardCtx, r: NodeId) -> Result<NodeId> {
        let width = ctx.graph.value(r).cols();
        if width != self.input_dim {
            return Err(Error::dims(
                format!("head `{}` input", self.task.task_id),
                self.input_dim,
                width,
            ));
        }
        let w = ctx.leaf(self.weight);
        let b = ctx.leaf(self.bias);
        let lin = ctx.graph.matmul(r, w, false, false);
        Ok(ctx.graph.add_row(lin, b))
    }
}

/// A backbone plus its task heads over one shared parameter layout.
pub struct Model {
    pub backbone: Backbone,
    pub heads: Vec<TaskHead>,
    pub layout: ParamLayout,
}

impl Model {
    pub fn build(
        config: &ModelConfig,
        dims: (usize, usize, usize),
        tasks: &[TaskSpec],
    ) -> Result<Model> {
        let mut layout = ParamLayout::new();
        let backbone = Backbone::build(config, dims, &mut layout)?;
        let heads = tasks
            .iter()
            .map(|t| TaskHead::build(t, backbone.output_dim(), &mut layout))
            .collect();
        Ok(Model {
            backbone,
            heads,
            layout,
        })
    }

    pub fn head(&self, task_id: &str) -> Option<&TaskHead> {
        self.heads.iter().find(|h| h.task.task_id == task_id)
    }

    pub fn init_params(&self, seed: u64) -> ParamVec {
        ParamVec::init(&self.layout, seed)
    }

    /// Checksum over the backbone plus the named head — the parameters
    /// shared between a multi-task run and its single-task reduction.
    pub fn core_checksum(&self, params: &ParamVec, main_task: &str) -> String {
        let head_prefix = format!("head/{main_task}/");
        params.checksum_prefixed(&self.layout, &["backbone/", &head_prefix])
    }
}
