//! Single-run orchestration: the weighted multi-task objective over a
//! shared backbone, Adam updates, per-epoch validation with
//! best-checkpoint selection, and final test evaluation.
//!
//! Reported test metrics always come from the checkpoint selected on
//! validation, never from the last epoch. Every source of randomness
//! (parameter init, shuffling, dropout) is a stream derived from the
//! run seed, so identical configs reproduce identical results on the
//! same platform.

pub mod adam;
pub mod loss;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backbones::{Checkpoint, ForwardCtx, Model, ModelConfig};
use crate::datamodel::{
    validate_dataset, Dataset, LabelSet, Provenance, Sample, Split, TaskKind,
};
use crate::error::{Error, Result};
use crate::ingest::pad_and_mask;
use crate::metrics::{evaluate_categorical, evaluate_multilabel, MetricsReport, TaskMetrics};
use crate::nn::{Matrix, ParamVec};
use crate::util::{derived_rng, fnv1a64, hex64};

pub use adam::{AdamConfig, AdamState};
pub use loss::{
    multitask_loss, positive_class_weights, task_loss, MultitaskLoss, TaskLossInput, TaskTargets,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Use the weights written in the config.
    #[default]
    Manual,
    /// Weak tasks weigh in at their label set's confidence score;
    /// strong tasks at 1.
    Confidence,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// Average WAcc for multilabel main tasks, accuracy otherwise.
    #[default]
    Auto,
    AverageWacc,
    Accuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxTaskRef {
    pub task_id: String,
    /// Pin strong or weak labels; `None` prefers strong.
    #[serde(default)]
    pub provenance: Option<Provenance>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_epochs() -> usize {
    50
}

fn default_weight_decay() -> f64 {
    1e-5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub main_task: String,
    #[serde(default)]
    pub main_provenance: Option<Provenance>,
    #[serde(default = "default_lambda")]
    pub main_lambda: f64,
    #[serde(default)]
    pub aux_tasks: Vec<AuxTaskRef>,
    #[serde(default)]
    pub lambda_mode: LambdaMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    pub seed: u64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub selection: SelectionMetric,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be positive".into()));
        }
        if self.main_lambda < 0.0 || self.aux_tasks.iter().any(|a| a.lambda < 0.0) {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        Ok(())
    }

    /// Stable hash over every field of the config.
    pub fn config_hash(&self) -> String {
        hex64(fnv1a64(
            &serde_json::to_vec(self).expect("run config serializes"),
        ))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub config_hash: String,
    pub best_epoch: usize,
    pub selection_value: f64,
    pub train_loss_curve: Vec<f64>,
    pub valid_loss_curve: Vec<f64>,
    pub valid_selection_curve: Vec<f64>,
    /// Post-epoch checksums over the backbone plus the main-task head.
    pub epoch_core_checksums: Vec<String>,
    pub test_report: MetricsReport,
    pub warnings: Vec<String>,
    pub wall_time_secs: f64,
    pub checkpoint_file: Option<String>,
}

impl RunResult {
    /// Hash of everything except wall time and file paths.
    pub fn content_hash(&self) -> String {
        let mut redacted = self.clone();
        redacted.wall_time_secs = 0.0;
        redacted.checkpoint_file = None;
        hex64(fnv1a64(
            &serde_json::to_vec(&redacted).expect("run result serializes"),
        ))
    }
}

struct ResolvedTask<'a> {
    ls: &'a LabelSet,
    lambda: f64,
}

fn resolve_one<'a>(
    data: &'a Dataset,
    task_id: &str,
    provenance: Option<Provenance>,
) -> Result<&'a LabelSet> {
    let found = match provenance {
        Some(p) => data.label_set(task_id, p),
        None => data.label_set_any(task_id),
    };
    found.ok_or_else(|| Error::MissingLabelSet {
        task: task_id.to_string(),
        dataset: data.name.clone(),
    })
}

fn resolve_tasks<'a>(run: &RunConfig, data: &'a Dataset) -> Result<Vec<ResolvedTask<'a>>> {
    let mut resolved = Vec::with_capacity(1 + run.aux_tasks.len());
    let main = resolve_one(data, &run.main_task, run.main_provenance)?;
    let main_lambda = match run.lambda_mode {
        LambdaMode::Manual => run.main_lambda,
        LambdaMode::Confidence => main.confidence,
    };
    resolved.push(ResolvedTask {
        ls: main,
        lambda: main_lambda,
    });
    for aux in &run.aux_tasks {
        if aux.task_id == run.main_task {
            return Err(Error::InvalidConfig(format!(
                "auxiliary task `{}` duplicates the main task",
                aux.task_id
            )));
        }
        let ls = resolve_one(data, &aux.task_id, aux.provenance)?;
        let lambda = match run.lambda_mode {
            LambdaMode::Manual => aux.lambda,
            LambdaMode::Confidence => ls.confidence,
        };
        resolved.push(ResolvedTask { ls, lambda });
    }
    Ok(resolved)
}

fn samples_for<'a>(data: &'a Dataset, ids: &[String]) -> Vec<&'a Sample> {
    ids.iter().map(|id| &data.samples[id]).collect()
}

/// Train/valid id lists, holding out a seeded 10% of train when the
/// dataset ships without a validation split.
fn select_splits(data: &Dataset, seed: u64) -> (Vec<String>, Vec<String>, bool) {
    let train: Vec<String> = data.split_ids(Split::Train).to_vec();
    let valid: Vec<String> = data.split_ids(Split::Valid).to_vec();
    if !valid.is_empty() {
        return (train, valid, false);
    }
    let mut rng = derived_rng(seed, "trainer/holdout");
    let mut shuffled = train;
    use rand::seq::SliceRandom;
    shuffled.shuffle(&mut rng);
    let k = (shuffled.len() / 10).max(1).min(shuffled.len().saturating_sub(1)).max(1);
    let holdout = shuffled[..k].to_vec();
    let rest = shuffled[k..].to_vec();
    (rest, holdout, true)
}

fn task_inputs_for_batch(
    resolved: &[ResolvedTask],
    pos_weights: &[Option<Vec<f64>>],
    batch_ids: &[String],
) -> Vec<TaskLossInput> {
    resolved
        .iter()
        .zip(pos_weights)
        .map(|(task, pw)| {
            let dy = task.ls.task.output_dim;
            let mut present = Vec::with_capacity(batch_ids.len());
            match task.ls.task.kind {
                TaskKind::Multilabel => {
                    let mut labels = Matrix::zeros(batch_ids.len(), dy);
                    for (r, id) in batch_ids.iter().enumerate() {
                        match task.ls.labels.get(id) {
                            Some(v) => {
                                present.push(true);
                                for (c, &x) in v.iter().enumerate().take(dy) {
                                    labels.set(r, c, x as f64);
                                }
                            }
                            None => present.push(false),
                        }
                    }
                    TaskLossInput {
                        task_id: task.ls.task.task_id.clone(),
                        lambda: task.lambda,
                        targets: TaskTargets::Multilabel {
                            labels,
                            pos_weight: pw.clone().unwrap_or_else(|| vec![1.0; dy]),
                        },
                        present,
                    }
                }
                TaskKind::Categorical => {
                    let mut classes = Vec::with_capacity(batch_ids.len());
                    for id in batch_ids {
                        match task.ls.labels.get(id) {
                            Some(v) => {
                                present.push(true);
                                classes.push(LabelSet::class_index(v));
                            }
                            None => {
                                present.push(false);
                                classes.push(0);
                            }
                        }
                    }
                    TaskLossInput {
                        task_id: task.ls.task.task_id.clone(),
                        lambda: task.lambda,
                        targets: TaskTargets::Categorical { classes },
                        present,
                    }
                }
            }
        })
        .collect()
}

/// Forward pass over one id list in eval mode, returning the logits of
/// a single task head, rows in id order.
pub fn predict_logits(
    model: &Model,
    params: &ParamVec,
    data: &Dataset,
    ids: &[String],
    task_id: &str,
) -> Result<Matrix> {
    let head = model
        .head(task_id)
        .ok_or_else(|| Error::InvalidConfig(format!("model has no head for task `{task_id}`")))?;
    let dy = head.task.output_dim;
    let mut out = Matrix::zeros(ids.len(), dy);
    let mut row = 0;
    for chunk in ids.chunks(64) {
        let samples = samples_for(data, chunk);
        let batch = pad_and_mask(&samples)?;
        let mut ctx = ForwardCtx::eval(&model.layout, params);
        let r = model.backbone.forward_batch(&mut ctx, &batch)?;
        let logits = head.apply(&mut ctx, r)?;
        let values = ctx.graph.value(logits);
        for b in 0..chunk.len() {
            out.row_mut(row).copy_from_slice(values.row(b));
            row += 1;
        }
    }
    Ok(out)
}

fn labeled_ids(ls: &LabelSet, ids: &[String]) -> Vec<String> {
    ids.iter()
        .filter(|id| ls.labels.contains_key(*id))
        .cloned()
        .collect()
}

fn evaluate_task(
    model: &Model,
    params: &ParamVec,
    data: &Dataset,
    ids: &[String],
    ls: &LabelSet,
) -> Result<TaskMetrics> {
    let ids = labeled_ids(ls, ids);
    let logits = predict_logits(model, params, data, &ids, &ls.task.task_id)?;
    match ls.task.kind {
        TaskKind::Multilabel => {
            let mut labels = Matrix::zeros(ids.len(), ls.task.output_dim);
            for (r, id) in ids.iter().enumerate() {
                for (c, &v) in ls.labels[id].iter().enumerate().take(ls.task.output_dim) {
                    labels.set(r, c, v as f64);
                }
            }
            evaluate_multilabel(&ls.task, &logits, &labels, 0.5)
        }
        TaskKind::Categorical => {
            let classes: Vec<usize> = ids.iter().map(|id| LabelSet::class_index(&ls.labels[id])).collect();
            evaluate_categorical(&ls.task, &logits, &classes)
        }
    }
}

fn selection_of(tm: &TaskMetrics, metric: SelectionMetric) -> f64 {
    match metric {
        SelectionMetric::Auto => tm.selection_value(),
        SelectionMetric::AverageWacc => tm.average_wacc.unwrap_or(tm.accuracy),
        SelectionMetric::Accuracy => tm.accuracy,
    }
}

pub fn train(run: &RunConfig, data: &Dataset) -> Result<RunResult> {
    train_with_output(run, data, None)
}

pub fn train_with_output(
    run: &RunConfig,
    data: &Dataset,
    out_dir: Option<&Path>,
) -> Result<RunResult> {
    let started = Instant::now();
    run.validate()?;
    let report = validate_dataset(data);
    if !report.is_valid() {
        return Err(Error::InvalidDataset(format!(
            "{} ({} violations)",
            report.violations[0].rule,
            report.violations.len()
        )));
    }

    let resolved = resolve_tasks(run, data)?;
    let dims = data
        .dims()
        .ok_or_else(|| Error::InvalidDataset("dataset has no samples".into()))?;
    let tasks: Vec<_> = resolved.iter().map(|t| t.ls.task.clone()).collect();
    let model = Model::build(&run.model, dims, &tasks)?;
    let mut params = model.init_params(run.seed);

    let (train_ids, valid_ids, held_out) = select_splits(data, run.seed);
    if train_ids.is_empty() {
        return Err(Error::InvalidDataset("empty training split".into()));
    }
    let mut warnings: BTreeSet<String> = BTreeSet::new();
    if held_out {
        warnings.insert(format!(
            "no validation split; held out {} of {} training samples (seeded)",
            valid_ids.len(),
            valid_ids.len() + train_ids.len()
        ));
    }

    // Positive-class weights from the training split only.
    let pos_weights: Vec<Option<Vec<f64>>> = resolved
        .iter()
        .map(|t| match t.ls.task.kind {
            TaskKind::Multilabel => {
                let vecs: Vec<&Vec<f32>> = train_ids
                    .iter()
                    .filter_map(|id| t.ls.labels.get(id))
                    .collect();
                Some(positive_class_weights(
                    vecs.into_iter(),
                    t.ls.task.output_dim,
                ))
            }
            TaskKind::Categorical => None,
        })
        .collect();

    let adam_cfg = AdamConfig::new(run.learning_rate, run.weight_decay);
    let mut adam = AdamState::new(model.layout.total_len());

    let mut train_loss_curve = Vec::with_capacity(run.max_epochs);
    let mut valid_loss_curve = Vec::with_capacity(run.max_epochs);
    let mut valid_selection_curve = Vec::with_capacity(run.max_epochs);
    let mut epoch_core_checksums = Vec::with_capacity(run.max_epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 1..=run.max_epochs {
        let mut order = train_ids.clone();
        {
            use rand::seq::SliceRandom;
            let mut rng = derived_rng(run.seed, &format!("trainer/shuffle/{epoch}"));
            order.shuffle(&mut rng);
        }

        let mut loss_sum = 0.0;
        let mut loss_weight = 0.0;
        for (batch_idx, chunk) in order.chunks(run.batch_size).enumerate() {
            let samples = samples_for(data, chunk);
            let batch = pad_and_mask(&samples)?;
            let dropout_rng = derived_rng(run.seed, &format!("trainer/dropout/{epoch}/{batch_idx}"));
            let mut ctx = ForwardCtx::train(&model.layout, &params, dropout_rng);
            let r = model.backbone.forward_batch(&mut ctx, &batch)?;
            let inputs = task_inputs_for_batch(&resolved, &pos_weights, chunk);
            let mut terms = Vec::with_capacity(inputs.len());
            let mut logit_nodes = Vec::with_capacity(inputs.len());
            for (task, input) in resolved.iter().zip(&inputs) {
                if input.lambda == 0.0 {
                    logit_nodes.push(None);
                    continue;
                }
                let head = model.head(&task.ls.task.task_id).expect("head exists");
                logit_nodes.push(Some(head.apply(&mut ctx, r)?));
            }
            for (node, input) in logit_nodes.iter().zip(&inputs) {
                if let Some(node) = node {
                    terms.push((*node, input));
                }
            }
            let batch_loss = multitask_loss(&mut ctx.graph, &terms)?;
            for w in batch_loss.warnings {
                warnings.insert(w);
            }
            let loss_value = ctx.graph.value(batch_loss.total).scalar_value();
            if !loss_value.is_finite() {
                return Err(Error::AbortedRun(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            ctx.graph.backward(batch_loss.total);
            let grads = ctx.collect_grads();
            adam.step(&mut params.data, &grads, &adam_cfg).map_err(|e| {
                Error::AbortedRun(format!("epoch {epoch}, batch {batch_idx}: {e}"))
            })?;
            loss_sum += loss_value * chunk.len() as f64;
            loss_weight += chunk.len() as f64;
        }
        train_loss_curve.push(loss_sum / loss_weight.max(1.0));
        epoch_core_checksums.push(model.core_checksum(&params, &run.main_task));

        // Validation: loss under the same objective plus the selection
        // metric on the main task.
        let mut vloss_sum = 0.0;
        let mut vloss_weight = 0.0;
        for chunk in valid_ids.chunks(run.batch_size) {
            let samples = samples_for(data, chunk);
            let batch = pad_and_mask(&samples)?;
            let mut ctx = ForwardCtx::eval(&model.layout, &params);
            let r = model.backbone.forward_batch(&mut ctx, &batch)?;
            let inputs = task_inputs_for_batch(&resolved, &pos_weights, chunk);
            let mut terms = Vec::new();
            let mut nodes = Vec::new();
            for (task, input) in resolved.iter().zip(&inputs) {
                if input.lambda == 0.0 {
                    nodes.push(None);
                    continue;
                }
                let head = model.head(&task.ls.task.task_id).expect("head exists");
                nodes.push(Some(head.apply(&mut ctx, r)?));
            }
            for (node, input) in nodes.iter().zip(&inputs) {
                if let Some(node) = node {
                    terms.push((*node, input));
                }
            }
            let vloss = multitask_loss(&mut ctx.graph, &terms)?;
            for w in vloss.warnings {
                warnings.insert(w);
            }
            vloss_sum += ctx.graph.value(vloss.total).scalar_value() * chunk.len() as f64;
            vloss_weight += chunk.len() as f64;
        }
        valid_loss_curve.push(if vloss_weight > 0.0 {
            vloss_sum / vloss_weight
        } else {
            f64::NAN
        });

        let main_metrics = evaluate_task(&model, &params, data, &valid_ids, resolved[0].ls)?;
        let selection = selection_of(&main_metrics, run.selection);
        valid_selection_curve.push(selection);
        let improved = best.as_ref().map(|(v, _, _)| selection > *v).unwrap_or(true);
        if improved {
            best = Some((selection, epoch, params.data.clone()));
        }
    }

    let (selection_value, best_epoch, best_data) = best.expect("at least one epoch ran");
    let best_params = ParamVec { data: best_data };

    // Final test evaluation from the selected checkpoint only.
    let test_ids: Vec<String> = data.split_ids(Split::Test).to_vec();
    let mut test_report = MetricsReport::default();
    for task in &resolved {
        if labeled_ids(task.ls, &test_ids).is_empty() {
            warnings.insert(format!(
                "task `{}`: no labeled test samples, skipped in test report",
                task.ls.task.task_id
            ));
            continue;
        }
        test_report
            .tasks
            .push(evaluate_task(&model, &best_params, data, &test_ids, task.ls)?);
    }

    let mut checkpoint_file = None;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let ckpt = Checkpoint::from_model(&model, &best_params);
        let path = dir.join("checkpoint.ckpt");
        ckpt.save(&path)?;
        checkpoint_file = Some(path.display().to_string());
    }

    let result = RunResult {
        seed: run.seed,
        config_hash: run.config_hash(),
        best_epoch,
        selection_value,
        train_loss_curve,
        valid_loss_curve,
        valid_selection_curve,
        epoch_core_checksums,
        test_report,
        warnings: warnings.into_iter().collect(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        checkpoint_file,
    };
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("result.json"), serde_json::to_vec_pretty(&result)?)?;
    }
    Ok(result)
}

/// Evaluates a stored checkpoint on a dataset's test split. An empty
/// task list yields an empty report.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    data: &Dataset,
    task_ids: &[String],
) -> Result<MetricsReport> {
    let (model, params) = ckpt.instantiate()?;
    let expected_dims = data
        .dims()
        .ok_or_else(|| Error::InvalidDataset("dataset has no samples".into()))?;
    if expected_dims != ckpt.dims {
        return Err(Error::dims(
            "checkpoint feature dims",
            format!("{:?}", ckpt.dims),
            format!("{expected_dims:?}"),
        ));
    }
    let test_ids: Vec<String> = data.split_ids(Split::Test).to_vec();
    let mut report = MetricsReport::default();
    for task_id in task_ids {
        let ls = data
            .label_set_any(task_id)
            .ok_or_else(|| Error::MissingLabelSet {
                task: task_id.clone(),
                dataset: data.name.clone(),
            })?;
        report
            .tasks
            .push(evaluate_task(&model, &params, data, &test_ids, ls)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
