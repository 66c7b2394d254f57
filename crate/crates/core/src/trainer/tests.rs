use super::*;
use crate::backbones::{BranchConfig, EncoderKind, FusionMode, FusionWeightMode, TransformerParams};
use crate::ingest::{generate_synthetic, SyntheticConfig, TaskGenSpec};

pub(crate) fn small_dataset(seed: u64) -> Dataset {
    let cfg = SyntheticConfig {
        name: "trainer-test".into(),
        n_train: 60,
        n_valid: 20,
        n_test: 20,
        seq_len_range: (2, 5),
        dims: (10, 6, 4),
        latent_dim: 4,
        tasks: vec![
            TaskGenSpec::categorical("main", 2),
            TaskGenSpec::categorical("aux", 2),
        ],
        correlation: 0.9,
        label_noise: 0.0,
        feature_noise: 1.0,
        seed,
        sample_seed: None,
    };
    generate_synthetic(&cfg).unwrap()
}

pub(crate) fn small_model() -> ModelConfig {
    ModelConfig {
        encoder: EncoderKind::Avg,
        fusion: FusionMode::Hybrid,
        early_branch: BranchConfig::avg(vec![16, 8]),
        late_branches: [
            BranchConfig::avg(vec![8]),
            BranchConfig::avg(vec![8]),
            BranchConfig::avg(vec![8]),
        ],
        fusion_dim: 8,
        dropout: 0.0,
        fusion_weights: FusionWeightMode::LearnedSoftmax,
        fixed_late_weights: None,
        fixed_hybrid_weights: None,
    }
}

fn run_config(seed: u64, aux_lambda: Option<f64>) -> RunConfig {
    RunConfig {
        model: small_model(),
        main_task: "main".into(),
        main_provenance: None,
        main_lambda: 1.0,
        aux_tasks: match aux_lambda {
            Some(lambda) => vec![AuxTaskRef {
                task_id: "aux".into(),
                provenance: None,
                lambda,
            }],
            None => Vec::new(),
        },
        lambda_mode: LambdaMode::Manual,
        learning_rate: 5e-3,
        batch_size: 16,
        max_epochs: 4,
        seed,
        weight_decay: 1e-5,
        selection: SelectionMetric::Auto,
    }
}

#[test]
fn zero_weight_auxiliary_reduces_to_single_task_trajectory() {
    let data = small_dataset(5);
    for seed in [0u64, 1, 2] {
        let single = train(&run_config(seed, None), &data).unwrap();
        let with_aux = train(&run_config(seed, Some(0.0)), &data).unwrap();
        assert_eq!(
            single.epoch_core_checksums, with_aux.epoch_core_checksums,
            "seed {seed}: core parameter trajectory must be identical"
        );
        assert_eq!(single.train_loss_curve, with_aux.train_loss_curve);
    }
}

#[test]
fn nonzero_auxiliary_changes_trajectory() {
    let data = small_dataset(5);
    let single = train(&run_config(0, None), &data).unwrap();
    let mtl = train(&run_config(0, Some(0.8)), &data).unwrap();
    assert_ne!(single.epoch_core_checksums, mtl.epoch_core_checksums);
}

#[test]
fn identical_configs_produce_identical_content_hashes() {
    let data = small_dataset(6);
    let a = train(&run_config(3, Some(0.5)), &data).unwrap();
    let b = train(&run_config(3, Some(0.5)), &data).unwrap();
    assert_eq!(a.content_hash(), b.content_hash());
    // Wall time differs but is excluded from the hash.
    let c = train(&run_config(4, Some(0.5)), &data).unwrap();
    assert_ne!(a.content_hash(), c.content_hash());
}

#[test]
fn train_loss_decreases_over_first_epochs_on_clean_data() {
    let data = small_dataset(7);
    let mut cfg = run_config(0, None);
    cfg.max_epochs = 5;
    cfg.learning_rate = 1e-2;
    let result = train(&cfg, &data).unwrap();
    for w in result.train_loss_curve.windows(2) {
        assert!(
            w[1] < w[0],
            "loss must decrease monotonically over the first 5 epochs: {:?}",
            result.train_loss_curve
        );
    }
}

#[test]
fn selection_discipline_checkpoint_reproduces_validation_metric() {
    let data = small_dataset(8);
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(1, Some(0.6));
    let result = train_with_output(&cfg, &data, Some(dir.path())).unwrap();
    let ckpt = Checkpoint::load(&dir.path().join("checkpoint.ckpt")).unwrap();
    let (model, params) = ckpt.instantiate().unwrap();

    // Re-evaluate the stored checkpoint on the validation split; the
    // recorded selection value must match exactly.
    let ls = data.label_set_any("main").unwrap();
    let valid_ids: Vec<String> = data.split_ids(Split::Valid).to_vec();
    let logits = predict_logits(&model, &params, &data, &valid_ids, "main").unwrap();
    let classes: Vec<usize> = valid_ids
        .iter()
        .map(|id| LabelSet::class_index(&ls.labels[id]))
        .collect();
    let tm = evaluate_categorical(&ls.task, &logits, &classes).unwrap();
    assert_eq!(tm.accuracy, result.selection_value);
    assert_eq!(
        result.valid_selection_curve[result.best_epoch - 1],
        result.selection_value
    );
}

#[test]
fn test_metrics_come_from_best_epoch_not_last() {
    let data = small_dataset(8);
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(1, None);
    let result = train_with_output(&cfg, &data, Some(dir.path())).unwrap();
    let ckpt = Checkpoint::load(&dir.path().join("checkpoint.ckpt")).unwrap();
    let report = evaluate_checkpoint(&ckpt, &data, &["main".into()]).unwrap();
    assert_eq!(
        report.task("main").unwrap().accuracy,
        result.test_report.task("main").unwrap().accuracy
    );
}

#[test]
fn evaluate_with_empty_task_list_is_empty_report() {
    let data = small_dataset(9);
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(0, None);
    train_with_output(&cfg, &data, Some(dir.path())).unwrap();
    let ckpt = Checkpoint::load(&dir.path().join("checkpoint.ckpt")).unwrap();
    let report = evaluate_checkpoint(&ckpt, &data, &[]).unwrap();
    assert!(report.tasks.is_empty());
}

#[test]
fn missing_task_label_set_errors() {
    let data = small_dataset(10);
    let mut cfg = run_config(0, None);
    cfg.main_task = "nonexistent".into();
    assert!(matches!(
        train(&cfg, &data),
        Err(Error::MissingLabelSet { .. })
    ));
}

#[test]
fn holdout_split_created_when_valid_missing() {
    let mut data = small_dataset(11);
    // Fold the validation ids into train to simulate a dataset shipped
    // without one.
    let valid = data.splits.remove(&Split::Valid).unwrap();
    data.splits.get_mut(&Split::Train).unwrap().extend(valid);
    let result = train(&run_config(0, None), &data).unwrap();
    assert!(result
        .warnings
        .iter()
        .any(|w| w.contains("held out")), "{:?}", result.warnings);
}

#[test]
fn confidence_lambda_mode_uses_label_set_confidence() {
    let mut data = small_dataset(12);
    // Re-attach aux as a weak set with confidence 0.65.
    let strong_aux = data.label_sets.iter().find(|l| l.task.task_id == "aux").unwrap().clone();
    data.label_sets.retain(|l| l.task.task_id != "aux");
    data.attach_label_set(LabelSet::weak(
        strong_aux.task.clone(),
        strong_aux.labels.clone(),
        0.65,
        "labeler@elsewhere",
    ))
    .unwrap();

    let mut conf_cfg = run_config(2, Some(123.0)); // manual value should be ignored
    conf_cfg.lambda_mode = LambdaMode::Confidence;
    let conf_run = train(&conf_cfg, &data).unwrap();

    let mut manual_cfg = run_config(2, Some(0.65));
    manual_cfg.lambda_mode = LambdaMode::Manual;
    let manual_run = train(&manual_cfg, &data).unwrap();

    assert_eq!(
        conf_run.epoch_core_checksums,
        manual_run.epoch_core_checksums
    );
}

#[test]
fn transformer_and_lstm_smoke_train() {
    let data = small_dataset(13);
    for encoder in [EncoderKind::Bilstm, EncoderKind::Transformer] {
        let mut cfg = run_config(0, None);
        cfg.model = ModelConfig {
            encoder,
            fusion: FusionMode::Early,
            early_branch: BranchConfig {
                hidden_dims: vec![8],
                lstm_dim: 6,
                transformer: TransformerParams {
                    layers: 1,
                    heads: 2,
                    ff_dim: 8,
                    model_dim: 8,
                },
            },
            ..small_model()
        };
        cfg.model.dropout = 0.1;
        cfg.max_epochs = 2;
        let result = train(&cfg, &data).unwrap();
        assert!(result.train_loss_curve.iter().all(|l| l.is_finite()));
    }
}
