//! Task losses and the weighted multi-task objective.
//!
//! Each task contributes `lambda_j * L_j` where `L_j` averages the
//! task's configured loss over the batch rows that actually carry a
//! label for it (mask-and-renormalize). Tasks with `lambda = 0` are
//! skipped outright so dropping them from the config leaves the total
//! bit-identical.

use crate::datamodel::LossKind;
use crate::error::{Error, Result};
use crate::nn::{Graph, Matrix, NodeId};

/// Per-batch targets for one task.
pub enum TaskTargets {
    /// Binary 0/1 label matrix `(B, d_y)` plus per-class positive
    /// weights (each >= 1).
    Multilabel { labels: Matrix, pos_weight: Vec<f64> },
    /// True class index per batch row.
    Categorical { classes: Vec<usize> },
}

pub struct TaskLossInput {
    pub task_id: String,
    pub lambda: f64,
    pub targets: TaskTargets,
    /// Which batch rows carry a label for this task.
    pub present: Vec<bool>,
}

pub struct MultitaskLoss {
    pub total: NodeId,
    /// Per-task unweighted loss values actually included.
    pub per_task: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

fn presence_weights(present: &[bool]) -> (Vec<f64>, usize) {
    let count = present.iter().filter(|&&p| p).count();
    if count == 0 {
        return (vec![0.0; present.len()], 0);
    }
    let w = 1.0 / count as f64;
    (
        present.iter().map(|&p| if p { w } else { 0.0 }).collect(),
        count,
    )
}

/// Batch-mean loss for one task on the tape. Rows with no label get
/// zero weight; the rest renormalize to a clean mean.
pub fn task_loss(g: &mut Graph, logits: NodeId, input: &TaskLossInput) -> Result<NodeId> {
    let (weights, labeled) = presence_weights(&input.present);
    if labeled == 0 {
        return Err(Error::InvalidConfig(format!(
            "task `{}`: no labeled samples in batch",
            input.task_id
        )));
    }
    match &input.targets {
        TaskTargets::Multilabel { labels, pos_weight } => {
            for (r, &p) in input.present.iter().enumerate() {
                if !p {
                    continue;
                }
                for c in 0..labels.cols() {
                    let v = labels.get(r, c);
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::InvalidConfig(format!(
                            "task `{}`: non-binary label {v} at ({r},{c})",
                            input.task_id
                        )));
                    }
                }
            }
            if pos_weight.iter().any(|&w| w < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "task `{}`: pos_weight entries must be >= 1",
                    input.task_id
                )));
            }
            Ok(g.bce_with_logits(logits, labels.clone(), pos_weight.clone(), weights))
        }
        TaskTargets::Categorical { classes } => {
            let dy = g.value(logits).cols();
            for (r, (&c, &p)) in classes.iter().zip(&input.present).enumerate() {
                if p && c >= dy {
                    return Err(Error::InvalidConfig(format!(
                        "task `{}`: class index {c} out of range {dy} at row {r}",
                        input.task_id
                    )));
                }
            }
            Ok(g.cross_entropy(logits, classes.clone(), weights))
        }
    }
}

/// `sum_j lambda_j * L_j` over the provided (logits, task) pairs.
/// Zero-weight tasks are skipped; a positive-weight task whose batch
/// carries no labels contributes nothing and raises a warning.
pub fn multitask_loss(g: &mut Graph, terms: &[(NodeId, &TaskLossInput)]) -> Result<MultitaskLoss> {
    if terms.is_empty() {
        return Err(Error::InvalidConfig("multitask_loss: empty task set".into()));
    }
    let mut scalars: Vec<(NodeId, f64)> = Vec::new();
    let mut per_task = Vec::new();
    let mut warnings = Vec::new();
    for (logits, input) in terms {
        if input.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "task `{}`: negative loss weight {}",
                input.task_id, input.lambda
            )));
        }
        if input.lambda == 0.0 {
            continue;
        }
        if !input.present.iter().any(|&p| p) {
            warnings.push(format!(
                "task `{}`: batch has no labeled samples, contributes 0",
                input.task_id
            ));
            continue;
        }
        let loss = task_loss(g, *logits, input)?;
        per_task.push((input.task_id.clone(), g.value(loss).scalar_value()));
        scalars.push((loss, input.lambda));
    }
    let total = if scalars.is_empty() {
        g.constant(Matrix::scalar(0.0))
    } else {
        g.sum_scalars(&scalars)
    };
    Ok(MultitaskLoss {
        total,
        per_task,
        warnings,
    })
}

/// Per-class positive weights `clamp(N_c / P_c, 1, 20)` computed from
/// training-split label vectors.
pub fn positive_class_weights<'a>(
    labels: impl Iterator<Item = &'a Vec<f32>>,
    output_dim: usize,
) -> Vec<f64> {
    let mut pos = vec![0u64; output_dim];
    let mut total = 0u64;
    for vector in labels {
        total += 1;
        for (c, &v) in vector.iter().enumerate().take(output_dim) {
            if v > 0.5 {
                pos[c] += 1;
            }
        }
    }
    pos.iter()
        .map(|&p| {
            if p == 0 {
                20.0
            } else {
                let ratio = (total - p) as f64 / p as f64;
                ratio.clamp(1.0, 20.0)
            }
        })
        .collect()
}

/// Batch-mean loss kind dispatch used by validation-loss reporting.
pub fn loss_kind_of(targets: &TaskTargets) -> LossKind {
    match targets {
        TaskTargets::Multilabel { .. } => LossKind::WeightedBinaryCrossEntropy,
        TaskTargets::Categorical { .. } => LossKind::CrossEntropy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits_node(g: &mut Graph, rows: &[Vec<f64>]) -> NodeId {
        g.constant(Matrix::from_rows(rows))
    }

    #[test]
    fn bce_zero_logits_all_positive_labels_is_ln2() {
        let mut g = Graph::new();
        let logits = logits_node(&mut g, &[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let input = TaskLossInput {
            task_id: "emo".into(),
            lambda: 1.0,
            targets: TaskTargets::Multilabel {
                labels: Matrix::filled(2, 2, 1.0),
                pos_weight: vec![1.0, 1.0],
            },
            present: vec![true, true],
        };
        let loss = task_loss(&mut g, logits, &input).unwrap();
        assert!((g.value(loss).scalar_value() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_with_unit_pos_weight_matches_direct_formula() {
        let mut rng = crate::util::derived_rng(1, "loss/bce");
        use rand::Rng;
        let (b, dy) = (6, 3);
        let logits_raw: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..dy).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let labels_raw: Vec<Vec<f64>> = (0..b)
            .map(|_| {
                (0..dy)
                    .map(|_| if rng.random_range(0.0..1.0) < 0.5 { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut g = Graph::new();
        let logits = logits_node(&mut g, &logits_raw);
        let input = TaskLossInput {
            task_id: "emo".into(),
            lambda: 1.0,
            targets: TaskTargets::Multilabel {
                labels: Matrix::from_rows(&labels_raw),
                pos_weight: vec![1.0; dy],
            },
            present: vec![true; b],
        };
        let loss = task_loss(&mut g, logits, &input).unwrap();
        // Direct formula: -[y ln s + (1-y) ln (1-s)] averaged.
        let mut expect = 0.0;
        for r in 0..b {
            for c in 0..dy {
                let s = 1.0 / (1.0 + (-logits_raw[r][c]).exp());
                let y = labels_raw[r][c];
                expect += -(y * s.ln() + (1.0 - y) * (1.0 - s).ln());
            }
        }
        expect /= (b * dy) as f64;
        assert!((g.value(loss).scalar_value() - expect).abs() < 1e-10);
    }

    #[test]
    fn doubling_pos_weight_doubles_positive_term() {
        let logits_raw = vec![vec![0.7, -1.2], vec![2.0, 0.1]];
        let run = |pw: f64| {
            let mut g = Graph::new();
            let logits = logits_node(&mut g, &logits_raw);
            let input = TaskLossInput {
                task_id: "emo".into(),
                lambda: 1.0,
                targets: TaskTargets::Multilabel {
                    labels: Matrix::filled(2, 2, 1.0),
                    pos_weight: vec![pw, pw],
                },
                present: vec![true, true],
            };
            let loss = task_loss(&mut g, logits, &input).unwrap();
            g.value(loss).scalar_value()
        };
        // With labels all ones the loss is purely the positive term.
        assert!((run(2.0) - 2.0 * run(1.0)).abs() < 1e-12);
    }

    #[test]
    fn bce_rejects_non_binary_labels() {
        let mut g = Graph::new();
        let logits = logits_node(&mut g, &[vec![0.0]]);
        let input = TaskLossInput {
            task_id: "emo".into(),
            lambda: 1.0,
            targets: TaskTargets::Multilabel {
                labels: Matrix::from_rows(&[vec![0.4]]),
                pos_weight: vec![1.0],
            },
            present: vec![true],
        };
        assert!(task_loss(&mut g, logits, &input).is_err());
    }

    #[test]
    fn ce_uniform_logits_is_ln2() {
        let mut g = Graph::new();
        let logits = logits_node(&mut g, &[vec![0.3, 0.3], vec![-1.0, -1.0]]);
        let input = TaskLossInput {
            task_id: "sar".into(),
            lambda: 1.0,
            targets: TaskTargets::Categorical {
                classes: vec![0, 1],
            },
            present: vec![true, true],
        };
        let loss = task_loss(&mut g, logits, &input).unwrap();
        assert!((g.value(loss).scalar_value() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ce_saturates_to_zero_for_confident_correct_logits() {
        let mut g = Graph::new();
        let logits = logits_node(&mut g, &[vec![30.0, 0.0]]);
        let input = TaskLossInput {
            task_id: "sar".into(),
            lambda: 1.0,
            targets: TaskTargets::Categorical { classes: vec![0] },
            present: vec![true],
        };
        let loss = task_loss(&mut g, logits, &input).unwrap();
        assert!(g.value(loss).scalar_value() < 1e-12);
    }

    #[test]
    fn ce_matches_direct_softmax_oracle() {
        let mut rng = crate::util::derived_rng(2, "loss/ce");
        use rand::Rng;
        let (b, dy) = (8, 4);
        let logits_raw: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..dy).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let classes: Vec<usize> = (0..b).map(|_| rng.random_range(0..dy)).collect();
        let mut g = Graph::new();
        let logits = logits_node(&mut g, &logits_raw);
        let input = TaskLossInput {
            task_id: "sar".into(),
            lambda: 1.0,
            targets: TaskTargets::Categorical {
                classes: classes.clone(),
            },
            present: vec![true; b],
        };
        let loss = task_loss(&mut g, logits, &input).unwrap();
        let mut expect = 0.0;
        for r in 0..b {
            let denom: f64 = logits_raw[r].iter().map(|&x| x.exp()).sum();
            let p = logits_raw[r][classes[r]].exp() / denom;
            expect += -p.ln();
        }
        expect /= b as f64;
        assert!((g.value(loss).scalar_value() - expect).abs() < 1e-10);
    }

    #[test]
    fn ce_rejects_out_of_range_class() {
        let mut g = Graph::new();
        let logits = logits_node(&mut g, &[vec![0.0, 0.0]]);
        let input = TaskLossInput {
            task_id: "sar".into(),
            lambda: 1.0,
            targets: TaskTargets::Categorical { classes: vec![2] },
            present: vec![true],
        };
        assert!(task_loss(&mut g, logits, &input).is_err());
    }

    /// Engineered CE losses of exactly 0.7 and 0.3 combine to 0.94
    /// under lambda = (1.0, 0.8).
    #[test]
    fn multitask_weighted_sum_hand_value() {
        // Binary CE loss ln(1 + e^-m) = l  <=>  m = -ln(e^l - 1).
        let margin = |l: f64| -((l.exp() - 1.0).ln());
        let mut g = Graph::new();
        let l1 = logits_node(&mut g, &[vec![margin(0.7), 0.0]]);
        let l2 = logits_node(&mut g, &[vec![margin(0.3), 0.0]]);
        let t1 = TaskLossInput {
            task_id: "a".into(),
            lambda: 1.0,
            targets: TaskTargets::Categorical { classes: vec![0] },
            present: vec![true],
        };
        let t2 = TaskLossInput {
            task_id: "b".into(),
            lambda: 0.8,
            targets: TaskTargets::Categorical { classes: vec![0] },
            present: vec![true],
        };
        let out = multitask_loss(&mut g, &[(l1, &t1), (l2, &t2)]).unwrap();
        assert!((out.per_task[0].1 - 0.7).abs() < 1e-12);
        assert!((out.per_task[1].1 - 0.3).abs() < 1e-12);
        assert!((g.value(out.total).scalar_value() - 0.94).abs() < 1e-12);
    }

    #[test]
    fn single_task_lambda_one_equals_task_loss() {
        let mut g = Graph::new();
        let logits = logits_node(&mut g, &[vec![1.0, -0.5], vec![0.2, 0.9]]);
        let input = TaskLossInput {
            task_id: "only".into(),
            lambda: 1.0,
            targets: TaskTargets::Categorical {
                classes: vec![0, 1],
            },
            present: vec![true, true],
        };
        let direct = task_loss(&mut g, logits, &input).unwrap();
        let combined = multitask_loss(&mut g, &[(logits, &input)]).unwrap();
        assert_eq!(
            g.value(direct).scalar_value().to_bits(),
            g.value(combined.total).scalar_value().to_bits()
        );
    }

    #[test]
    fn zero_lambda_task_is_bit_identical_to_removal() {
        let mut g = Graph::new();
        let main_logits = logits_node(&mut g, &[vec![1.0, -0.5], vec![0.2, 0.9]]);
        let aux_logits = logits_node(&mut g, &[vec![0.1, 0.4], vec![-1.0, 2.0]]);
        let main = TaskLossInput {
            task_id: "main".into(),
            lambda: 1.0,
            targets: TaskTargets::Categorical {
                classes: vec![0, 1],
            },
            present: vec![true, true],
        };
        let aux = TaskLossInput {
            task_id: "aux".into(),
            lambda: 0.0,
            targets: TaskTargets::Categorical {
                classes: vec![1, 1],
            },
            present: vec![true, true],
        };
        let with_aux = multitask_loss(&mut g, &[(main_logits, &main), (aux_logits, &aux)]).unwrap();
        let without = multitask_loss(&mut g, &[(main_logits, &main)]).unwrap();
        assert_eq!(
            g.value(with_aux.total).scalar_value().to_bits(),
            g.value(without.total).scalar_value().to_bits()
        );
    }

    #[test]
    fn loss_is_linear_in_each_lambda() {
        let mut g = Graph::new();
        let l1 = logits_node(&mut g, &[vec![0.4, -0.1]]);
        let l2 = logits_node(&mut g, &[vec![1.3, 0.2]]);
        let mk = |lambda_a: f64, lambda_b: f64, g: &mut Graph| {
            let a = TaskLossInput {
                task_id: "a".into(),
                lambda: lambda_a,
                targets: TaskTargets::Categorical { classes: vec![0] },
                present: vec![true],
            };
            let b = TaskLossInput {
                task_id: "b".into(),
                lambda: lambda_b,
                targets: TaskTargets::Categorical { classes: vec![1] },
                present: vec![true],
            };
            let out = multitask_loss(g, &[(l1, &a), (l2, &b)]).unwrap();
            g.value(out.total).scalar_value()
        };
        let base = mk(1.0, 0.0, &mut g);
        let aux = mk(0.0, 1.0, &mut g);
        for (la, lb) in [(0.5, 0.25), (2.0, 1.0), (0.1, 0.9)] {
            let combined = mk(la, lb, &mut g);
            assert!((combined - (la * base + lb * aux)).abs() < 1e-12);
        }
    }

    #[test]
    fn unlabeled_batch_for_weighted_task_warns_and_contributes_zero() {
        let mut g = Graph::new();
        let main_logits = logits_node(&mut g, &[vec![1.0, -0.5]]);
        let aux_logits = logits_node(&mut g, &[vec![0.1, 0.4]]);
        let main = TaskLossInput {
            task_id: "main".into(),
            lambda: 1.0,
            targets: TaskTargets::Categorical { classes: vec![0] },
            present: vec![true],
        };
        let aux = TaskLossInput {
            task_id: "aux".into(),
            lambda: 0.7,
            targets: TaskTargets::Categorical { classes: vec![0] },
            present: vec![false],
        };
        let out = multitask_loss(&mut g, &[(main_logits, &main), (aux_logits, &aux)]).unwrap();
        assert_eq!(out.warnings.len(), 1);
        let solo = multitask_loss(&mut g, &[(main_logits, &main)]).unwrap();
        assert_eq!(
            g.value(out.total).scalar_value().to_bits(),
            g.value(solo.total).scalar_value().to_bits()
        );
    }

    #[test]
    fn empty_task_set_errors() {
        let mut g = Graph::new();
        assert!(multitask_loss(&mut g, &[]).is_err());
    }

    #[test]
    fn pos_weights_clamped() {
        let labels = vec![
            vec![1.0f32, 0.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ];
        let pw = positive_class_weights(labels.iter(), 3);
        // Class 0: all positive -> ratio 0 -> clamp to 1.
        assert_eq!(pw[0], 1.0);
        // Class 1: 1 of 4 positive -> 3.
        assert_eq!(pw[1], 3.0);
        // Class 2: 2 of 4 -> 1.
        assert_eq!(pw[2], 1.0);
        // No positives at all -> clamp to 20.
        let none = positive_class_weights([vec![0.0f32]].iter(), 1);
        assert_eq!(none[0], 20.0);
    }
}
