//! Evaluation metrics.
//!
//! Weighted accuracy corrects per-class imbalance:
//! `WAcc = (TP * N/P + TN) / 2N`. The class-share-weighted F1 (WF1) is
//! implemented too, precisely because it masks imbalance — the
//! threshold-sweep tooling exists to demonstrate that failure mode —
//! but reports lean on WAcc and the plain unweighted F1.
//!
//! Undefined metrics (a class with no positives or no negatives in a
//! split) surface explicitly instead of silently reading as zero; small
//! synthetic splits hit these cases routinely.

use serde::{Deserialize, Serialize};

use crate::datamodel::{TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    /// Total positives P = TP + FN.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Total negatives N = TN + FP.
    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    /// Counts with the positive and negative roles swapped.
    pub fn swapped(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

/// `(TP * N/P + TN) / 2N`, requiring both classes present.
pub fn weighted_accuracy(c: &ConfusionCounts) -> Result<f64> {
    let p = c.positives();
    let n = c.negatives();
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(format!(
            "weighted accuracy needs P > 0 and N > 0 (P={p}, N={n})"
        )));
    }
    let (tp, tn, p, n) = (c.tp as f64, c.tn as f64, p as f64, n as f64);
    Ok((tp * n / p + tn) / (2.0 * n))
}

/// Unweighted F1 of the positive class: `2TP / (2TP + FP + FN)`,
/// defined as 0 when the denominator vanishes.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

/// Class-share-weighted F1: `P/I * F1_p + N/I * F1_n` where `F1_n`
/// swaps the positive and negative roles.
pub fn weighted_f1(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("weighted F1 over zero samples".into()));
    }
    let f1_p = f1(c);
    let f1_n = f1(&c.swapped());
    let p_share = c.positives() as f64 / total as f64;
    let n_share = c.negatives() as f64 / total as f64;
    Ok(p_share * f1_p + n_share * f1_n)
}

pub fn plain_accuracy(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("accuracy over zero samples".into()));
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

/// Builds confusion counts from scores with the fixed rule
/// "score >= threshold => positive" (ties positive).
pub fn confusion_from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels.iter()) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub wacc: f64,
    pub f1: f64,
    pub wf1: f64,
}

/// Metric triples for each classification threshold, ascending.
pub fn threshold_sweep(
    scores: &[f64],
    labels: &[bool],
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>> {
    if scores.is_empty() || thresholds.is_empty() {
        return Err(Error::InvalidConfig("threshold_sweep: empty input".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::dims("threshold_sweep", scores.len(), labels.len()));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(
            "threshold_sweep: thresholds must be sorted ascending".into(),
        ));
    }
    thresholds
        .iter()
        .map(|&tau| {
            let c = confusion_from_scores(scores, labels, tau);
            Ok(SweepPoint {
                threshold: tau,
                wacc: weighted_accuracy(&c)?,
                f1: f1(&c),
                wf1: weighted_f1(&c)?,
            })
        })
        .collect()
}

/// Product-moment correlation at 64-bit.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims("pearson", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance input".into()));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub counts: ConfusionCounts,
    /// None when the class has no positives or no negatives.
    pub wacc: Option<f64>,
    pub f1: f64,
    pub wf1: Option<f64>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: String,
    pub kind: TaskKind,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean over classes with a defined WAcc.
    pub average_wacc: Option<f64>,
    /// Unweighted mean F1 over all classes.
    pub average_f1: f64,
    /// Plain accuracy; argmax-correct for categorical tasks, per-element
    /// for multilabel ones.
    pub accuracy: f64,
    pub warnings: Vec<String>,
}

impl TaskMetrics {
    /// Model-selection scalar: Average WAcc for multilabel (emotion)
    /// tasks, plain accuracy otherwise.
    pub fn selection_value(&self) -> f64 {
        match self.kind {
            TaskKind::Multilabel => self.average_wacc.unwrap_or(self.accuracy),
            TaskKind::Categorical => self.accuracy,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: Vec<TaskMetrics>,
}

impl MetricsReport {
    pub fn task(&self, task_id: &str) -> Option<&TaskMetrics> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn class_metrics(class: &str, counts: ConfusionCounts, warnings: &mut Vec<String>) -> ClassMetrics {
    let wacc = match weighted_accuracy(&counts) {
        Ok(v) => Some(v),
        Err(_) => {
            warnings.push(format!(
                "class `{class}`: weighted accuracy undefined (P={}, N={}), excluded from Average",
                counts.positives(),
                counts.negatives()
            ));
            None
        }
    };
    ClassMetrics {
        class: class.to_string(),
        counts,
        wacc,
        f1: f1(&counts),
        wf1: weighted_f1(&counts).ok(),
        accuracy: plain_accuracy(&counts).unwrap_or(0.0),
    }
}

fn finish_task(
    task: &TaskSpec,
    per_class: Vec<ClassMetrics>,
    accuracy: f64,
    warnings: Vec<String>,
) -> TaskMetrics {
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.wacc).collect();
    let average_wacc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let average_f1 =
        per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len().max(1) as f64;
    TaskMetrics {
        task_id: task.task_id.clone(),
        kind: task.kind,
        per_class,
        average_wacc,
        average_f1,
        accuracy,
        warnings,
    }
}

/// One-vs-rest evaluation per emotion class: `sigmoid(logit) >=
/// class_threshold` marks a class positive.
pub fn evaluate_multilabel(
    task: &TaskSpec,
    logits: &Matrix,
    labels: &Matrix,
    class_threshold: f64,
) -> Result<TaskMetrics> {
    if logits.rows() != labels.rows() || logits.cols() != labels.cols() {
        return Err(Error::dims(
            "evaluate_multilabel",
            format!("{}x{}", logits.rows(), logits.cols()),
            format!("{}x{}", labels.rows(), labels.cols()),
        ));
    }
    if logits.cols() != task.output_dim {
        return Err(Error::dims("evaluate_multilabel classes", task.output_dim, logits.cols()));
    }
    let mut warnings = Vec::new();
    let mut per_class = Vec::with_capacity(task.classes.len());
    let mut correct_elems = 0u64;
    for (c, class) in task.classes.iter().enumerate() {
        let mut counts = ConfusionCounts::default();
        for r in 0..logits.rows() {
            let predicted = stable_sigmoid(logits.get(r, c)) >= class_threshold;
            let actual = labels.get(r, c) > 0.5;
            match (predicted, actual) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, false) => counts.tn += 1,
                (false, true) => counts.fn_ += 1,
            }
        }
        correct_elems += counts.tp + counts.tn;
        per_class.push(class_metrics(class, counts, &mut warnings));
    }
    let total_elems = (logits.rows() * logits.cols()).max(1) as f64;
    Ok(finish_task(
        task,
        per_class,
        correct_elems as f64 / total_elems,
        warnings,
    ))
}

/// Argmax evaluation for categorical tasks, with one-vs-rest per-class
/// metrics alongside plain accuracy.
pub fn evaluate_categorical(
    task: &TaskSpec,
    logits: &Matrix,
    class_indices: &[usize],
) -> Result<TaskMetrics> {
    if logits.rows() != class_indices.len() {
        return Err(Error::dims(
            "evaluate_categorical",
            logits.rows(),
            class_indices.len(),
        ));
    }
    if logits.cols() != task.output_dim {
        return Err(Error::dims("evaluate_categorical classes", task.output_dim, logits.cols()));
    }
    let predicted: Vec<usize> = (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    let correct = predicted
        .iter()
        .zip(class_indices.iter())
        .filter(|(p, a)| p == a)
        .count();
    let accuracy = correct as f64 / class_indices.len().max(1) as f64;

    let mut warnings = Vec::new();
    let mut per_class = Vec::with_capacity(task.classes.len());
    for (c, class) in task.classes.iter().enumerate() {
        let mut counts = ConfusionCounts::default();
        for (p, a) in predicted.iter().zip(class_indices.iter()) {
            match (*p == c, *a == c) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, false) => counts.tn += 1,
                (false, true) => counts.fn_ += 1,
            }
        }
        per_class.push(class_metrics(class, counts, &mut warnings));
    }
    Ok(finish_task(task, per_class, accuracy, warnings))
}

/// Frozen synthetic score distribution for the threshold-sweep analysis:
/// positive scores drawn from Beta(5,2), negatives from Beta(2,5).
pub fn imbalanced_score_fixture(
    seed: u64,
    n_pos: usize,
    n_neg: usize,
) -> (Vec<f64>, Vec<bool>) {
    use rand_distr::{Beta, Distribution};
    let mut rng = crate::util::derived_rng(seed, "metrics/score-fixture");
    let pos = Beta::new(5.0, 2.0).unwrap();
    let neg = Beta::new(2.0, 5.0).unwrap();
    let mut scores = Vec::with_capacity(n_pos + n_neg);
    let mut labels = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..n_pos {
        scores.push(pos.sample(&mut rng));
        labels.push(true);
    }
    for _ in 0..n_neg {
        scores.push(neg.sample(&mut rng));
        labels.push(false);
    }
    (scores, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::TaskKind;
    use rand::Rng;

    #[test]
    fn wacc_perfect_is_one() {
        let c = ConfusionCounts::new(40, 0, 60, 0);
        assert_eq!(weighted_accuracy(&c).unwrap(), 1.0);
    }

    #[test]
    fn wacc_all_negative_is_half() {
        let c = ConfusionCounts::new(0, 0, 60, 40);
        assert_eq!(weighted_accuracy(&c).unwrap(), 0.5);
    }

    #[test]
    fn wacc_hand_value() {
        // TP=30, P=40, TN=50, N=60 -> (30*1.5 + 50) / 120 = 95/120.
        let c = ConfusionCounts::new(30, 10, 50, 10);
        assert!((weighted_accuracy(&c).unwrap() - 95.0 / 120.0).abs() < 1e-12);
    }

    #[test]
    fn wacc_scale_free_under_duplication() {
        let c = ConfusionCounts::new(13, 7, 22, 5);
        let base = weighted_accuracy(&c).unwrap();
        for k in [2u64, 5, 11] {
            let scaled = ConfusionCounts::new(13 * k, 7 * k, 22 * k, 5 * k);
            assert!((weighted_accuracy(&scaled).unwrap() - base).abs() < 1e-15);
        }
    }

    #[test]
    fn wacc_undefined_without_both_classes() {
        assert!(weighted_accuracy(&ConfusionCounts::new(3, 0, 0, 1)).is_err());
        assert!(weighted_accuracy(&ConfusionCounts::new(0, 2, 5, 0)).is_err());
    }

    #[test]
    fn f1_values() {
        assert_eq!(f1(&ConfusionCounts::new(10, 0, 5, 0)), 1.0);
        assert_eq!(f1(&ConfusionCounts::new(0, 3, 5, 4)), 0.0);
        assert_eq!(f1(&ConfusionCounts::new(0, 0, 5, 0)), 0.0);
        assert!((f1(&ConfusionCounts::new(30, 10, 0, 10)) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn wf1_pathology_under_imbalance() {
        // 1:9 imbalance, all-negative predictor: WF1 stays high while
        // WAcc sits at chance.
        let c = ConfusionCounts::new(0, 0, 900, 100);
        let wf1 = weighted_f1(&c).unwrap();
        let expected = 0.9 * (2.0 * 900.0 / (2.0 * 900.0 + 100.0));
        assert!((wf1 - expected).abs() < 1e-12);
        assert!(wf1 > 0.85);
        assert_eq!(weighted_accuracy(&c).unwrap(), 0.5);
    }

    #[test]
    fn wf1_symmetric_counts() {
        let c = ConfusionCounts::new(25, 8, 25, 8);
        let wf1 = weighted_f1(&c).unwrap();
        assert!((wf1 - f1(&c)).abs() < 1e-15);
        assert!((wf1 - f1(&c.swapped())).abs() < 1e-15);
    }

    #[test]
    fn wf1_balanced_is_mean_of_both_f1s() {
        let c = ConfusionCounts::new(30, 20, 30, 20);
        assert_eq!(c.positives(), c.negatives());
        let expected = 0.5 * (f1(&c) + f1(&c.swapped()));
        assert!((weighted_f1(&c).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn sweep_extremes() {
        let (scores, labels) = imbalanced_score_fixture(1, 50, 450);
        let points = threshold_sweep(&scores, &labels, &[0.0, 1.000001]).unwrap();
        // tau = 0: everything positive.
        assert!((points[0].wacc - 0.5).abs() < 1e-12);
        // tau > 1: everything negative.
        assert!((points[1].wacc - 0.5).abs() < 1e-12);
        let all_neg = ConfusionCounts::new(0, 0, 450, 50);
        assert!((points[1].wf1 - weighted_f1(&all_neg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sweep_requires_sorted_thresholds() {
        let (scores, labels) = imbalanced_score_fixture(1, 5, 5);
        assert!(threshold_sweep(&scores, &labels, &[0.9, 0.1]).is_err());
        assert!(threshold_sweep(&[], &[], &[0.5]).is_err());
    }

    #[test]
    fn pearson_basics() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_matches_direct_formula() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![2.0, 4.0, 5.0, 9.0];
        // Direct covariance arithmetic.
        let n = 4.0;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        let sx = (x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n).sqrt();
        let sy = (y.iter().map(|b| (b - my) * (b - my)).sum::<f64>() / n).sqrt();
        assert!((pearson(&x, &y).unwrap() - cov / (sx * sy)).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_invariance_and_errors() {
        let x = vec![0.5, -1.0, 2.0, 0.25, 1.5];
        let y = vec![1.0, 0.0, 3.0, -2.0, 0.5];
        let base = pearson(&x, &y).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        assert!((pearson(&shifted, &y).unwrap() - base).abs() < 1e-12);
        let flipped: Vec<f64> = x.iter().map(|v| -2.0 * v + 1.0).collect();
        assert!((pearson(&flipped, &y).unwrap() + base).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    fn emotion_task(classes: usize) -> TaskSpec {
        TaskSpec::new(
            "emotion",
            TaskKind::Multilabel,
            (0..classes).map(|c| format!("e{c}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn multilabel_saturated_logits_are_perfect() {
        let task = emotion_task(3);
        let labels = Matrix::from_rows(&[
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
        ]);
        let logits = labels.map(|v| if v > 0.5 { 40.0 } else { -40.0 });
        let tm = evaluate_multilabel(&task, &logits, &labels, 0.5).unwrap();
        assert_eq!(tm.average_wacc, Some(1.0));
        assert_eq!(tm.average_f1, 1.0);
        for c in &tm.per_class {
            assert_eq!(c.wacc, Some(1.0));
            assert_eq!(c.f1, 1.0);
        }
    }

    #[test]
    fn multilabel_zero_logits_are_all_positive() {
        // sigmoid(0) = 0.5 and ties classify positive.
        let task = emotion_task(2);
        let labels = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let logits = Matrix::zeros(3, 2);
        let tm = evaluate_multilabel(&task, &logits, &labels, 0.5).unwrap();
        for c in &tm.per_class {
            assert_eq!(c.counts.tn, 0);
            assert_eq!(c.counts.fn_, 0);
            assert_eq!(c.wacc, Some(0.5));
        }
    }

    #[test]
    fn multilabel_matches_brute_force_oracle() {
        let mut rng = crate::util::derived_rng(99, "metrics/test");
        let task = emotion_task(4);
        let b = 500;
        let logits = Matrix::from_vec(
            b,
            4,
            (0..b * 4).map(|_| rng.random_range(-3.0..3.0)).collect(),
        );
        let labels = Matrix::from_vec(
            b,
            4,
            (0..b * 4)
                .map(|_| if rng.random_range(0.0..1.0) < 0.3 { 1.0 } else { 0.0 })
                .collect(),
        );
        let tm = evaluate_multilabel(&task, &logits, &labels, 0.5).unwrap();
        // Independent recount straight from the definitions.
        for c in 0..4 {
            let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
            for r in 0..b {
                let p = 1.0 / (1.0 + (-logits.get(r, c)).exp()) >= 0.5;
                let a = labels.get(r, c) == 1.0;
                match (p, a) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fn_ += 1,
                }
            }
            let counts = &tm.per_class[c].counts;
            assert_eq!((tp, fp, tn, fn_), (counts.tp, counts.fp, counts.tn, counts.fn_));
            let p = (tp + fn_) as f64;
            let n = (tn + fp) as f64;
            let wacc = (tp as f64 * n / p + tn as f64) / (2.0 * n);
            assert!((tm.per_class[c].wacc.unwrap() - wacc).abs() < 1e-12);
            let f1v = 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64);
            assert!((tm.per_class[c].f1 - f1v).abs() < 1e-12);
        }
    }

    #[test]
    fn multilabel_absent_class_excluded_with_warning() {
        let task = emotion_task(2);
        let labels = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let logits = Matrix::from_rows(&[vec![5.0, -5.0], vec![-5.0, -5.0]]);
        let tm = evaluate_multilabel(&task, &logits, &labels, 0.5).unwrap();
        // Class e0 has no negatives, class e1 has no positives: both
        // WAccs undefined, Average reports None plus warnings.
        assert_eq!(tm.per_class[0].wacc, None);
        assert_eq!(tm.per_class[1].wacc, None);
        assert_eq!(tm.average_wacc, None);
        assert_eq!(tm.warnings.len(), 2);
    }

    #[test]
    fn categorical_accuracy() {
        let task =
            TaskSpec::new("sarcasm", TaskKind::Categorical, vec!["no".into(), "yes".into()])
                .unwrap();
        let logits = Matrix::from_rows(&[
            vec![2.0, -1.0],
            vec![0.5, 1.5],
            vec![-1.0, 0.0],
            vec![3.0, 1.0],
        ]);
        let truth = vec![0, 1, 0, 1];
        let tm = evaluate_categorical(&task, &logits, &truth).unwrap();
        assert!((tm.accuracy - 0.75).abs() < 1e-12);
        assert_eq!(tm.per_class.len(), 2);
    }
}
