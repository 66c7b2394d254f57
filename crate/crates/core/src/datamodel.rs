//! Dataset, sample, task, and label abstractions shared by every other
//! module.
//!
//! A dataset holds word-aligned feature sequences for three modalities
//! plus any number of label sets. Labels live apart from samples so one
//! dataset can carry a strong label set and several weak ones for
//! different tasks at the same time; weak labels are acquired post hoc
//! and never mutate source data.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Audio,
    Video,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Feature matrix stored at 32-bit precision (the container's payload
/// precision); model math upcasts to f64 at batch time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "feature data length mismatch");
        FeatMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// One aligned feature sequence: `length` word steps of `dim`-wide
/// feature vectors for a single modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalitySequence {
    pub modality: Modality,
    pub features: FeatMatrix,
    pub length: usize,
}

impl ModalitySequence {
    pub fn new(modality: Modality, features: FeatMatrix) -> Self {
        let length = features.rows();
        ModalitySequence {
            modality,
            features,
            length,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Multiple classes may be positive at once (emotion).
    Multilabel,
    /// Exactly one class per sample (sentiment, sarcasm).
    Categorical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    WeightedBinaryCrossEntropy,
    CrossEntropy,
}

/// A task's identity, class space, loss kind, and head output width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub kind: TaskKind,
    pub classes: Vec<String>,
    pub output_dim: usize,
    pub loss: LossKind,
}

impl TaskSpec {
    /// Builds a task with the loss implied by its kind: multilabel pairs
    /// with weighted binary cross-entropy, categorical with cross-entropy.
    pub fn new(task_id: impl Into<String>, kind: TaskKind, classes: Vec<String>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "task needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let loss = match kind {
            TaskKind::Multilabel => LossKind::WeightedBinaryCrossEntropy,
            TaskKind::Categorical => LossKind::CrossEntropy,
        };
        Ok(TaskSpec {
            task_id: task_id.into(),
            kind,
            output_dim: classes.len(),
            classes,
            loss,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Strong,
    Weak,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Strong => "strong",
            Provenance::Weak => "weak",
        }
    }
}

/// Strong or weak labels for one task over a dataset.
///
/// Label vectors are `output_dim` wide: 0/1 per class for multilabel
/// tasks, one-hot for categorical ones. A strong set always has
/// confidence 1; a weak set carries its labeler's accuracy and names
/// its source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub task: TaskSpec,
    pub provenance: Provenance,
    pub labels: BTreeMap<String, Vec<f32>>,
    pub confidence: f64,
    pub source: Option<String>,
}

impl LabelSet {
    pub fn strong(task: TaskSpec, labels: BTreeMap<String, Vec<f32>>) -> Self {
        LabelSet {
            task,
            provenance: Provenance::Strong,
            labels,
            confidence: 1.0,
            source: None,
        }
    }

    pub fn weak(
        task: TaskSpec,
        labels: BTreeMap<String, Vec<f32>>,
        confidence: f64,
        source: impl Into<String>,
    ) -> Self {
        LabelSet {
            task,
            provenance: Provenance::Weak,
            labels,
            confidence,
            source: Some(source.into()),
        }
    }

    /// Class index for a categorical label vector (argmax; ties take the
    /// lowest index).
    pub fn class_index(vector: &[f32]) -> usize {
        let mut best = 0;
        for (i, &v) in vector.iter().enumerate() {
            if v > vector[best] {
                best = i;
            }
        }
        best
    }
}

/// One utterance: three aligned modality sequences. Labels live in
/// [`LabelSet`]s, not on the sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub text: ModalitySequence,
    pub audio: ModalitySequence,
    pub video: ModalitySequence,
    /// Optional scalar side data (e.g. a raw sentiment score before
    /// binarization).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, f32>,
}

impl Sample {
    pub fn modality(&self, m: Modality) -> &ModalitySequence {
        match m {
            Modality::Text => &self.text,
            Modality::Audio => &self.audio,
            Modality::Video => &self.video,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: BTreeMap<String, Sample>,
    /// Split membership in manifest order; that order defines iteration
    /// order before any seeded shuffling.
    pub splits: BTreeMap<Split, Vec<String>>,
    pub label_sets: Vec<LabelSet>,
}

impl Dataset {
    pub fn new(name: impl Into<String>) -> Self {
        Dataset {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Per-modality feature dims taken from the first sample in split
    /// order (the dataset profile all samples must share).
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.iter_split_order()
            .next()
            .map(|s| (s.text.dim(), s.audio.dim(), s.video.dim()))
    }

    pub fn split_ids(&self, split: Split) -> &[String] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    fn iter_split_order(&self) -> impl Iterator<Item = &Sample> {
        Split::ALL
            .iter()
            .flat_map(|s| self.split_ids(*s).iter())
            .filter_map(|id| self.samples.get(id))
    }

    pub fn label_set(&self, task_id: &str, provenance: Provenance) -> Option<&LabelSet> {
        self.label_sets
            .iter()
            .find(|ls| ls.task.task_id == task_id && ls.provenance == provenance)
    }

    /// Preferred lookup when provenance is not pinned: strong first.
    pub fn label_set_any(&self, task_id: &str) -> Option<&LabelSet> {
        self.label_set(task_id, Provenance::Strong)
            .or_else(|| self.label_set(task_id, Provenance::Weak))
    }

    /// Attaches a label set, rejecting duplicates of the same
    /// (task, provenance) pair: a weak set can never displace a strong
    /// one, nor vice versa.
    pub fn attach_label_set(&mut self, ls: LabelSet) -> Result<()> {
        if self.label_set(&ls.task.task_id, ls.provenance).is_some() {
            return Err(Error::DuplicateLabelSet {
                task: ls.task.task_id.clone(),
                provenance: ls.provenance.name().to_string(),
            });
        }
        self.label_sets.push(ls);
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub sample_id: Option<String>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, rule: &str, sample_id: Option<&str>, detail: String) {
        self.violations.push(Violation {
            rule: rule.to_string(),
            sample_id: sample_id.map(str::to_string),
            detail,
        });
    }
}

/// Checks every dataset invariant and reports all violations; never
/// mutates and never fails — bad data is data, not an error.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    // Split membership.
    let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
    for split in Split::ALL {
        for id in dataset.split_ids(split) {
            if !dataset.samples.contains_key(id) {
                report.push(
                    "split references unknown sample",
                    Some(id),
                    format!("{} split lists `{id}` but no such sample exists", split.name()),
                );
            }
            if let Some(prev) = seen.insert(id, split) {
                report.push(
                    "splits overlap",
                    Some(id),
                    format!("sample in both {} and {}", prev.name(), split.name()),
                );
            }
        }
    }

    // Per-sample shape invariants against the dataset profile.
    let dims = dataset.dims();
    for (id, sample) in &dataset.samples {
        let (st, sa, sv) = (sample.text.length, sample.audio.length, sample.video.length);
        if st != sa || st != sv {
            report.push(
                "unequal modality lengths",
                Some(id),
                format!("text {st}, audio {sa}, video {sv}"),
            );
        }
        for seq in [&sample.text, &sample.audio, &sample.video] {
            if seq.features.rows() != seq.length {
                report.push(
                    "feature row count mismatch",
                    Some(id),
                    format!(
                        "{:?} declares length {} but has {} feature rows",
                        seq.modality,
                        seq.length,
                        seq.features.rows()
                    ),
                );
            }
            for r in 0..seq.features.rows() {
                if seq.features.row(r).iter().all(|v| !v.is_finite()) {
                    report.push(
                        "non-finite feature row",
                        Some(id),
                        format!("{:?} row {r} is entirely non-finite", seq.modality),
                    );
                }
            }
        }
        if let Some((dt, da, dv)) = dims {
            let actual = (sample.text.dim(), sample.audio.dim(), sample.video.dim());
            if actual != (dt, da, dv) {
                report.push(
                    "modality dims mismatch",
                    Some(id),
                    format!("expected ({dt},{da},{dv}), got {actual:?}"),
                );
            }
        }
    }

    // Label-set invariants.
    let mut pairs: BTreeSet<(String, Provenance)> = BTreeSet::new();
    for ls in &dataset.label_sets {
        let key = (ls.task.task_id.clone(), ls.provenance);
        if !pairs.insert(key) {
            report.push(
                "duplicate label set",
                None,
                format!("task `{}`, provenance {}", ls.task.task_id, ls.provenance.name()),
            );
        }
        if ls.provenance == Provenance::Strong && ls.confidence != 1.0 {
            report.push(
                "strong label confidence must be 1.0",
                None,
                format!("task `{}` has confidence {}", ls.task.task_id, ls.confidence),
            );
        }
        if ls.provenance == Provenance::Weak && ls.source.as_deref().unwrap_or("").is_empty() {
            report.push(
                "weak label missing source",
                None,
                format!("task `{}`", ls.task.task_id),
            );
        }
        if !(0.0..=1.0).contains(&ls.confidence) {
            report.push(
                "confidence out of range",
                None,
                format!("task `{}` confidence {}", ls.task.task_id, ls.confidence),
            );
        }
        for (sid, vector) in &ls.labels {
            if !dataset.samples.contains_key(sid) {
                report.push(
                    "label references unknown sample",
                    Some(sid),
                    format!("task `{}`", ls.task.task_id),
                );
            }
            if vector.len() != ls.task.output_dim {
                report.push(
                    "label dimension mismatch",
                    Some(sid),
                    format!(
                        "task `{}` expects {} entries, got {}",
                        ls.task.task_id,
                        ls.task.output_dim,
                        vector.len()
                    ),
                );
            }
        }
    }

    report
}

/// Per-class positive counts per split for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub task_id: String,
    pub classes: Vec<String>,
    pub counts: BTreeMap<Split, Vec<usize>>,
}

impl SplitStats {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("task: {}\n", self.task_id));
        out.push_str(&format!("{:<16}", "class"));
        for split in Split::ALL {
            out.push_str(&format!("{:>8}", split.name()));
        }
        out.push('\n');
        for (i, class) in self.classes.iter().enumerate() {
            out.push_str(&format!("{class:<16}"));
            for split in Split::ALL {
                let n = self.counts.get(&split).map(|c| c[i]).unwrap_or(0);
                out.push_str(&format!("{n:>8}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Counts positive examples per class per split. Multilabel samples
/// count once per positive class; categorical samples count under their
/// argmax class.
pub fn split_stats(dataset: &Dataset, task_id: &str) -> Result<SplitStats> {
    let ls = dataset
        .label_set_any(task_id)
        .ok_or_else(|| Error::MissingLabelSet {
            task: task_id.to_string(),
            dataset: dataset.name.clone(),
        })?;
    let n_classes = ls.task.classes.len();
    let mut counts: BTreeMap<Split, Vec<usize>> = BTreeMap::new();
    for split in Split::ALL {
        let mut row = vec![0usize; n_classes];
        for id in dataset.split_ids(split) {
            let Some(vector) = ls.labels.get(id) else { continue };
            match ls.task.kind {
                TaskKind::Multilabel => {
                    for (c, &v) in vector.iter().enumerate().take(n_classes) {
                        if v > 0.5 {
                            row[c] += 1;
                        }
                    }
                }
                TaskKind::Categorical => {
                    let c = LabelSet::class_index(vector);
                    if c < n_classes {
                        row[c] += 1;
                    }
                }
            }
        }
        counts.insert(split, row);
    }
    Ok(SplitStats {
        task_id: task_id.to_string(),
        classes: ls.task.classes.clone(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(modality: Modality, len: usize, dim: usize, fill: f32) -> ModalitySequence {
        ModalitySequence::new(modality, FeatMatrix::new(len, dim, vec![fill; len * dim]))
    }

    pub(crate) fn tiny_sample(id: &str, len: usize) -> Sample {
        Sample {
            sample_id: id.to_string(),
            text: seq(Modality::Text, len, 4, 0.1),
            audio: seq(Modality::Audio, len, 3, 0.2),
            video: seq(Modality::Video, len, 2, 0.3),
            meta: BTreeMap::new(),
        }
    }

    fn tiny_dataset() -> Dataset {
        let mut ds = Dataset::new("tiny");
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            ds.samples.insert(id.to_string(), tiny_sample(id, 2 + i));
        }
        ds.splits.insert(Split::Train, vec!["a".into(), "b".into()]);
        ds.splits.insert(Split::Test, vec!["c".into()]);
        ds
    }

    fn binary_task(id: &str) -> TaskSpec {
        TaskSpec::new(id, TaskKind::Categorical, vec!["neg".into(), "pos".into()]).unwrap()
    }

    #[test]
    fn well_formed_dataset_validates_cleanly() {
        let mut ds = tiny_dataset();
        let task = binary_task("t");
        let labels: BTreeMap<String, Vec<f32>> = [
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
            ("c".to_string(), vec![1.0, 0.0]),
        ]
        .into();
        ds.attach_label_set(LabelSet::strong(task, labels)).unwrap();
        let report = validate_dataset(&ds);
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn unequal_modality_lengths_flagged() {
        let mut ds = tiny_dataset();
        let s = ds.samples.get_mut("a").unwrap();
        s.audio = seq(Modality::Audio, 5, 3, 0.0);
        s.text = seq(Modality::Text, 7, 4, 0.0);
        s.video = seq(Modality::Video, 7, 2, 0.0);
        let report = validate_dataset(&ds);
        let hits: Vec<_> = report
            .violations
            .iter()
            .filter(|v| v.rule == "unequal modality lengths")
            .collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].sample_id.as_deref(), Some("a"));
    }

    #[test]
    fn strong_confidence_below_one_flagged() {
        let mut ds = tiny_dataset();
        let mut ls = LabelSet::strong(binary_task("t"), BTreeMap::new());
        ls.confidence = 0.8;
        ds.label_sets.push(ls);
        let report = validate_dataset(&ds);
        assert!(report
            .violations
            .iter()
            .any(|v| v.rule == "strong label confidence must be 1.0"));
    }

    #[test]
    fn weak_without_source_flagged() {
        let mut ds = tiny_dataset();
        let mut ls = LabelSet::weak(binary_task("t"), BTreeMap::new(), 0.9, "x");
        ls.source = None;
        ds.label_sets.push(ls);
        let report = validate_dataset(&ds);
        assert!(report.violations.iter().any(|v| v.rule == "weak label missing source"));
    }

    #[test]
    fn duplicate_label_set_rejected_on_attach() {
        let mut ds = tiny_dataset();
        ds.attach_label_set(LabelSet::strong(binary_task("t"), BTreeMap::new()))
            .unwrap();
        let err = ds
            .attach_label_set(LabelSet::strong(binary_task("t"), BTreeMap::new()))
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateLabelSet { .. }));
        // Same task under a different provenance is fine.
        ds.attach_label_set(LabelSet::weak(binary_task("t"), BTreeMap::new(), 0.9, "m"))
            .unwrap();
    }

    #[test]
    fn split_stats_counts_and_totals() {
        let mut ds = tiny_dataset();
        let task = binary_task("senti");
        let labels: BTreeMap<String, Vec<f32>> = [
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
            ("c".to_string(), vec![0.0, 1.0]),
        ]
        .into();
        ds.attach_label_set(LabelSet::strong(task, labels)).unwrap();
        let stats = split_stats(&ds, "senti").unwrap();
        assert_eq!(stats.counts[&Split::Train], vec![1, 1]);
        assert_eq!(stats.counts[&Split::Test], vec![0, 1]);
        // Categorical totals per split equal split size.
        for split in [Split::Train, Split::Test] {
            let total: usize = stats.counts[&split].iter().sum();
            assert_eq!(total, ds.split_ids(split).len());
        }
    }

    #[test]
    fn split_stats_unknown_task_errors() {
        let ds = tiny_dataset();
        assert!(matches!(
            split_stats(&ds, "nope"),
            Err(Error::MissingLabelSet { .. })
        ));
    }

    #[test]
    fn split_stats_empty_dataset_all_zero() {
        let mut ds = Dataset::new("empty");
        ds.attach_label_set(LabelSet::strong(binary_task("t"), BTreeMap::new()))
            .unwrap();
        let stats = split_stats(&ds, "t").unwrap();
        for split in Split::ALL {
            assert_eq!(stats.counts[&split], vec![0, 0]);
        }
    }
}
