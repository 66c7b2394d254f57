//! On-disk dataset container.
//!
//! One human-readable `manifest.json` plus per-split binary feature
//! blobs and per-label-set binary label files. Feature and label
//! payloads are little-endian 32-bit floats, row-major, with byte
//! offsets and block sizes spelled out in the manifest, so files read
//! identically on any platform.
//!
//! Layout under a container root:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<split>.features.bin            train/valid/test
//! <root>/<task>.<provenance>.labels.bin  one per label set
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    validate_dataset, Dataset, FeatMatrix, LabelSet, Modality, ModalitySequence, Provenance,
    Sample, Split, TaskSpec,
};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockRef {
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleIndexEntry {
    pub sample_id: String,
    pub length: usize,
    pub text: BlockRef,
    pub audio: BlockRef,
    pub video: BlockRef,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, f32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelSetDescriptor {
    pub task: TaskSpec,
    pub provenance: Provenance,
    pub confidence: f64,
    pub source: Option<String>,
    pub file: String,
    pub sample_ids: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContainerManifest {
    pub format_version: u32,
    pub name: String,
    pub dims: Dims,
    pub splits: BTreeMap<Split, Vec<SampleIndexEntry>>,
    pub label_sets: Vec<LabelSetDescriptor>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Dims {
    pub text: usize,
    pub audio: usize,
    pub video: usize,
}

fn features_file(split: Split) -> String {
    format!("{}.features.bin", split.name())
}

fn labels_file(task_id: &str, provenance: Provenance) -> String {
    format!("{task_id}.{}.labels.bin", provenance.name())
}

fn push_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    buf.reserve(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn parse_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Serializes a clean dataset. Fails up front if the dataset does not
/// validate or contains samples outside every split.
pub fn write_container(dataset: &Dataset, dir: &Path) -> Result<()> {
    let report = validate_dataset(dataset);
    if !report.is_valid() {
        let first = &report.violations[0];
        return Err(Error::InvalidDataset(format!(
            "{} ({} violations total)",
            first.rule,
            report.violations.len()
        )));
    }
    let (dt, da, dv) = dataset
        .dims()
        .ok_or_else(|| Error::InvalidDataset("dataset has no samples in any split".into()))?;
    let in_split: usize = Split::ALL.iter().map(|s| dataset.split_ids(*s).len()).sum();
    if in_split != dataset.samples.len() {
        return Err(Error::InvalidDataset(
            "every sample must belong to a split before writing".into(),
        ));
    }

    fs::create_dir_all(dir)?;
    let mut manifest = ContainerManifest {
        format_version: FORMAT_VERSION,
        name: dataset.name.clone(),
        dims: Dims {
            text: dt,
            audio: da,
            video: dv,
        },
        splits: BTreeMap::new(),
        label_sets: Vec::new(),
    };

    for split in Split::ALL {
        let ids = dataset.split_ids(split);
        if ids.is_empty() {
            continue;
        }
        let mut blob: Vec<u8> = Vec::new();
        let mut entries = Vec::with_capacity(ids.len());
        for id in ids {
            let sample = &dataset.samples[id];
            let mut entry = SampleIndexEntry {
                sample_id: id.clone(),
                length: sample.text.length,
                text: BlockRef { offset: 0, bytes: 0 },
                audio: BlockRef { offset: 0, bytes: 0 },
                video: BlockRef { offset: 0, bytes: 0 },
                meta: sample.meta.clone(),
            };
            for m in [Modality::Text, Modality::Audio, Modality::Video] {
                let seq = sample.modality(m);
                let block = BlockRef {
                    offset: blob.len() as u64,
                    bytes: (seq.features.data().len() * 4) as u64,
                };
                push_f32s(&mut blob, seq.features.data());
                match m {
                    Modality::Text => entry.text = block,
                    Modality::Audio => entry.audio = block,
                    Modality::Video => entry.video = block,
                }
            }
            entries.push(entry);
        }
        fs::write(dir.join(features_file(split)), &blob)?;
        manifest.splits.insert(split, entries);
    }

    for ls in &dataset.label_sets {
        let descriptor = write_label_file(dir, ls)?;
        manifest.label_sets.push(descriptor);
    }

    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

fn write_label_file(dir: &Path, ls: &LabelSet) -> Result<LabelSetDescriptor> {
    let file = labels_file(&ls.task.task_id, ls.provenance);
    let mut blob: Vec<u8> = Vec::new();
    let mut sample_ids = Vec::with_capacity(ls.labels.len());
    for (id, vector) in &ls.labels {
        push_f32s(&mut blob, vector);
        sample_ids.push(id.clone());
    }
    fs::write(dir.join(&file), &blob)?;
    Ok(LabelSetDescriptor {
        task: ls.task.clone(),
        provenance: ls.provenance,
        confidence: ls.confidence,
        source: ls.source.clone(),
        file,
        sample_ids,
    })
}

/// Adds one label set to an existing container without rewriting the
/// feature blobs: writes the label file and updates the manifest.
pub fn attach_labels_to_container(dir: &Path, ls: &LabelSet) -> Result<()> {
    let mut manifest = read_manifest(dir)?;
    if manifest
        .label_sets
        .iter()
        .any(|d| d.task.task_id == ls.task.task_id && d.provenance == ls.provenance)
    {
        return Err(Error::DuplicateLabelSet {
            task: ls.task.task_id.clone(),
            provenance: ls.provenance.name().to_string(),
        });
    }
    let descriptor = write_label_file(dir, ls)?;
    manifest.label_sets.push(descriptor);
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<ContainerManifest> {
    let manifest: ContainerManifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.format_version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

fn check_block(
    file: &str,
    file_len: u64,
    block: &BlockRef,
    expected_bytes: u64,
    what: &str,
) -> Result<()> {
    if block.bytes != expected_bytes {
        return Err(Error::dims(
            format!("{file}: {what}"),
            format!("{expected_bytes} bytes"),
            format!("{} bytes", block.bytes),
        ));
    }
    if block.offset + block.bytes > file_len {
        return Err(Error::TruncatedPayload {
            file: file.to_string(),
            needed: block.offset + block.bytes,
            available: file_len,
        });
    }
    Ok(())
}

pub fn read_container(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let dims = manifest.dims;
    let mut dataset = Dataset::new(manifest.name.clone());

    for (split, entries) in &manifest.splits {
        let file = features_file(*split);
        let blob = fs::read(dir.join(&file))?;
        let file_len = blob.len() as u64;
        let mut expected_total = 0u64;
        let mut ids = Vec::with_capacity(entries.len());
        for entry in entries {
            let s = entry.length;
            let mut mats: Vec<FeatMatrix> = Vec::with_capacity(3);
            for (block, d, what) in [
                (&entry.text, dims.text, "text block"),
                (&entry.audio, dims.audio, "audio block"),
                (&entry.video, dims.video, "video block"),
            ] {
                let expected = (s * d * 4) as u64;
                if block.offset != expected_total {
                    return Err(Error::ManifestInvalid(format!(
                        "{file}: {what} of `{}` at offset {}, expected {}",
                        entry.sample_id, block.offset, expected_total
                    )));
                }
                check_block(&file, file_len, block, expected, what)?;
                let bytes = &blob[block.offset as usize..(block.offset + block.bytes) as usize];
                mats.push(FeatMatrix::new(s, d, parse_f32s(bytes)));
                expected_total += expected;
            }
            let mut it = mats.into_iter();
            let sample = Sample {
                sample_id: entry.sample_id.clone(),
                text: ModalitySequence::new(Modality::Text, it.next().unwrap()),
                audio: ModalitySequence::new(Modality::Audio, it.next().unwrap()),
                video: ModalitySequence::new(Modality::Video, it.next().unwrap()),
                meta: entry.meta.clone(),
            };
            dataset.samples.insert(entry.sample_id.clone(), sample);
            ids.push(entry.sample_id.clone());
        }
        if file_len != expected_total {
            return Err(Error::dims(
                format!("{file}: payload size"),
                format!("{expected_total} bytes"),
                format!("{file_len} bytes"),
            ));
        }
        dataset.splits.insert(*split, ids);
    }

    for descriptor in &manifest.label_sets {
        let blob = fs::read(dir.join(&descriptor.file))?;
        let file_len = blob.len() as u64;
        let dy = descriptor.task.output_dim;
        let per_sample = (dy * 4) as u64;
        let needed = per_sample * descriptor.sample_ids.len() as u64;
        if file_len < needed {
            return Err(Error::TruncatedPayload {
                file: descriptor.file.clone(),
                needed,
                available: file_len,
            });
        }
        if file_len != needed {
            return Err(Error::dims(
                format!("{}: payload size", descriptor.file),
                format!("{needed} bytes"),
                format!("{file_len} bytes"),
            ));
        }
        let mut labels = BTreeMap::new();
        for (i, id) in descriptor.sample_ids.iter().enumerate() {
            let at = i * dy * 4;
            labels.insert(id.clone(), parse_f32s(&blob[at..at + dy * 4]));
        }
        dataset.label_sets.push(LabelSet {
            task: descriptor.task.clone(),
            provenance: descriptor.provenance,
            labels,
            confidence: descriptor.confidence,
            source: descriptor.source.clone(),
        });
    }

    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synthetic::{generate_synthetic, SyntheticConfig, TaskGenSpec};
    use crate::util::fnv1a64;
    use tempfile::tempdir;

    fn config(n: usize) -> SyntheticConfig {
        SyntheticConfig {
            name: "container-test".into(),
            n_train: n,
            n_valid: (n / 4).max(1),
            n_test: (n / 4).max(1),
            seq_len_range: (1, 5),
            dims: (8, 5, 3),
            latent_dim: 3,
            tasks: vec![
                TaskGenSpec::categorical("senti", 2),
                TaskGenSpec::multilabel("emo", 3),
            ],
            correlation: 0.5,
            label_noise: 0.1,
            feature_noise: 1.0,
            seed: 21,
            sample_seed: None,
        }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let ds = generate_synthetic(&config(3)).unwrap();
        let dir = tempdir().unwrap();
        write_container(&ds, dir.path()).unwrap();
        let back = read_container(dir.path()).unwrap();
        assert_eq!(ds, back);
        // A clean dataset still validates after a container round trip.
        assert!(validate_dataset(&back).is_valid());
    }

    #[test]
    fn large_roundtrip_checksum_matches() {
        let ds = generate_synthetic(&config(1000)).unwrap();
        let checksum_of = |d: &Dataset| {
            let mut bytes: Vec<u8> = Vec::new();
            for split in Split::ALL {
                for id in d.split_ids(split) {
                    let s = &d.samples[id];
                    for m in [Modality::Text, Modality::Audio, Modality::Video] {
                        for v in s.modality(m).features.data() {
                            bytes.extend_from_slice(&v.to_le_bytes());
                        }
                    }
                }
            }
            for ls in &d.label_sets {
                for (id, vector) in &ls.labels {
                    bytes.extend_from_slice(id.as_bytes());
                    for v in vector {
                        bytes.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            fnv1a64(&bytes)
        };
        let before = checksum_of(&ds);
        let dir = tempdir().unwrap();
        write_container(&ds, dir.path()).unwrap();
        let back = read_container(dir.path()).unwrap();
        assert_eq!(before, checksum_of(&back));
    }

    #[test]
    fn version_mismatch_rejected() {
        let ds = generate_synthetic(&config(2)).unwrap();
        let dir = tempdir().unwrap();
        write_container(&ds, dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            read_container(dir.path()),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn truncated_features_detected() {
        let ds = generate_synthetic(&config(2)).unwrap();
        let dir = tempdir().unwrap();
        write_container(&ds, dir.path()).unwrap();
        let path = dir.path().join("train.features.bin");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            read_container(dir.path()),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn manifest_dims_disagreeing_with_payload_detected() {
        // Forge the manifest: claim the audio stream is 6-wide while the
        // payload was written with 5-wide rows.
        let ds = generate_synthetic(&config(2)).unwrap();
        let dir = tempdir().unwrap();
        write_container(&ds, dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"audio\": 5", "\"audio\": 6");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            read_container(dir.path()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn attach_labels_updates_manifest_in_place() {
        let ds = generate_synthetic(&config(2)).unwrap();
        let dir = tempdir().unwrap();
        write_container(&ds, dir.path()).unwrap();

        let strong = ds.label_set_any("senti").unwrap();
        let weak = LabelSet::weak(
            strong.task.clone(),
            strong.labels.clone(),
            0.8325,
            "labeler@other",
        );
        attach_labels_to_container(dir.path(), &weak).unwrap();
        let back = read_container(dir.path()).unwrap();
        let got = back.label_set("senti", Provenance::Weak).unwrap();
        assert_eq!(got.confidence, 0.8325);
        assert_eq!(got.source.as_deref(), Some("labeler@other"));
        assert_eq!(got.labels, weak.labels);

        // Double attach of the same (task, provenance) pair is rejected.
        assert!(matches!(
            attach_labels_to_container(dir.path(), &weak),
            Err(Error::DuplicateLabelSet { .. })
        ));
    }

    #[test]
    fn invalid_dataset_refused_at_write() {
        let mut ds = generate_synthetic(&config(2)).unwrap();
        ds.label_sets[0].confidence = 0.4; // strong set must stay at 1.0
        let dir = tempdir().unwrap();
        assert!(matches!(
            write_container(&ds, dir.path()),
            Err(Error::InvalidDataset(_))
        ));
    }
}
