//! Segment reduction and batch assembly with padding + masking.

use crate::datamodel::{Modality, Sample};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Collapses the feature segments aligned to one word into a single
/// vector by element-wise arithmetic mean. Accumulation runs at 64-bit.
pub fn reduce_segments(segments: &[Vec<f32>]) -> Result<Vec<f32>> {
    let Some(first) = segments.first() else {
        return Err(Error::EmptySegments);
    };
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for seg in segments {
        if seg.len() != dim {
            return Err(Error::dims("reduce_segments", dim, seg.len()));
        }
        for (a, &v) in acc.iter_mut().zip(seg.iter()) {
            *a += v as f64;
        }
    }
    let n = segments.len() as f64;
    Ok(acc.into_iter().map(|v| (v / n) as f32).collect())
}

/// A padded batch: three `(B, S_max, d_m)` tensors and a `(B, S_max)`
/// 0/1 mask whose row sums equal the original sequence lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub sample_ids: Vec<String>,
    pub batch_size: usize,
    pub max_len: usize,
    pub dims: (usize, usize, usize),
    text: Vec<f32>,
    audio: Vec<f32>,
    video: Vec<f32>,
    mask: Vec<u8>,
}

impl PaddedBatch {
    fn tensor(&self, m: Modality) -> (&[f32], usize) {
        match m {
            Modality::Text => (&self.text, self.dims.0),
            Modality::Audio => (&self.audio, self.dims.1),
            Modality::Video => (&self.video, self.dims.2),
        }
    }

    /// Raw padded feature block for one sample: `S_max` rows of `d_m`.
    pub fn modality_rows(&self, b: usize, m: Modality) -> &[f32] {
        let (data, d) = self.tensor(m);
        &data[b * self.max_len * d..(b + 1) * self.max_len * d]
    }

    /// The padded sample sequence as an f64 matrix for the model side.
    pub fn modality_matrix(&self, b: usize, m: Modality) -> Matrix {
        let (_, d) = self.tensor(m);
        let rows = self.modality_rows(b, m);
        Matrix::from_vec(self.max_len, d, rows.iter().map(|&v| v as f64).collect())
    }

    pub fn mask_row(&self, b: usize) -> &[u8] {
        &self.mask[b * self.max_len..(b + 1) * self.max_len]
    }

    pub fn mask_bools(&self, b: usize) -> Vec<bool> {
        self.mask_row(b).iter().map(|&m| m != 0).collect()
    }

    pub fn length(&self, b: usize) -> usize {
        self.mask_row(b).iter().map(|&m| m as usize).sum()
    }
}

/// Pads a non-empty list of samples to the longest sequence. Rows beyond
/// each sample's length are zero and masked out.
pub fn pad_and_mask(samples: &[&Sample]) -> Result<PaddedBatch> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidConfig("pad_and_mask: empty batch".into()));
    };
    let dims = (first.text.dim(), first.audio.dim(), first.video.dim());
    let max_len = samples.iter().map(|s| s.text.length).max().unwrap_or(0);
    let b = samples.len();

    let mut batch = PaddedBatch {
        sample_ids: samples.iter().map(|s| s.sample_id.clone()).collect(),
        batch_size: b,
        max_len,
        dims,
        text: vec![0.0; b * max_len * dims.0],
        audio: vec![0.0; b * max_len * dims.1],
        video: vec![0.0; b * max_len * dims.2],
        mask: vec![0; b * max_len],
    };

    for (i, sample) in samples.iter().enumerate() {
        let actual = (sample.text.dim(), sample.audio.dim(), sample.video.dim());
        if actual != dims {
            return Err(Error::dims(
                format!("pad_and_mask sample `{}`", sample.sample_id),
                format!("{dims:?}"),
                format!("{actual:?}"),
            ));
        }
        for (m, dst, d) in [
            (Modality::Text, &mut batch.text, dims.0),
            (Modality::Audio, &mut batch.audio, dims.1),
            (Modality::Video, &mut batch.video, dims.2),
        ] {
            let seq = sample.modality(m);
            for r in 0..seq.length {
                let at = (i * max_len + r) * d;
                dst[at..at + d].copy_from_slice(seq.features.row(r));
            }
        }
        for r in 0..sample.text.length {
            batch.mask[i * max_len + r] = 1;
        }
    }
    Ok(batch)
}
