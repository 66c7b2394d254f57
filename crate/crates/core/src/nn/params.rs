//! Flat parameter storage with a named layout.
//!
//! Every parameter tensor of a model registers a name and shape; values
//! live in one flat `Vec<f64>` so the optimizer, checkpointing, gradient
//! checks, and checksums all operate on simple slices. Initialization is
//! derived from (seed, name), never from registration order: adding or
//! removing unrelated parameters (extra task heads, say) cannot shift
//! anyone else's starting point.

use std::collections::BTreeMap;

use rand::Rng;

use crate::nn::Matrix;
use crate::util::{derived_rng, fnv1a64, hex64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    by_name: BTreeMap<String, usize>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        let entry = ParamEntry {
            name: name.clone(),
            rows,
            cols,
            offset: self.total,
        };
        self.total += entry.len();
        self.entries.push(entry);
        self.by_name.insert(name, self.entries.len() - 1);
        ParamId(self.entries.len() - 1)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }
}

#[derive(Clone, Debug)]
pub struct ParamVec {
    pub data: Vec<f64>,
}

impl ParamVec {
    pub fn zeros(layout: &ParamLayout) -> Self {
        ParamVec {
            data: vec![0.0; layout.total_len()],
        }
    }

    /// Seeded initialization. Weight matrices get Xavier-uniform draws
    /// from a stream keyed by (seed, parameter name); biases and norm
    /// offsets start at zero, norm gains at one, LSTM forget gates at
    /// one, fusion logits at zero (uniform weights after softmax), and
    /// CLS embeddings at small Gaussian noise.
    pub fn init(layout: &ParamLayout, seed: u64) -> Self {
        let mut pv = ParamVec::zeros(layout);
        for entry in layout.entries() {
            let slice = &mut pv.data[entry.offset..entry.offset + entry.len()];
            let mut rng = derived_rng(seed, &format!("init/{}", entry.name));
            if entry.name.ends_with("/ln_gain") {
                slice.fill(1.0);
            } else if entry.name.ends_with("/ln_bias")
                || entry.name.ends_with("/bias")
                || entry.name.ends_with("/fusion_logits")
            {
                slice.fill(0.0);
            } else if entry.name.ends_with("/lstm_bias") {
                // Gate order i, f, g, o: bias the forget gate open.
                slice.fill(0.0);
                let h = entry.cols / 4;
                slice[h..2 * h].fill(1.0);
            } else if entry.name.ends_with("/cls") {
                for v in slice.iter_mut() {
                    *v = rng.random_range(-0.1..0.1);
                }
            } else {
                let bound = (6.0 / (entry.rows + entry.cols) as f64).sqrt();
                for v in slice.iter_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        pv
    }

    pub fn slice(&self, layout: &ParamLayout, id: ParamId) -> &[f64] {
        let e = layout.entry(id);
        &self.data[e.offset..e.offset + e.len()]
    }

    pub fn matrix(&self, layout: &ParamLayout, id: ParamId) -> Matrix {
        let e = layout.entry(id);
        Matrix::from_vec(e.rows, e.cols, self.data[e.offset..e.offset + e.len()].to_vec())
    }

    pub fn set(&mut self, layout: &ParamLayout, name: &str, values: &[f64]) {
        let id = layout
            .id_of(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        let e = layout.entry(id);
        assert_eq!(values.len(), e.len(), "size mismatch for `{name}`");
        self.data[e.offset..e.offset + e.len()].copy_from_slice(values);
    }

    /// FNV checksum of the bit patterns of every parameter whose name
    /// starts with one of the prefixes, in layout-name order.
    pub fn checksum_prefixed(&self, layout: &ParamLayout, prefixes: &[&str]) -> String {
        let mut names: Vec<&ParamEntry> = layout
            .entries()
            .iter()
            .filter(|e| prefixes.iter().any(|p| e.name.starts_with(p)))
            .collect();
        names.sort_by(|a, b| a.name.cmp(&b.name));
        let mut h: u64 = 0xcbf29ce484222325;
        for e in names {
            h ^= fnv1a64(e.name.as_bytes());
            h = h.wrapping_mul(0x100000001b3);
            for v in &self.data[e.offset..e.offset + e.len()] {
                for &b in &v.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        hex64(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_name_keyed_not_order_keyed() {
        let mut a = ParamLayout::new();
        a.register("backbone/w", 3, 4);
        a.register("head/main/w", 4, 2);
        let mut b = ParamLayout::new();
        b.register("head/aux/w", 4, 5);
        let wb = b.register("backbone/w", 3, 4);
        b.register("head/main/w", 4, 2);

        let pa = ParamVec::init(&a, 42);
        let pb = ParamVec::init(&b, 42);
        let ia = a.id_of("backbone/w").unwrap();
        assert_eq!(pa.slice(&a, ia), pb.slice(&b, wb));
        assert_eq!(
            pa.checksum_prefixed(&a, &["backbone/"]),
            pb.checksum_prefixed(&b, &["backbone/"])
        );
    }

    #[test]
    fn special_inits() {
        let mut layout = ParamLayout::new();
        layout.register("enc/ln_gain", 1, 4);
        layout.register("enc/lstm_bias", 1, 8);
        layout.register("fuse/fusion_logits", 1, 3);
        let pv = ParamVec::init(&layout, 0);
        assert_eq!(pv.slice(&layout, layout.id_of("enc/ln_gain").unwrap()), &[1.0; 4]);
        assert_eq!(
            pv.slice(&layout, layout.id_of("enc/lstm_bias").unwrap()),
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            pv.slice(&layout, layout.id_of("fuse/fusion_logits").unwrap()),
            &[0.0; 3]
        );
    }
}
