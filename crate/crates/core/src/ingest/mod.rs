//! Dataset I/O: the on-disk container, batch assembly with padding and
//! masking, segment reduction, and synthetic data generation.

pub mod batch;
pub mod container;
pub mod synthetic;

pub use batch::{pad_and_mask, reduce_segments, PaddedBatch};
pub use container::{
    attach_labels_to_container, read_container, read_manifest, write_container, ContainerManifest,
};
pub use synthetic::{
    generate_synthetic, generate_synthetic_traced, GeneratorTrace, SyntheticConfig, TaskGenSpec,
};
