//! Minimal neural-network substrate: dense matrices, a reverse-mode
//! autodiff tape, and parameter storage with name-derived seeding.

pub mod matrix;
pub mod params;
pub mod tape;

pub use matrix::Matrix;
pub use params::{ParamId, ParamLayout, ParamVec};
pub use tape::{Graph, NodeId};
