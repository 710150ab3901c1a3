//! Cell tracking over microscopy sequences.
//!
//! The pipeline detects nothing itself; it consumes instance
//! segmentations, learns per-instance appearance embeddings with a
//! metric loss, links instances across frames with an edge-classifying
//! message-passing network over a motion-gated candidate graph, and
//! resolves the classified edges into a lineage forest that tracks
//! cells through divisions.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod gradsuite;
pub mod mlp;
pub mod tape;
pub mod tensor;

pub mod dml;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod infer;
pub mod lineage;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
