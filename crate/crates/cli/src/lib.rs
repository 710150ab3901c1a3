//! File formats and pipeline plumbing for the `celltrack` binary.
//!
//! Everything here is deliberately boring: exact readers and writers
//! for the formats in FORMATS.md, a JSON config with flag overrides,
//! and the command implementations.  The science lives in
//! `celltrack-core`; this crate moves bytes.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod overlay;
pub mod pgm;
pub mod tables;
