//! Versioned JSON checkpoints for trained weights.
//!
//! Values stay `f64` end to end; the JSON writer emits the shortest
//! representation that round-trips, so save followed by load reproduces
//! every weight bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::Param;
use crate::tensor::Tensor2;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// A complete set of weights plus free-form metadata (architecture
/// dimensions, gating rule, feature manifest) needed to rebuild the
/// model that produced them.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params(kind: &str, meta: serde_json::Value, params: &[&Param]) -> Result<Self> {
        let mut tensors = Vec::with_capacity(params.len());
        for p in params {
            p.value.check_finite(p.name())?;
            tensors.push(NamedTensor {
                name: p.name().to_string(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                data: p.value.data().to_vec(),
            });
        }
        Ok(Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: kind.to_string(),
            meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)
            .map_err(|e| Error::config(format!("cannot encode checkpoint: {}", e)))?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::config(format!("cannot decode {}: {}", path.display(), e)))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::config(format!(
                "{}: unsupported checkpoint format version {} (expected {})",
                path.display(),
                ckpt.format_version,
                CHECKPOINT_FORMAT_VERSION
            )));
        }
        Ok(ckpt)
    }

    /// Errors unless the checkpoint declares the expected model kind.
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::config(format!(
                "checkpoint holds a `{}` model, expected `{}`",
                self.kind, kind
            )));
        }
        Ok(())
    }

    /// Copies stored tensors into freshly built parameters.  Names and
    /// shapes must match one to one.
    pub fn apply_to_params(&self, params: &mut [&mut Param]) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(Error::config(format!(
                "checkpoint has {} tensors, model has {} parameters",
                self.tensors.len(),
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let t = self
                .tensors
                .iter()
                .find(|t| t.name == p.name())
                .ok_or_else(|| {
                    Error::config(format!("checkpoint is missing tensor `{}`", p.name()))
                })?;
            if t.rows != p.value.rows() || t.cols != p.value.cols() {
                return Err(Error::config(format!(
                    "tensor `{}` is {}x{} in the checkpoint but {}x{} in the model",
                    t.name,
                    t.rows,
                    t.cols,
                    p.value.rows(),
                    p.value.cols()
                )));
            }
            p.value = Tensor2::from_vec(t.rows, t.cols, t.data.clone());
        }
        Ok(())
    }

    /// Reads one metadata field, erroring with its name when absent.
    pub fn meta_field<'a>(&'a self, key: &str) -> Result<&'a serde_json::Value> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::config(format!("checkpoint metadata is missing `{}`", key)))
    }
}
