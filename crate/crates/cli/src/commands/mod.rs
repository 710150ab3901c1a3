//! Subcommand implementations shared by the binary and the tests.

pub mod eval;
pub mod gradcheck;
pub mod infer;
pub mod synth;
pub mod train_dml;
pub mod train_gnn;

use std::path::PathBuf;

use celltrack_core::checkpoint::Checkpoint;
use celltrack_core::features::{extract_instances, CellInstance};
use celltrack_core::graph::NeighborhoodRule;
use celltrack_core::lineage::LineageForest;
use celltrack_core::synth::attach_gt_cells;
use celltrack_core::{Error, Result};
use serde_json::json;

use crate::dataset::read_dataset;

/// Reads datasets that must carry ground truth, returning per-sequence
/// instances (with ground-truth cells attached) and the forest.
pub fn load_training_sequences(
    dirs: &[PathBuf],
) -> Result<Vec<(Vec<CellInstance>, LineageForest)>> {
    let mut out = Vec::new();
    for dir in dirs {
        let ds = read_dataset(dir)?;
        let gt = ds.gt.ok_or_else(|| {
            Error::config(format!("{} has no ground truth; cannot train on it", dir.display()))
        })?;
        let mut instances = Vec::new();
        for frame in &ds.frames {
            instances.extend(extract_instances(frame));
        }
        attach_gt_cells(&mut instances, &gt)?;
        out.push((instances, gt));
    }
    Ok(out)
}

/// Pools instances of several sequences for metric learning, shifting
/// ground-truth cell ids so cells from different sequences never share
/// a class.
pub fn pooled_dml_instances(
    sequences: &[(Vec<CellInstance>, LineageForest)],
) -> Vec<CellInstance> {
    let mut pooled = Vec::new();
    let mut offset = 0u32;
    for (instances, gt) in sequences {
        for inst in instances {
            let mut i = inst.clone();
            i.gt_cell = i.gt_cell.map(|c| c + offset);
            pooled.push(i);
        }
        offset += gt.tracks.iter().map(|t| t.cell).max().unwrap_or(0) as u32;
    }
    pooled
}

/// Gate rule serialized into tracker checkpoint metadata.
pub fn gate_meta(rule: &NeighborhoodRule) -> serde_json::Value {
    json!({"gate": {"alpha": rule.alpha, "thresholds": rule.thresholds}})
}

pub fn gate_from_meta(ckpt: &Checkpoint) -> Result<NeighborhoodRule> {
    let gate = ckpt.meta_field("gate")?;
    let alpha = gate
        .get("alpha")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::config("checkpoint gate metadata lacks `alpha`"))?;
    let thresholds = gate
        .get("thresholds")
        .and_then(|v| v.as_array())
        .map(|a| a.iter().map(|v| v.as_f64()).collect::<Option<Vec<f64>>>())
        .flatten()
        .ok_or_else(|| Error::config("checkpoint gate metadata lacks `thresholds`"))?;
    let rule = NeighborhoodRule { alpha, thresholds };
    rule.validate()?;
    Ok(rule)
}
