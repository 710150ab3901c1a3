//! Dataset directories: frames, label maps, metadata, and optional
//! ground truth.
//!
//! Layout: `meta.json`, `img_%04d.pgm` and `seg_%04d.pgm` for frames
//! 1..=T, plus `gt_tracks.txt` / `gt_instances.csv` when ground truth
//! exists.

use std::fs;
use std::path::Path;

use celltrack_core::features::FrameRecord;
use celltrack_core::lineage::LineageForest;
use celltrack_core::synth::SynthDataset;
use celltrack_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::pgm;
use crate::tables;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub maxval: u16,
}

#[derive(Debug)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub frames: Vec<FrameRecord>,
    pub gt: Option<LineageForest>,
}

fn image_path(dir: &Path, t: usize) -> std::path::PathBuf {
    dir.join(format!("img_{:04}.pgm", t))
}

fn labels_path(dir: &Path, t: usize) -> std::path::PathBuf {
    dir.join(format!("seg_{:04}.pgm", t))
}

pub fn gt_tracks_path(dir: &Path) -> std::path::PathBuf {
    dir.join("gt_tracks.txt")
}

pub fn write_dataset(dir: &Path, data: &SynthDataset) -> Result<()> {
    if data.frames.is_empty() {
        return Err(Error::config("refusing to write a dataset with no frames"));
    }
    fs::create_dir_all(dir)?;
    let first = &data.frames[0].image;
    let meta = DatasetMeta {
        frames: data.frames.len(),
        height: first.height,
        width: first.width,
        maxval: first.maxval,
    };
    let mut meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::config(format!("cannot encode metadata: {}", e)))?;
    meta_json.push('\n');
    fs::write(dir.join("meta.json"), meta_json)?;
    for frame in &data.frames {
        pgm::write_image(&image_path(dir, frame.t), &frame.image)?;
        pgm::write_labels(&labels_path(dir, frame.t), &frame.labels)?;
    }
    tables::write_forest(&gt_tracks_path(dir), &data.gt)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("meta.json");
    let raw = fs::read_to_string(&meta_path).map_err(|e| {
        Error::config(format!("cannot read {}: {}", meta_path.display(), e))
    })?;
    let meta: DatasetMeta = serde_json::from_str(&raw).map_err(|e| {
        Error::parse(meta_path.display().to_string(), e.line(), e.to_string())
    })?;
    if meta.frames == 0 {
        return Err(Error::config(format!(
            "{}: dataset declares zero frames",
            meta_path.display()
        )));
    }
    let mut frames = Vec::with_capacity(meta.frames);
    for t in 1..=meta.frames {
        let image = pgm::read_image(&image_path(dir, t))?;
        let labels = pgm::read_labels(&labels_path(dir, t))?;
        if image.height != meta.height
            || image.width != meta.width
            || image.maxval != meta.maxval
        {
            return Err(Error::config(format!(
                "{}: frame is {}x{} maxval {}, metadata says {}x{} maxval {}",
                image_path(dir, t).display(),
                image.height,
                image.width,
                image.maxval,
                meta.height,
                meta.width,
                meta.maxval
            )));
        }
        frames.push(FrameRecord::new(t, image, labels)?);
    }
    let gt_path = gt_tracks_path(dir);
    let gt = if gt_path.exists() {
        Some(tables::read_forest(&gt_path)?)
    } else {
        None
    };
    Ok(Dataset { meta, frames, gt })
}
