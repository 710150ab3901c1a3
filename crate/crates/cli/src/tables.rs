//! Text tables: track files, instance membership, embeddings,
//! detections, loss histories, and the metrics report.
//!
//! All floating-point values are printed with Rust's shortest
//! round-trip formatting, so write followed by read reproduces every
//! value exactly and identical inputs produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use celltrack_core::dml::DML_DIM;
use celltrack_core::features::CellInstance;
use celltrack_core::gnn::GnnEpoch;
use celltrack_core::dml::DmlStep;
use celltrack_core::lineage::{LineageForest, Trajectory};
use celltrack_core::metrics::MetricsReport;
use celltrack_core::tensor::Tensor2;
use celltrack_core::{Error, Result};

/// Splits a text file into lines, rejecting non-UTF-8 content.
fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::parse(path.display().to_string(), 1, "file is not UTF-8"))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

/// Track table: one line per track, `cell t_init t_fin parent`, sorted
/// by cell, parent 0 meaning none.
pub fn write_tracks(path: &Path, forest: &LineageForest) -> Result<()> {
    let mut out = Vec::new();
    let mut tracks: Vec<&Trajectory> = forest.tracks.iter().collect();
    tracks.sort_by_key(|t| t.cell);
    for t in tracks {
        writeln!(out, "{} {} {} {}", t.cell, t.t_init, t.t_fin, t.parent)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Instance membership: `frame,label,cell` rows sorted by (frame,
/// label), with exactly that header.
pub fn write_instances(path: &Path, forest: &LineageForest) -> Result<()> {
    let mut rows: Vec<(usize, u32, usize)> = Vec::new();
    for t in &forest.tracks {
        for &(frame, label) in &t.nodes {
            rows.push((frame, label, t.cell));
        }
    }
    rows.sort();
    let mut out = Vec::new();
    writeln!(out, "frame,label,cell")?;
    for (frame, label, cell) in rows {
        writeln!(out, "{},{},{}", frame, label, cell)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// The instance table sits next to its track table: `X_tracks.txt`
/// pairs with `X_instances.csv` and plain `tracks.txt` with
/// `instances.csv`.
pub fn instances_path_for(tracks_path: &Path) -> Result<PathBuf> {
    let name = tracks_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::config(format!("bad track file path {}", tracks_path.display())))?;
    let stem = name.strip_suffix("tracks.txt").ok_or_else(|| {
        Error::config(format!(
            "track file `{}` must be named `tracks.txt` or `*_tracks.txt`",
            name
        ))
    })?;
    Ok(tracks_path.with_file_name(format!("{}instances.csv", stem)))
}

pub fn write_forest(tracks_path: &Path, forest: &LineageForest) -> Result<()> {
    write_tracks(tracks_path, forest)?;
    write_instances(&instances_path_for(tracks_path)?, forest)
}

fn parse_fields<const N: usize>(
    path: &Path,
    lineno: usize,
    line: &str,
    sep: char,
) -> Result<[usize; N]> {
    let parts: Vec<&str> = line.split(sep).collect();
    if parts.len() != N {
        return Err(Error::parse(
            path.display().to_string(),
            lineno,
            format!("expected {} fields, found {}", N, parts.len()),
        ));
    }
    let mut out = [0usize; N];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p.trim().parse().map_err(|_| {
            Error::parse(
                path.display().to_string(),
                lineno,
                format!("field {} is not a non-negative integer: `{}`", i + 1, p),
            )
        })?;
    }
    Ok(out)
}

/// Reads a track table and its sibling instance table back into a
/// validated forest.
pub fn read_forest(tracks_path: &Path) -> Result<LineageForest> {
    let instances_path = instances_path_for(tracks_path)?;
    let mut tracks: BTreeMap<usize, Trajectory> = BTreeMap::new();
    for (i, line) in read_lines(tracks_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let [cell, t_init, t_fin, parent] = parse_fields(tracks_path, i + 1, line, ' ')?;
        if tracks
            .insert(cell, Trajectory { cell, parent, t_init, t_fin, nodes: Vec::new() })
            .is_some()
        {
            return Err(Error::parse(
                tracks_path.display().to_string(),
                i + 1,
                format!("track {} defined twice", cell),
            ));
        }
    }
    let lines = read_lines(&instances_path)?;
    match lines.first().map(|s| s.as_str()) {
        Some("frame,label,cell") => {}
        other => {
            return Err(Error::parse(
                instances_path.display().to_string(),
                1,
                format!("expected header `frame,label,cell`, found {:?}", other),
            ))
        }
    }
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let [frame, label, cell] = parse_fields(&instances_path, i + 1, line, ',')?;
        let track = tracks.get_mut(&cell).ok_or_else(|| {
            Error::parse(
                instances_path.display().to_string(),
                i + 1,
                format!("instance references undefined track {}", cell),
            )
        })?;
        track.nodes.push((frame, label as u32));
    }
    let mut collected: Vec<_> = tracks.into_values().collect();
    for t in &mut collected {
        t.nodes.sort();
    }
    let forest = LineageForest::new(collected);
    forest.validate()?;
    Ok(forest)
}

/// Embedding export: `frame,label,e_1..e_128`, one row per instance in
/// (frame, label) order.
pub fn write_embeddings(
    path: &Path,
    instances: &[CellInstance],
    embeddings: &Tensor2,
) -> Result<()> {
    if instances.len() != embeddings.rows() || embeddings.cols() != DML_DIM {
        return Err(Error::config(format!(
            "embedding table is {}x{}, expected {}x{}",
            embeddings.rows(),
            embeddings.cols(),
            instances.len(),
            DML_DIM
        )));
    }
    let mut out = Vec::new();
    write!(out, "frame,label")?;
    for i in 1..=DML_DIM {
        write!(out, ",e_{}", i)?;
    }
    writeln!(out)?;
    for (r, inst) in instances.iter().enumerate() {
        write!(out, "{},{}", inst.frame, inst.label)?;
        for c in 0..DML_DIM {
            write!(out, ",{}", embeddings.get(r, c))?;
        }
        writeln!(out)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Detection export: centroid, area and mean intensity per instance.
pub fn write_detections(path: &Path, instances: &[CellInstance]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "frame,label,row,col,area,intensity_mean")?;
    for inst in instances {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            inst.frame,
            inst.label,
            inst.centroid[0],
            inst.centroid[1],
            inst.area,
            inst.intensity_mean
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_dml_history(path: &Path, history: &[DmlStep]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "step,loss,hard_pairs")?;
    for s in history {
        writeln!(out, "{},{},{}", s.step, s.loss, s.hard_pairs)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_gnn_history(path: &Path, history: &[GnnEpoch]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "epoch,mean_loss,precision,recall")?;
    for e in history {
        writeln!(out, "{},{},{},{}", e.epoch, e.mean_loss, e.precision, e.recall)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Metrics report as pretty JSON with a trailing newline.  Struct field
/// order fixes the key order, so equal reports give equal bytes.
pub fn metrics_json(report: &MetricsReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)
        .map_err(|e| Error::config(format!("cannot encode metrics: {}", e)))?;
    s.push('\n');
    Ok(s)
}
