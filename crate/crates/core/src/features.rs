//! Per-instance spatio-temporal features and appearance descriptors.
//!
//! Extraction walks each labeled frame once, collecting geometry and
//! intensity statistics per instance plus the fixed-length descriptor
//! the metric embedder consumes.  Feature tables are min-max scaled per
//! graph before entering the network.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Bins in the descriptor's intensity histogram.
pub const HIST_BINS: usize = 16;
/// Fixed descriptor width for every input mode and dimensionality.
pub const DESCRIPTOR_LEN: usize = HIST_BINS + 8;

/// A 2D intensity grid with its declared maximum value.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

impl Image {
    pub fn new(height: usize, width: usize, maxval: u16) -> Self {
        Image { height, width, maxval, data: vec![0; height * width] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u16 {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u16) {
        self.data[r * self.width + c] = v;
    }
}

/// A 2D map assigning each pixel to background (0) or an instance label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize) -> Self {
        LabelMap { height, width, data: vec![0; height * width] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.data[r * self.width + c] = v;
    }
}

/// One frame of the sequence: intensities plus instance labels.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub t: usize,
    pub image: Image,
    pub labels: LabelMap,
}

impl FrameRecord {
    pub fn new(t: usize, image: Image, labels: LabelMap) -> Result<Self> {
        if image.height != labels.height || image.width != labels.width {
            return Err(Error::config(format!(
                "frame {}: image is {}x{} but label map is {}x{}",
                t, image.height, image.width, labels.height, labels.width
            )));
        }
        if t == 0 {
            return Err(Error::config("frame indices start at 1"));
        }
        Ok(FrameRecord { t, image, labels })
    }
}

/// One detected cell in one frame.  Geometry is per-axis so 2D and 3D
/// detections share the same shape; axis lengths exist only for 2D
/// full-mask inputs.
#[derive(Debug, Clone)]
pub struct CellInstance {
    pub frame: usize,
    pub label: u32,
    pub centroid: Vec<f64>,
    pub bbox_min: Vec<f64>,
    pub bbox_max: Vec<f64>,
    pub area: f64,
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub intensity_mean: f64,
    pub intensity_std: f64,
    pub axes: Option<(f64, f64)>,
    pub descriptor: Vec<f64>,
    pub gt_cell: Option<u32>,
}

impl CellInstance {
    pub fn dims(&self) -> usize {
        self.centroid.len()
    }

    /// Structural invariants: bbox contains the centroid, area >= 1.
    pub fn validate(&self) -> Result<()> {
        if self.area < 1.0 {
            return Err(Error::config(format!(
                "instance {}:{} has area {}",
                self.frame, self.label, self.area
            )));
        }
        for a in 0..self.dims() {
            if self.centroid[a] < self.bbox_min[a] || self.centroid[a] > self.bbox_max[a] {
                return Err(Error::config(format!(
                    "instance {}:{} centroid outside bbox on axis {}",
                    self.frame, self.label, a
                )));
            }
        }
        Ok(())
    }
}

struct Acc {
    count: u64,
    sum_r: f64,
    sum_c: f64,
    sum_rr: f64,
    sum_cc: f64,
    sum_rc: f64,
    min_r: usize,
    max_r: usize,
    min_c: usize,
    max_c: usize,
    int_min: u16,
    int_max: u16,
    int_sum: f64,
    int_sumsq: f64,
    hist: [u64; HIST_BINS],
}

impl Acc {
    fn new() -> Self {
        Acc {
            count: 0,
            sum_r: 0.0,
            sum_c: 0.0,
            sum_rr: 0.0,
            sum_cc: 0.0,
            sum_rc: 0.0,
            min_r: usize::MAX,
            max_r: 0,
            min_c: usize::MAX,
            max_c: 0,
            int_min: u16::MAX,
            int_max: 0,
            int_sum: 0.0,
            int_sumsq: 0.0,
            hist: [0; HIST_BINS],
        }
    }
}

fn hist_bin(v: u16, maxval: u16) -> usize {
    let b = (v as usize * HIST_BINS) / (maxval as usize + 1);
    b.min(HIST_BINS - 1)
}

/// Extracts one `CellInstance` per nonzero label of the frame.
///
/// Labels need not be contiguous; they are renumbered 1..K in sorted
/// order.  An all-background frame yields an empty list.
pub fn extract_instances(frame: &FrameRecord) -> Vec<CellInstance> {
    let mut accs: BTreeMap<u32, Acc> = BTreeMap::new();
    for r in 0..frame.labels.height {
        for c in 0..frame.labels.width {
            let label = frame.labels.get(r, c);
            if label == 0 {
                continue;
            }
            let v = frame.image.get(r, c);
            let acc = accs.entry(label).or_insert_with(Acc::new);
            acc.count += 1;
            acc.sum_r += r as f64;
            acc.sum_c += c as f64;
            acc.sum_rr += (r * r) as f64;
            acc.sum_cc += (c * c) as f64;
            acc.sum_rc += (r * c) as f64;
            acc.min_r = acc.min_r.min(r);
            acc.max_r = acc.max_r.max(r);
            acc.min_c = acc.min_c.min(c);
            acc.max_c = acc.max_c.max(c);
            acc.int_min = acc.int_min.min(v);
            acc.int_max = acc.int_max.max(v);
            acc.int_sum += v as f64;
            acc.int_sumsq += (v as f64) * (v as f64);
            acc.hist[hist_bin(v, frame.image.maxval)] += 1;
        }
    }
    let mut out = Vec::with_capacity(accs.len());
    for (next_label, (_, acc)) in accs.into_iter().enumerate() {
        let n = acc.count as f64;
        let (cr, cc) = (acc.sum_r / n, acc.sum_c / n);
        // Central second moments; eigenvalues give the ellipse axes
        // (full axis length = 4 sqrt(eigenvalue), the common regionprops
        // convention).
        let mu_rr = (acc.sum_rr / n - cr * cr).max(0.0);
        let mu_cc = (acc.sum_cc / n - cc * cc).max(0.0);
        let mu_rc = acc.sum_rc / n - cr * cc;
        let mid = (mu_rr + mu_cc) / 2.0;
        let dev = (((mu_rr - mu_cc) / 2.0).powi(2) + mu_rc * mu_rc).sqrt();
        let lam1 = (mid + dev).max(0.0);
        let lam2 = (mid - dev).max(0.0);
        let axes = (4.0 * lam1.sqrt(), 4.0 * lam2.sqrt());
        let mean = acc.int_sum / n;
        let var = (acc.int_sumsq / n - mean * mean).max(0.0);
        let mut inst = CellInstance {
            frame: frame.t,
            label: (next_label + 1) as u32,
            centroid: vec![cr, cc],
            bbox_min: vec![acc.min_r as f64, acc.min_c as f64],
            bbox_max: vec![acc.max_r as f64, acc.max_c as f64],
            area: n,
            intensity_min: acc.int_min as f64,
            intensity_max: acc.int_max as f64,
            intensity_mean: mean,
            intensity_std: var.sqrt(),
            axes: Some(axes),
            descriptor: Vec::new(),
            gt_cell: None,
        };
        let hist: Vec<f64> = acc.hist.iter().map(|&h| h as f64 / n).collect();
        inst.descriptor = build_descriptor(
            &inst,
            &hist,
            &[frame.image.height as f64, frame.image.width as f64],
            frame.image.maxval as f64,
        );
        out.push(inst);
    }
    out
}

/// Assembles the fixed 24-wide descriptor: 16 histogram bins, then
/// area, per-axis bbox extents, axis lengths, eccentricity, intensity
/// mean and spread, all scaled into [0,1] by image-level context.  3D
/// inputs skip axis lengths and eccentricity (zeros) and use the third
/// extent slot.
pub fn build_descriptor(
    inst: &CellInstance,
    hist: &[f64],
    grid_extents: &[f64],
    maxval: f64,
) -> Vec<f64> {
    assert_eq!(hist.len(), HIST_BINS);
    let mut d = Vec::with_capacity(DESCRIPTOR_LEN);
    d.extend_from_slice(hist);
    let grid_area: f64 = grid_extents.iter().product();
    let max_extent = grid_extents.iter().cloned().fold(1.0, f64::max);
    d.push(inst.area / grid_area);
    for a in 0..inst.dims() {
        d.push((inst.bbox_max[a] - inst.bbox_min[a] + 1.0) / max_extent);
    }
    if inst.dims() == 2 {
        let (major, minor) = inst.axes.unwrap_or((0.0, 0.0));
        d.push(major / max_extent);
        d.push(minor / max_extent);
        d.push(if major > 0.0 {
            (1.0 - (minor * minor) / (major * major)).max(0.0).sqrt()
        } else {
            0.0
        });
    } else {
        // 3D: the third extent takes one axis slot; pad the rest.
        d.push(0.0);
        d.push(0.0);
    }
    d.push(inst.intensity_mean / maxval);
    d.push(inst.intensity_std / maxval);
    assert_eq!(d.len(), DESCRIPTOR_LEN);
    d
}

/// Descriptor for detections that come without pixel masks: the whole
/// histogram mass sits in the mean-intensity bin.
pub fn descriptor_from_stats(inst: &CellInstance, grid_extents: &[f64], maxval: f64) -> Vec<f64> {
    let mut hist = vec![0.0; HIST_BINS];
    let bin = hist_bin(inst.intensity_mean.round().max(0.0) as u16, maxval as u16);
    hist[bin] = 1.0;
    build_descriptor(inst, &hist, grid_extents, maxval)
}

/// Per-node feature rows plus the names of their columns.
#[derive(Debug, Clone)]
pub struct StFeatureTable {
    pub features: Tensor2,
    pub manifest: Vec<String>,
}

/// Column minima and spans recorded by `minmax_scale`, enough to invert
/// the scaling of non-constant columns.
#[derive(Debug, Clone)]
pub struct ScaleInfo {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Builds the spatio-temporal feature table.  Column order is fixed by
/// the returned manifest: centroid per axis, frame, intensity min, max
/// and mean, area, axis lengths (2D only), then bbox min and max per
/// axis.
pub fn build_st_table(instances: &[CellInstance]) -> Result<StFeatureTable> {
    if instances.is_empty() {
        return Err(Error::config("cannot build a feature table with no instances"));
    }
    let dims = instances[0].dims();
    if instances.iter().any(|i| i.dims() != dims) {
        return Err(Error::config("mixed dimensionality in instance list"));
    }
    let mut manifest = Vec::new();
    for a in 0..dims {
        manifest.push(format!("centroid_{}", a));
    }
    manifest.push("frame".to_string());
    manifest.push("intensity_min".to_string());
    manifest.push("intensity_max".to_string());
    manifest.push("intensity_mean".to_string());
    manifest.push("area".to_string());
    if dims == 2 {
        manifest.push("major_axis".to_string());
        manifest.push("minor_axis".to_string());
    }
    for a in 0..dims {
        manifest.push(format!("bbox_min_{}", a));
    }
    for a in 0..dims {
        manifest.push(format!("bbox_max_{}", a));
    }
    let width = manifest.len();
    let mut features = Tensor2::zeros(instances.len(), width);
    for (r, inst) in instances.iter().enumerate() {
        let row = features.row_mut(r);
        let mut c = 0;
        for a in 0..dims {
            row[c] = inst.centroid[a];
            c += 1;
        }
        row[c] = inst.frame as f64;
        row[c + 1] = inst.intensity_min;
        row[c + 2] = inst.intensity_max;
        row[c + 3] = inst.intensity_mean;
        row[c + 4] = inst.area;
        c += 5;
        if dims == 2 {
            let (major, minor) = inst.axes.unwrap_or((0.0, 0.0));
            row[c] = major;
            row[c + 1] = minor;
            c += 2;
        }
        for a in 0..dims {
            row[c] = inst.bbox_min[a];
            c += 1;
        }
        for a in 0..dims {
            row[c] = inst.bbox_max[a];
            c += 1;
        }
        debug_assert_eq!(c, width);
    }
    Ok(StFeatureTable { features, manifest })
}

/// Maps every column into [0,1] over this table's rows.  Constant
/// columns map to all zeros.  Scaling is always per graph; callers must
/// not reuse one `ScaleInfo` across graphs.
pub fn minmax_scale(table: &StFeatureTable) -> (StFeatureTable, ScaleInfo) {
    let t = &table.features;
    let (rows, cols) = (t.rows(), t.cols());
    let mut min = vec![f64::INFINITY; cols];
    let mut max = vec![f64::NEG_INFINITY; cols];
    for r in 0..rows {
        for c in 0..cols {
            min[c] = min[c].min(t.get(r, c));
            max[c] = max[c].max(t.get(r, c));
        }
    }
    let mut scaled = Tensor2::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let span = max[c] - min[c];
            if span > 0.0 {
                scaled.set(r, c, (t.get(r, c) - min[c]) / span);
            }
        }
    }
    (
        StFeatureTable { features: scaled, manifest: table.manifest.clone() },
        ScaleInfo { min, max },
    )
}
