//! The direct acyclic candidate graph over a sequence.
//!
//! Nodes are cell instances ordered by (frame, label); edges connect
//! instances in consecutive frames whose centroid offset passes the
//! fitted per-axis neighborhood gate.  Ground-truth edge activations
//! come from the lineage forest: same-track consecutive pairs and
//! parent-to-daughter links are active.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::CellInstance;
use crate::lineage::LineageForest;
use crate::tensor::{dot, norm};

/// Per-axis distance gate: alpha times the larger of the maximal
/// bounding-box extent and the maximal per-step movement seen in
/// training data.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodRule {
    pub alpha: f64,
    pub thresholds: Vec<f64>,
}

impl NeighborhoodRule {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.thresholds.iter().any(|&t| t <= 0.0) {
            return Err(Error::config(format!(
                "neighborhood thresholds must be strictly positive, got {:?}",
                self.thresholds
            )));
        }
        Ok(())
    }

    /// True when the centroid offset fits the gate on every axis.
    pub fn admits(&self, a: &CellInstance, b: &CellInstance) -> bool {
        debug_assert_eq!(a.dims(), self.thresholds.len());
        self.admits_centroids(&a.centroid, &b.centroid)
    }

    pub fn admits_centroids(&self, a: &[f64], b: &[f64]) -> bool {
        debug_assert_eq!(a.len(), self.thresholds.len());
        self.thresholds
            .iter()
            .enumerate()
            .all(|(ax, &thr)| (a[ax] - b[ax]).abs() <= thr)
    }
}

/// Result of fitting the gate.  `movement_measured` is false when no
/// ground-truth associations were available and only the bounding-box
/// term could be used; callers should surface a warning.
#[derive(Debug, Clone)]
pub struct NeighborhoodFit {
    pub rule: NeighborhoodRule,
    pub movement_measured: bool,
}

/// One training sequence: its instances and ground-truth lineage.
pub struct TrainingSequence<'a> {
    pub instances: &'a [CellInstance],
    pub gt: &'a LineageForest,
}

/// Fits the per-axis gate from training statistics only: for each axis,
/// `alpha * max(max bbox extent, max per-step centroid displacement)`.
pub fn fit_neighborhood(sequences: &[TrainingSequence], alpha: f64) -> Result<NeighborhoodFit> {
    if alpha <= 0.0 {
        return Err(Error::config(format!("alpha must be positive, got {}", alpha)));
    }
    let dims = sequences
        .iter()
        .flat_map(|s| s.instances.iter())
        .map(|i| i.dims())
        .next()
        .ok_or_else(|| Error::config("cannot fit a neighborhood rule without instances"))?;

    let mut bbox = vec![0.0_f64; dims];
    let mut movement = vec![0.0_f64; dims];
    let mut any_links = false;
    for seq in sequences {
        let by_key: BTreeMap<(usize, u32), &CellInstance> = seq
            .instances
            .iter()
            .map(|i| ((i.frame, i.label), i))
            .collect();
        for inst in seq.instances {
            for ax in 0..dims {
                bbox[ax] = bbox[ax].max(inst.bbox_max[ax] - inst.bbox_min[ax] + 1.0);
            }
        }
        for (from, to) in seq.gt.links() {
            let (Some(a), Some(b)) = (by_key.get(&from), by_key.get(&to)) else {
                return Err(Error::config(format!(
                    "ground-truth link {}:{} -> {}:{} references unknown instances",
                    from.0, from.1, to.0, to.1
                )));
            };
            any_links = true;
            for ax in 0..dims {
                movement[ax] = movement[ax].max((a.centroid[ax] - b.centroid[ax]).abs());
            }
        }
    }
    let thresholds: Vec<f64> = (0..dims)
        .map(|ax| alpha * bbox[ax].max(movement[ax]))
        .collect();
    let fit = NeighborhoodFit {
        rule: NeighborhoodRule { alpha, thresholds },
        movement_measured: any_links,
    };
    fit.rule.validate()?;
    Ok(fit)
}

/// Candidate graph structure: instances in node-index order plus the
/// gated consecutive-frame edges.
#[derive(Debug, Clone)]
pub struct CandidateGraph {
    pub instances: Vec<CellInstance>,
    /// (source, target) node indices, sorted by source then target.
    pub edges: Vec<(usize, usize)>,
}

impl CandidateGraph {
    pub fn num_nodes(&self) -> usize {
        self.instances.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.0).collect()
    }

    pub fn target_indices(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.1).collect()
    }

    /// Mean candidate in-degree |E| / |V|.
    pub fn mean_in_degree(&self) -> f64 {
        self.edges.len() as f64 / self.instances.len() as f64
    }

    pub fn node_key(&self, i: usize) -> (usize, u32) {
        (self.instances[i].frame, self.instances[i].label)
    }
}

/// Builds the candidate graph.  Instances are sorted by (frame, label)
/// so that node index i equals the number of instances in earlier
/// frames plus the within-frame position; isolated nodes are fine.
pub fn build_graph(instances: &[CellInstance], rule: &NeighborhoodRule) -> Result<CandidateGraph> {
    rule.validate()?;
    let mut instances: Vec<CellInstance> = instances.to_vec();
    instances.sort_by_key(|i| (i.frame, i.label));
    for w in instances.windows(2) {
        if w[0].frame == w[1].frame && w[0].label == w[1].label {
            return Err(Error::config(format!(
                "duplicate instance {}:{}",
                w[0].frame, w[0].label
            )));
        }
    }
    if let Some(first) = instances.first() {
        let dims = first.dims();
        if instances.iter().any(|i| i.dims() != dims) {
            return Err(Error::config("mixed dimensionality in instance list"));
        }
        if dims != rule.thresholds.len() {
            return Err(Error::config(format!(
                "rule has {} axes but instances have {}",
                rule.thresholds.len(),
                dims
            )));
        }
    }

    // Node spans per frame, in frame order.
    let mut frame_spans: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        let span = frame_spans.entry(inst.frame).or_insert((i, i));
        span.1 = i;
    }
    let mut edges = Vec::new();
    for (&t, &(s0, s1)) in &frame_spans {
        let Some(&(d0, d1)) = frame_spans.get(&(t + 1)) else { continue };
        for src in s0..=s1 {
            for dst in d0..=d1 {
                if rule.admits(&instances[src], &instances[dst]) {
                    edges.push((src, dst));
                }
            }
        }
    }
    edges.sort_unstable();
    Ok(CandidateGraph { instances, edges })
}

/// Ground-truth activation per edge: 1 when the link appears in the
/// forest (same track, consecutive frames, or parent to daughter).
/// Errors when an edge endpoint lacks ground truth.
pub fn gt_edge_labels(graph: &CandidateGraph, gt: &LineageForest) -> Result<Vec<f64>> {
    let links = gt.links();
    let covered = gt.instance_index();
    let mut labels = Vec::with_capacity(graph.edges.len());
    for &(src, dst) in &graph.edges {
        let a = graph.node_key(src);
        let b = graph.node_key(dst);
        if !covered.contains_key(&a) || !covered.contains_key(&b) {
            return Err(Error::config(format!(
                "instance {}:{} or {}:{} is missing from the ground truth",
                a.0, a.1, b.0, b.1
            )));
        }
        labels.push(if links.contains(&(a, b)) { 1.0 } else { 0.0 });
    }
    Ok(labels)
}

/// Checks that every ground-truth association of `gt` survives the
/// gate, i.e. appears as an edge of a graph built with `rule`.  Returns
/// the list of lost links (empty means full coverage).
pub fn gate_coverage_gaps(
    instances: &[CellInstance],
    gt: &LineageForest,
    rule: &NeighborhoodRule,
) -> Result<Vec<((usize, u32), (usize, u32))>> {
    let by_key: BTreeMap<(usize, u32), &CellInstance> =
        instances.iter().map(|i| ((i.frame, i.label), i)).collect();
    let mut missing = Vec::new();
    for (from, to) in gt.links() {
        let (Some(a), Some(b)) = (by_key.get(&from), by_key.get(&to)) else {
            return Err(Error::config(format!(
                "ground-truth link {}:{} -> {}:{} references unknown instances",
                from.0, from.1, to.0, to.1
            )));
        };
        if !rule.admits(a, b) {
            missing.push((from, to));
        }
    }
    Ok(missing)
}

/// Clones the instances whose frame lies in `t0..=t1`.
pub fn frame_window(instances: &[CellInstance], t0: usize, t1: usize) -> Vec<CellInstance> {
    instances
        .iter()
        .filter(|i| i.frame >= t0 && i.frame <= t1)
        .cloned()
        .collect()
}

/// Distance-and-similarity vector of two equal-length features: the
/// element-wise absolute differences followed by their cosine
/// similarity (0 when either vector is zero).
pub fn ds_vector(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "ds_vector needs equal lengths");
    let mut out = Vec::with_capacity(a.len() + 1);
    for (x, y) in a.iter().zip(b) {
        out.push((x - y).abs());
    }
    let prod = norm(a) * norm(b);
    out.push(if prod < 1e-24 { 0.0 } else { dot(a, b) / prod });
    out
}
