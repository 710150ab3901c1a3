//! Tracking quality metrics: association accuracy, target
//! effectiveness, and edge-level precision/recall.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lineage::{LineageForest, Link};

/// Fraction of ground-truth frame-to-frame associations the prediction
/// recovered.  Mitosis links count like any other association.
pub fn association_accuracy(predicted: &BTreeSet<Link>, gt: &BTreeSet<Link>) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::config(
            "association accuracy is undefined without ground-truth links",
        ));
    }
    let hits = predicted.intersection(gt).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Per-track effectiveness detail.
#[derive(Debug, Clone, Serialize)]
pub struct TrackEffectiveness {
    pub gt_cell: usize,
    pub gt_length: usize,
    pub assigned_pred: usize,
    pub covered: usize,
}

/// Target effectiveness: each ground-truth track is assigned the
/// predicted track covering most of its instances (ties to the longer
/// predicted track, then the smaller index); the score aggregates
/// covered instances.  Returns the instance-weighted aggregate, the
/// unweighted mean over tracks, and the per-track table.
pub fn target_effectiveness(
    predicted: &LineageForest,
    gt: &LineageForest,
) -> Result<(f64, f64, Vec<TrackEffectiveness>)> {
    if gt.tracks.is_empty() {
        return Err(Error::config("target effectiveness needs ground-truth tracks"));
    }
    let pred_of_instance = predicted.instance_index();
    let pred_len: BTreeMap<usize, usize> =
        predicted.tracks.iter().map(|t| (t.cell, t.len())).collect();
    let mut table = Vec::with_capacity(gt.tracks.len());
    let mut covered_total = 0usize;
    let mut length_total = 0usize;
    let mut mean_sum = 0.0;
    for gt_track in &gt.tracks {
        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for key in &gt_track.nodes {
            if let Some(&cell) = pred_of_instance.get(key) {
                *overlap.entry(cell).or_insert(0) += 1;
            }
        }
        let mut best: Option<(usize, usize)> = None;
        for (&cell, &count) in &overlap {
            let better = match best {
                None => true,
                Some((bc, bcount)) => {
                    count > bcount
                        || (count == bcount
                            && (pred_len[&cell] > pred_len[&bc]
                                || (pred_len[&cell] == pred_len[&bc] && cell < bc)))
                }
            };
            if better {
                best = Some((cell, count));
            }
        }
        let (assigned, covered) = best.unwrap_or((0, 0));
        covered_total += covered;
        length_total += gt_track.len();
        mean_sum += covered as f64 / gt_track.len() as f64;
        table.push(TrackEffectiveness {
            gt_cell: gt_track.cell,
            gt_length: gt_track.len(),
            assigned_pred: assigned,
            covered,
        });
    }
    Ok((
        covered_total as f64 / length_total as f64,
        mean_sum / gt.tracks.len() as f64,
        table,
    ))
}

/// Precision, recall and F1 of thresholded edge probabilities against
/// binary labels.  Undefined ratios are reported as 0 with the
/// corresponding flag set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgePrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

pub fn edge_prf(probs: &[f64], labels: &[f64], threshold: f64) -> EdgePrf {
    assert_eq!(probs.len(), labels.len());
    let (mut tp, mut fp, mut fne) = (0u64, 0u64, 0u64);
    for (&p, &y) in probs.iter().zip(labels) {
        let pred = p > threshold;
        let truth = y > 0.5;
        match (pred, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let precision_defined = tp + fp > 0;
    let recall_defined = tp + fne > 0;
    let precision = if precision_defined { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if recall_defined { tp as f64 / (tp + fne) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EdgePrf { precision, recall, f1, precision_defined, recall_defined }
}

/// The full evaluation report the CLI serializes.  Field order is the
/// serialization order, so identical inputs produce identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub aa: f64,
    pub te: f64,
    pub te_mean_over_tracks: f64,
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub gt_links: usize,
    pub predicted_links: usize,
    pub gt_tracks: usize,
    pub predicted_tracks: usize,
    pub per_track: Vec<TrackEffectiveness>,
}

/// Compares a predicted forest against ground truth.  Link precision
/// and recall here are set-based: recall equals association accuracy.
pub fn evaluate_forests(predicted: &LineageForest, gt: &LineageForest) -> Result<MetricsReport> {
    let pred_links = predicted.links();
    let gt_links = gt.links();
    let aa = association_accuracy(&pred_links, &gt_links)?;
    let (te, te_mean, per_track) = target_effectiveness(predicted, gt)?;
    let hits = pred_links.intersection(&gt_links).count() as f64;
    let edge_precision = if pred_links.is_empty() { 0.0 } else { hits / pred_links.len() as f64 };
    Ok(MetricsReport {
        aa,
        te,
        te_mean_over_tracks: te_mean,
        edge_precision,
        edge_recall: aa,
        gt_links: gt_links.len(),
        predicted_links: pred_links.len(),
        gt_tracks: gt.tracks.len(),
        predicted_tracks: predicted.tracks.len(),
        per_track,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineage::Trajectory;

    fn track(cell: usize, parent: usize, t_init: usize, labels: &[u32]) -> Trajectory {
        Trajectory {
            cell,
            parent,
            t_init,
            t_fin: t_init + labels.len() - 1,
            nodes: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| (t_init + i, l))
                .collect(),
        }
    }

    #[test]
    fn aa_perfect_and_empty() {
        let gt = LineageForest::new(vec![track(1, 0, 1, &[1, 1, 1])]).links();
        assert_eq!(association_accuracy(&gt, &gt).unwrap(), 1.0);
        assert_eq!(association_accuracy(&BTreeSet::new(), &gt).unwrap(), 0.0);
        assert!(association_accuracy(&gt, &BTreeSet::new()).is_err());
    }

    #[test]
    fn aa_counts_intersection() {
        // Ten ground-truth links; the prediction loses exactly one.
        let gt_forest = LineageForest::new(vec![track(1, 0, 1, &[1; 11])]);
        let gt = gt_forest.links();
        assert_eq!(gt.len(), 10);
        let mut pred = gt.clone();
        let dropped = *pred.iter().next().unwrap();
        pred.remove(&dropped);
        pred.insert(((99, 9), (100, 9)));
        let aa = association_accuracy(&pred, &gt).unwrap();
        assert!((aa - 0.9).abs() < 1e-15);
    }

    #[test]
    fn te_perfect_tracking_is_one() {
        let gt = LineageForest::new(vec![
            track(1, 0, 1, &[1, 1]),
            track(2, 1, 3, &[1, 1]),
            track(3, 1, 3, &[2, 2]),
        ]);
        let (te, te_mean, per_track) = target_effectiveness(&gt, &gt).unwrap();
        assert_eq!(te, 1.0);
        assert_eq!(te_mean, 1.0);
        assert_eq!(per_track.len(), 3);
    }

    #[test]
    fn te_singleton_predictions_cover_one_instance() {
        let gt = LineageForest::new(vec![track(1, 0, 1, &[1; 10])]);
        let pred = LineageForest::new(
            (1..=10)
                .map(|t| track(t, 0, t, &[1]))
                .collect(),
        );
        let (te, te_mean, _) = target_effectiveness(&pred, &gt).unwrap();
        assert!((te - 0.1).abs() < 1e-15);
        assert!((te_mean - 0.1).abs() < 1e-15);
    }

    #[test]
    fn te_identity_switch_matches_cover_oracle() {
        // GT: two tracks of length 6 (labels 1 and 2).  The prediction
        // swaps identities after frame 3, so each GT track's best cover
        // is 3 of 6.
        let gt = LineageForest::new(vec![track(1, 0, 1, &[1; 6]), track(2, 0, 1, &[2; 6])]);
        let pred = LineageForest::new(vec![
            Trajectory {
                cell: 1,
                parent: 0,
                t_init: 1,
                t_fin: 6,
                nodes: vec![(1, 1), (2, 1), (3, 1), (4, 2), (5, 2), (6, 2)],
            },
            Trajectory {
                cell: 2,
                parent: 0,
                t_init: 1,
                t_fin: 6,
                nodes: vec![(1, 2), (2, 2), (3, 2), (4, 1), (5, 1), (6, 1)],
            },
        ]);
        let (te, _, table) = target_effectiveness(&pred, &gt).unwrap();
        assert!((te - 0.5).abs() < 1e-15);
        for row in table {
            assert_eq!(row.covered, 3);
        }
    }

    #[test]
    fn te_tie_prefers_longer_predicted_track() {
        // Both predicted tracks cover 1 instance of the GT track; the
        // longer one wins the assignment.
        let gt = LineageForest::new(vec![track(1, 0, 1, &[1, 1])]);
        let pred = LineageForest::new(vec![
            track(1, 0, 1, &[1]),
            Trajectory {
                cell: 2,
                parent: 0,
                t_init: 2,
                t_fin: 3,
                nodes: vec![(2, 1), (3, 7)],
            },
        ]);
        let (_, _, table) = target_effectiveness(&pred, &gt).unwrap();
        assert_eq!(table[0].assigned_pred, 2);
    }

    #[test]
    fn edge_prf_matches_confusion_loop() {
        let probs = [0.9, 0.2, 0.7, 0.4, 0.55, 0.1];
        let labels = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let r = edge_prf(&probs, &labels, 0.5);
        // tp = {0, 4}, fp = {2}, fn = {3}.
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn edge_prf_undefined_cases_flagged() {
        let r = edge_prf(&[0.1, 0.2], &[1.0, 0.0], 0.5);
        assert_eq!(r.precision, 0.0);
        assert!(!r.precision_defined);
        assert_eq!(r.recall, 0.0);
        assert!(r.recall_defined);
        let r2 = edge_prf(&[0.9, 0.9], &[1.0, 1.0], 0.5);
        assert_eq!((r2.precision, r2.recall, r2.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn metrics_invariant_to_pred_relabeling() {
        let gt = LineageForest::new(vec![track(1, 0, 1, &[1, 1]), track(2, 0, 1, &[2, 2])]);
        let pred_a = gt.clone();
        let pred_b = LineageForest::new(vec![track(1, 0, 1, &[2, 2]), track(2, 0, 1, &[1, 1])]);
        let ra = evaluate_forests(&pred_a, &gt).unwrap();
        let rb = evaluate_forests(&pred_b, &gt).unwrap();
        assert_eq!(ra.aa, rb.aa);
        assert_eq!(ra.te, rb.te);
    }
}
