//! Turning edge probabilities into a lineage forest.
//!
//! Classified edges first pass through deterministic conflict
//! resolution (per-source top-2, then per-target top-1, threshold
//! 0.5), then maximal chains become trajectories.  A node keeping two
//! outgoing edges ends its own track and parents the two new ones
//! directly; remaining unparented track starts are matched to ending
//! tracks by the spatial triplet rule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{CandidateGraph, NeighborhoodRule};
use crate::lineage::{InstanceKey, LineageForest, Trajectory};

/// Ranks edge ids for conflict resolution: higher probability first,
/// ties to the smaller source index, then the smaller target index.
fn edge_rank(
    probs: &[f64],
    edges: &[(usize, usize)],
    a: usize,
    b: usize,
) -> std::cmp::Ordering {
    probs[b]
        .total_cmp(&probs[a])
        .then(edges[a].0.cmp(&edges[b].0))
        .then(edges[a].1.cmp(&edges[b].1))
}

/// Applies the activation rules and returns the surviving edge ids in
/// ascending order.
pub fn resolve_edges(probs: &[f64], edges: &[(usize, usize)]) -> Vec<usize> {
    assert_eq!(probs.len(), edges.len(), "one probability per edge");
    for &p in probs {
        assert!(
            p.is_finite() && (0.0..=1.0).contains(&p),
            "probability {} outside [0, 1]",
            p
        );
    }
    let mut by_src: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (e, &(src, _)) in edges.iter().enumerate() {
        if probs[e] > 0.5 {
            by_src.entry(src).or_default().push(e);
        }
    }
    let mut by_dst: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (_, mut group) in by_src {
        group.sort_by(|&a, &b| edge_rank(probs, edges, a, b));
        group.truncate(2);
        for e in group {
            by_dst.entry(edges[e].1).or_default().push(e);
        }
    }
    let mut active = Vec::new();
    for (_, mut group) in by_dst {
        group.sort_by(|&a, &b| edge_rank(probs, edges, a, b));
        active.push(group[0]);
    }
    active.sort_unstable();
    active
}

/// Lexicographic order on centroids, with the instance key as a final
/// tiebreak so the order is total.
fn spatial_key(centroid: &[f64], key: InstanceKey) -> (Vec<u64>, InstanceKey) {
    // total_cmp order matches the order of the sign-adjusted bit
    // patterns; centroids are non-negative here but stay general.
    let bits = centroid
        .iter()
        .map(|v| {
            let b = v.to_bits() as i64;
            (if b < 0 { !b } else { b ^ i64::MIN }) as u64
        })
        .collect();
    (bits, key)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Assembles trajectories from resolved edges.  Every instance lands in
/// exactly one trajectory; a two-way split parents both new tracks at
/// once.  Cell indices follow (t_init, spatial) order so parents come
/// before children.
pub fn build_tracks(graph: &CandidateGraph, active: &[usize]) -> Result<LineageForest> {
    let n = graph.num_nodes();
    let edges = &graph.edges;
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_edge: Vec<Option<usize>> = vec![None; n];
    for &e in active {
        let (src, dst) = edges[e];
        out_edges[src].push(e);
        if out_edges[src].len() > 2 {
            return Err(Error::config(format!(
                "internal: node {} keeps {} outgoing edges after resolution",
                src,
                out_edges[src].len()
            )));
        }
        if in_edge[dst].replace(e).is_some() {
            return Err(Error::config(format!(
                "internal: node {} keeps two incoming edges after resolution",
                dst
            )));
        }
    }

    // A node starts a chain when nothing points at it, or when its
    // predecessor splits in two (that predecessor ends its own chain).
    let mut chains: Vec<Vec<usize>> = Vec::new();
    let mut chain_of: Vec<usize> = vec![usize::MAX; n];
    for v in 0..n {
        let is_start = match in_edge[v] {
            None => true,
            Some(e) => out_edges[edges[e].0].len() == 2,
        };
        if !is_start {
            continue;
        }
        let id = chains.len();
        let mut chain = vec![v];
        let mut cur = v;
        while out_edges[cur].len() == 1 {
            cur = edges[out_edges[cur][0]].1;
            chain.push(cur);
        }
        for &u in &chain {
            chain_of[u] = id;
        }
        chains.push(chain);
    }
    if chain_of.iter().any(|&c| c == usize::MAX) {
        return Err(Error::config(
            "internal: some instances were not reached by any chain",
        ));
    }

    // Cell ids in (t_init, spatial, key) order.
    let mut order: Vec<usize> = (0..chains.len()).collect();
    order.sort_by_key(|&c| {
        let head = chains[c][0];
        let inst = &graph.instances[head];
        (inst.frame, spatial_key(&inst.centroid, graph.node_key(head)))
    });
    let mut cell_of_chain = vec![0usize; chains.len()];
    for (rank, &c) in order.iter().enumerate() {
        cell_of_chain[c] = rank + 1;
    }

    let mut tracks = Vec::with_capacity(chains.len());
    for (c, chain) in chains.iter().enumerate() {
        let parent = match in_edge[chain[0]] {
            Some(e) => cell_of_chain[chain_of[edges[e].0]],
            None => 0,
        };
        let nodes: Vec<InstanceKey> = chain.iter().map(|&v| graph.node_key(v)).collect();
        tracks.push(Trajectory {
            cell: cell_of_chain[c],
            parent,
            t_init: graph.instances[chain[0]].frame,
            t_fin: graph.instances[*chain.last().unwrap()].frame,
            nodes,
        });
    }
    tracks.sort_by_key(|t| t.cell);
    let forest = LineageForest::new(tracks);
    forest.validate()?;
    let universe: std::collections::BTreeSet<InstanceKey> =
        (0..n).map(|v| graph.node_key(v)).collect();
    forest.validate_partition(&universe)?;
    Ok(forest)
}

/// Fills in parents for track starts left unparented by assembly: a
/// pair of tracks starting at the same frame adopts a track that ends
/// one frame earlier and whose final centroid lies within the
/// neighborhood of both starting centroids.  Competing triplets are
/// ranked by summed centroid distance and taken greedily, each parent
/// at most once.
pub fn detect_mitosis(
    forest: &LineageForest,
    graph: &CandidateGraph,
    rule: &NeighborhoodRule,
) -> Result<LineageForest> {
    let mut centroid: BTreeMap<InstanceKey, &[f64]> = BTreeMap::new();
    for (v, inst) in graph.instances.iter().enumerate() {
        centroid.insert(graph.node_key(v), &inst.centroid);
    }
    let lookup = |key: InstanceKey| -> Result<&[f64]> {
        centroid.get(&key).copied().ok_or_else(|| {
            Error::config(format!(
                "instance {}:{} referenced by a track is missing from the graph",
                key.0, key.1
            ))
        })
    };

    let mut has_child: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &forest.tracks {
        if t.parent != 0 {
            *has_child.entry(t.parent).or_insert(0) += 1;
        }
    }

    // (distance, parent, first child, second child)
    let mut candidates: Vec<(f64, usize, usize, usize)> = Vec::new();
    let tracks = &forest.tracks;
    for (i, k) in tracks.iter().enumerate() {
        if k.parent != 0 {
            continue;
        }
        let init_k = lookup(k.nodes[0])?;
        for l in tracks.iter().skip(i + 1) {
            if l.parent != 0 || l.t_init != k.t_init {
                continue;
            }
            let init_l = lookup(l.nodes[0])?;
            for m in tracks.iter() {
                if m.t_fin + 1 != k.t_init || has_child.contains_key(&m.cell) {
                    continue;
                }
                let fin_m = lookup(*m.nodes.last().unwrap())?;
                if rule.admits_centroids(fin_m, init_k) && rule.admits_centroids(fin_m, init_l) {
                    let d = euclid(fin_m, init_k) + euclid(fin_m, init_l);
                    candidates.push((d, m.cell, k.cell, l.cell));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });

    let mut parent_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut used: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
    for (_, m, k, l) in candidates {
        if used.contains(&m) || parent_of.contains_key(&k) || parent_of.contains_key(&l) {
            continue;
        }
        used.insert(m);
        parent_of.insert(k, m);
        parent_of.insert(l, m);
    }

    let mut tracks: Vec<Trajectory> = forest.tracks.clone();
    for t in &mut tracks {
        if let Some(&p) = parent_of.get(&t.cell) {
            t.parent = p;
        }
    }
    let out = LineageForest::new(tracks);
    out.validate()?;
    Ok(out)
}

/// Full inference: resolve conflicts, assemble tracks, assign mitosis
/// parents.
pub fn infer_lineage(
    graph: &CandidateGraph,
    probs: &[f64],
    rule: &NeighborhoodRule,
) -> Result<LineageForest> {
    let active = resolve_edges(probs, &graph.edges);
    let forest = build_tracks(graph, &active)?;
    detect_mitosis(&forest, graph, rule)
}
