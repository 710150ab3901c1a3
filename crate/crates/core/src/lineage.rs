//! Trajectories and lineage forests.
//!
//! A trajectory is a maximal run of same-cell instances in consecutive
//! frames; the parent index links daughter trajectories to the track
//! that divided.  Both the synthetic generator's ground truth and the
//! inference output use these types, so the evaluation code compares
//! like with like.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Identity of one instance: frame index and within-frame label.
pub type InstanceKey = (usize, u32);

/// A frame-to-frame association between two instances.
pub type Link = (InstanceKey, InstanceKey);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    /// 1-based track index; parents always have smaller indices.
    pub cell: usize,
    /// Parent track index, 0 when the track has no parent.
    pub parent: usize,
    pub t_init: usize,
    pub t_fin: usize,
    /// One instance per frame from t_init to t_fin, in order.
    pub nodes: Vec<InstanceKey>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell == 0 {
            return Err(Error::config("track indices start at 1"));
        }
        if self.parent == self.cell {
            return Err(Error::config(format!("track {} is its own parent", self.cell)));
        }
        if self.parent > self.cell {
            return Err(Error::config(format!(
                "track {} has parent {} with a larger index",
                self.cell, self.parent
            )));
        }
        if self.t_init < 1 || self.t_init > self.t_fin {
            return Err(Error::config(format!(
                "track {}: invalid span {}..{}",
                self.cell, self.t_init, self.t_fin
            )));
        }
        if self.nodes.len() != self.t_fin - self.t_init + 1 {
            return Err(Error::config(format!(
                "track {}: {} instances for span {}..{}",
                self.cell,
                self.nodes.len(),
                self.t_init,
                self.t_fin
            )));
        }
        for (i, (t, _)) in self.nodes.iter().enumerate() {
            if *t != self.t_init + i {
                return Err(Error::config(format!(
                    "track {}: frames not consecutive at position {}",
                    self.cell, i
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineageForest {
    pub tracks: Vec<Trajectory>,
}

impl LineageForest {
    pub fn new(tracks: Vec<Trajectory>) -> Self {
        LineageForest { tracks }
    }

    pub fn track(&self, cell: usize) -> Option<&Trajectory> {
        self.tracks.iter().find(|t| t.cell == cell)
    }

    /// Children grouped by parent track index.
    pub fn children(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for t in &self.tracks {
            if t.parent != 0 {
                map.entry(t.parent).or_default().push(t.cell);
            }
        }
        map
    }

    /// (frame, label) -> track index over every contained instance.
    pub fn instance_index(&self) -> BTreeMap<InstanceKey, usize> {
        let mut map = BTreeMap::new();
        for t in &self.tracks {
            for key in &t.nodes {
                map.insert(*key, t.cell);
            }
        }
        map
    }

    /// Every frame-to-frame association the forest asserts: consecutive
    /// instances within each track plus the parent-end to daughter-start
    /// links of every mitosis.
    pub fn links(&self) -> BTreeSet<Link> {
        let mut links = BTreeSet::new();
        for t in &self.tracks {
            for pair in t.nodes.windows(2) {
                links.insert((pair[0], pair[1]));
            }
            if t.parent != 0 {
                if let Some(p) = self.track(t.parent) {
                    links.insert((*p.nodes.last().unwrap(), t.nodes[0]));
                }
            }
        }
        links
    }

    pub fn total_instances(&self) -> usize {
        self.tracks.iter().map(|t| t.len()).sum()
    }

    /// Checks every structural invariant: per-track consistency, unique
    /// contiguous indices, existing parents that end exactly one frame
    /// before their daughters start, at most two daughters per parent,
    /// and no instance claimed twice.
    pub fn validate(&self) -> Result<()> {
        let mut seen_cells = BTreeSet::new();
        let mut seen_instances = BTreeSet::new();
        for t in &self.tracks {
            t.validate()?;
            if !seen_cells.insert(t.cell) {
                return Err(Error::config(format!("duplicate track index {}", t.cell)));
            }
            for key in &t.nodes {
                if !seen_instances.insert(*key) {
                    return Err(Error::config(format!(
                        "instance {}:{} appears in more than one track",
                        key.0, key.1
                    )));
                }
            }
        }
        for t in &self.tracks {
            if t.parent == 0 {
                continue;
            }
            let p = self.track(t.parent).ok_or_else(|| {
                Error::config(format!("track {} references missing parent {}", t.cell, t.parent))
            })?;
            if p.t_fin + 1 != t.t_init {
                return Err(Error::config(format!(
                    "track {} starts at {} but parent {} ends at {}",
                    t.cell, t.t_init, p.cell, p.t_fin
                )));
            }
        }
        for (parent, kids) in self.children() {
            if kids.len() > 2 {
                return Err(Error::config(format!(
                    "track {} has {} daughters",
                    parent,
                    kids.len()
                )));
            }
        }
        Ok(())
    }

    /// Additionally checks that the forest covers `universe` exactly.
    pub fn validate_partition(&self, universe: &BTreeSet<InstanceKey>) -> Result<()> {
        self.validate()?;
        let covered: BTreeSet<InstanceKey> = self
            .tracks
            .iter()
            .flat_map(|t| t.nodes.iter().cloned())
            .collect();
        if &covered != universe {
            return Err(Error::config(format!(
                "forest covers {} instances, universe has {}",
                covered.len(),
                universe.len()
            )));
        }
        Ok(())
    }
}
