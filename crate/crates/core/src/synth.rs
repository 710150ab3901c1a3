//! Synthetic sequence generation.
//!
//! Cells are shaded ellipses with a per-cell intensity signature that
//! drifts slowly, moving by a per-cell drift plus a random walk,
//! occasionally dividing, exiting, or entering.  The generator emits
//! frames, label maps, and the exact lineage forest, so the tracking
//! pipeline can train and grade itself without external data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{CellInstance, FrameRecord, Image, LabelMap};
use crate::lineage::{InstanceKey, LineageForest, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub initial_cells: usize,
    /// Per cell per frame.
    pub division_prob: f64,
    /// Per cell per frame.
    pub exit_prob: f64,
    /// Per frame.
    pub entry_prob: f64,
    /// Random-walk step deviation per axis, in pixels.
    pub step_sigma: f64,
    /// Per-cell constant drift magnitude cap, in pixels per frame.
    pub drift_max: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Relative per-frame drift of each cell's base intensity.
    pub intensity_drift: f64,
    /// Allow partial overlaps (painted in cell order, centers kept apart).
    pub allow_overlap: bool,
    pub maxval: u16,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("division_prob", self.division_prob),
            ("exit_prob", self.exit_prob),
            ("entry_prob", self.entry_prob),
            ("intensity_drift", self.intensity_drift),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{} {} outside [0, 1]", name, p)));
            }
        }
        if self.radius_min < 1.0 || self.radius_max < self.radius_min {
            return Err(Error::config(format!(
                "invalid radius range {}..{}",
                self.radius_min, self.radius_max
            )));
        }
        if self.frames == 0 || self.initial_cells == 0 {
            return Err(Error::config("need at least one frame and one cell"));
        }
        if self.step_sigma < 0.0 || self.drift_max < 0.0 {
            return Err(Error::config("motion magnitudes must be non-negative"));
        }
        let needed = 4.0 * self.radius_max + 4.0;
        if (self.height as f64) < needed || (self.width as f64) < needed {
            return Err(Error::config(format!(
                "grid {}x{} too small for radius {}",
                self.height, self.width, self.radius_max
            )));
        }
        if self.maxval == 0 {
            return Err(Error::config("maxval must be positive"));
        }
        Ok(())
    }

    /// Per-axis cap on one frame-to-frame step.  Samples beyond it are
    /// redrawn so the motion gate fitted from training data covers
    /// held-out sequences too.
    pub fn step_cap(&self) -> f64 {
        (3.0 * self.step_sigma + self.drift_max).max(1.0)
    }
}

/// Desk-scale default: sparse, slow, a handful of divisions.
pub fn desk_preset(seed: u64) -> SynthConfig {
    SynthConfig {
        height: 256,
        width: 256,
        frames: 30,
        initial_cells: 15,
        division_prob: 0.02,
        exit_prob: 0.005,
        entry_prob: 0.02,
        step_sigma: 2.5,
        drift_max: 1.5,
        radius_min: 4.0,
        radius_max: 7.0,
        intensity_drift: 0.02,
        allow_overlap: false,
        maxval: 4095,
        seed,
    }
}

/// Dense fast-moving variant with overlaps: hard for nearest-centroid
/// matching, still solvable with appearance and motion context.
pub fn high_motion_preset(seed: u64) -> SynthConfig {
    SynthConfig {
        height: 256,
        width: 256,
        frames: 20,
        initial_cells: 40,
        division_prob: 0.02,
        exit_prob: 0.005,
        entry_prob: 0.02,
        step_sigma: 9.0,
        drift_max: 6.0,
        radius_min: 4.0,
        radius_max: 6.0,
        intensity_drift: 0.02,
        allow_overlap: true,
        maxval: 4095,
        seed,
    }
}

pub struct SynthDataset {
    pub frames: Vec<FrameRecord>,
    pub gt: LineageForest,
    pub warnings: Vec<String>,
}

struct CellState {
    cell: usize,
    parent: usize,
    t_init: usize,
    pos: [f64; 2],
    radii: [f64; 2],
    theta: f64,
    base: f64,
    drift: [f64; 2],
    nodes: Vec<InstanceKey>,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Minimal center separation between two cells.  Without overlaps the
/// ellipses stay disjoint; with overlaps the centers stay far enough
/// apart that every cell keeps unpainted-over pixels around its center.
fn min_separation(allow_overlap: bool, r_a: f64, r_b: f64) -> f64 {
    if allow_overlap {
        r_a.max(r_b) + 2.0
    } else {
        r_a + r_b + 2.0
    }
}

fn fits(
    cfg: &SynthConfig,
    others: &[(usize, [f64; 2], f64)],
    skip: usize,
    pos: [f64; 2],
    max_r: f64,
) -> bool {
    others.iter().all(|&(cell, opos, or)| {
        if cell == skip {
            return true;
        }
        let d = ((pos[0] - opos[0]).powi(2) + (pos[1] - opos[1]).powi(2)).sqrt();
        d > min_separation(cfg.allow_overlap, max_r, or)
    })
}

fn clamp_reflect(v: f64, lo: f64, hi: f64) -> f64 {
    let mut v = v;
    if v < lo {
        v = lo + (lo - v);
    }
    if v > hi {
        v = hi - (v - hi);
    }
    v.clamp(lo, hi)
}

fn render_frame(cfg: &SynthConfig, t: usize, cells: &[CellState], rng: &mut ChaCha8Rng) -> FrameRecord {
    let mut image = Image::new(cfg.height, cfg.width, cfg.maxval);
    let mut labels = LabelMap::new(cfg.height, cfg.width);
    for (k, cell) in cells.iter().enumerate() {
        let label = (k + 1) as u32;
        let (ct, st) = (cell.theta.cos(), cell.theta.sin());
        let reach = cell.radii[0].max(cell.radii[1]).ceil() as isize + 1;
        let (cy, cx) = (cell.pos[0], cell.pos[1]);
        let r0 = ((cy as isize) - reach).max(0) as usize;
        let r1 = ((cy as isize) + reach).min(cfg.height as isize - 1) as usize;
        let c0 = ((cx as isize) - reach).max(0) as usize;
        let c1 = ((cx as isize) + reach).min(cfg.width as isize - 1) as usize;
        for r in r0..=r1 {
            for c in c0..=c1 {
                let dy = r as f64 - cy;
                let dx = c as f64 - cx;
                let u = (dx * ct + dy * st) / cell.radii[1];
                let v = (-dx * st + dy * ct) / cell.radii[0];
                let q = u * u + v * v;
                if q > 1.0 {
                    continue;
                }
                let shade = cell.base * (1.0 - 0.45 * q);
                let noise = rng.gen_range(-0.02..0.02);
                let value = ((shade + noise) * cfg.maxval as f64)
                    .round()
                    .clamp(0.0, cfg.maxval as f64) as u16;
                image.set(r, c, value);
                labels.set(r, c, label);
            }
        }
    }
    FrameRecord::new(t, image, labels).expect("generated frame is consistent")
}

/// Generates one sequence.  Output structure is validated before
/// returning: the forest partitions the rendered instances and every
/// ground-truth association respects the step cap.
pub fn generate_sequence(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut warnings = Vec::new();
    let margin = cfg.radius_max + 1.0;
    let (hi_r, hi_c) = (cfg.height as f64 - margin - 1.0, cfg.width as f64 - margin - 1.0);
    let mut next_cell = 1usize;
    let mut live: Vec<CellState> = Vec::new();
    let mut done: Vec<CellState> = Vec::new();

    let spawn = |rng: &mut ChaCha8Rng,
                     live: &mut Vec<CellState>,
                     next_cell: &mut usize,
                     t: usize,
                     parent: usize,
                     near: Option<([f64; 2], f64)>,
                     radii: Option<[f64; 2]>,
                     base: f64| {
        let radii = radii.unwrap_or_else(|| {
            [
                rng.gen_range(cfg.radius_min..=cfg.radius_max),
                rng.gen_range(cfg.radius_min..=cfg.radius_max),
            ]
        });
        let max_r = radii[0].max(radii[1]);
        let occupied: Vec<(usize, [f64; 2], f64)> = live
            .iter()
            .map(|c| (c.cell, c.pos, c.radii[0].max(c.radii[1])))
            .collect();
        for _ in 0..200 {
            let pos = match near {
                Some((center, dist)) => {
                    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                    [
                        clamp_reflect(center[0] + dist * ang.sin(), margin, hi_r),
                        clamp_reflect(center[1] + dist * ang.cos(), margin, hi_c),
                    ]
                }
                None => [rng.gen_range(margin..=hi_r), rng.gen_range(margin..=hi_c)],
            };
            if !fits(cfg, &occupied, 0, pos, max_r) {
                continue;
            }
            let drift_mag = rng.gen_range(0.0..=cfg.drift_max);
            let drift_ang = rng.gen_range(0.0..std::f64::consts::TAU);
            live.push(CellState {
                cell: *next_cell,
                parent,
                t_init: t,
                pos,
                radii,
                theta: rng.gen_range(0.0..std::f64::consts::PI),
                base,
                drift: [drift_mag * drift_ang.sin(), drift_mag * drift_ang.cos()],
                nodes: Vec::new(),
            });
            *next_cell += 1;
            return true;
        }
        false
    };

    for _ in 0..cfg.initial_cells {
        let base = rng.gen_range(0.25..0.95);
        if !spawn(&mut rng, &mut live, &mut next_cell, 1, 0, None, None, base) {
            warnings.push("overcrowded grid: dropped an initial cell".to_string());
        }
    }
    if live.is_empty() {
        return Err(Error::config("could not place any initial cell"));
    }

    let mut frames = Vec::with_capacity(cfg.frames);
    let cap = cfg.step_cap();
    for t in 1..=cfg.frames {
        for (k, cell) in live.iter_mut().enumerate() {
            cell.nodes.push((t, (k + 1) as u32));
        }
        frames.push(render_frame(cfg, t, &live, &mut rng));
        if t == cfg.frames {
            break;
        }

        // Exits and divisions decided per cell in index order.
        let mut exiting: Vec<usize> = Vec::new();
        let mut dividing: Vec<usize> = Vec::new();
        for k in 0..live.len() {
            let roll: f64 = rng.gen_range(0.0..1.0);
            if roll < cfg.exit_prob {
                if live.len() - exiting.len() > 1 {
                    exiting.push(k);
                }
            } else if roll < cfg.exit_prob + cfg.division_prob {
                dividing.push(k);
            }
        }
        for &k in exiting.iter().rev() {
            done.push(live.remove(k));
        }
        // Division replaces the parent with two daughters next frame.
        for &k in dividing.iter().rev() {
            let k = k - exiting.iter().filter(|&&e| e < k).count();
            let parent_cell = live[k].cell;
            let (pos, base, max_r) =
                (live[k].pos, live[k].base, live[k].radii[0].max(live[k].radii[1]));
            // Daughters shrink so two of them fit where the parent sat.
            let daughter_radii = [
                (live[k].radii[0] * 0.75).max(1.0),
                (live[k].radii[1] * 0.75).max(1.0),
            ];
            let parent = live.remove(k);
            let mut placed = 0;
            for _ in 0..2 {
                let b = (base + rng.gen_range(-0.06..0.06)).clamp(0.15, 0.98);
                if spawn(
                    &mut rng,
                    &mut live,
                    &mut next_cell,
                    t + 1,
                    parent_cell,
                    Some((pos, max_r * 1.2)),
                    Some(daughter_radii),
                    b,
                ) {
                    placed += 1;
                }
            }
            if placed == 2 {
                done.push(parent);
            } else {
                // Placement failed: cancel the division, keep the cell
                // and roll back any half-spawned daughter.
                for _ in 0..placed {
                    live.pop();
                    next_cell -= 1;
                }
                let insert_at = live
                    .iter()
                    .position(|c| c.cell > parent_cell)
                    .unwrap_or(live.len());
                live.insert(insert_at, parent);
                warnings.push(format!(
                    "no room to divide cell {} at frame {}",
                    parent_cell, t
                ));
            }
        }

        // Moves, kept within the step cap and apart from other cells.
        for k in 0..live.len() {
            let occupied: Vec<(usize, [f64; 2], f64)> = live
                .iter()
                .map(|c| (c.cell, c.pos, c.radii[0].max(c.radii[1])))
                .collect();
            let me = &live[k];
            let max_r = me.radii[0].max(me.radii[1]);
            let mut landed = me.pos;
            for _ in 0..40 {
                let mut step = [0.0f64; 2];
                for (ax, s) in step.iter_mut().enumerate() {
                    *s = me.drift[ax] + cfg.step_sigma * gauss(&mut rng);
                    let mut redraws = 0;
                    while s.abs() > cap && redraws < 50 {
                        *s = me.drift[ax] + cfg.step_sigma * gauss(&mut rng);
                        redraws += 1;
                    }
                    *s = s.clamp(-cap, cap);
                }
                let cand = [
                    clamp_reflect(me.pos[0] + step[0], margin, hi_r),
                    clamp_reflect(me.pos[1] + step[1], margin, hi_c),
                ];
                if fits(cfg, &occupied, me.cell, cand, max_r) {
                    landed = cand;
                    break;
                }
            }
            live[k].pos = landed;
            let b = live[k].base
                * (1.0 + cfg.intensity_drift * rng.gen_range(-1.0..1.0));
            live[k].base = b.clamp(0.15, 0.98);
        }

        // Entries.
        if rng.gen_range(0.0..1.0) < cfg.entry_prob {
            let base = rng.gen_range(0.25..0.95);
            if !spawn(&mut rng, &mut live, &mut next_cell, t + 1, 0, None, None, base) {
                warnings.push(format!("overcrowded grid: dropped an entry at frame {}", t + 1));
            }
        }

        // Per-frame labels follow cell order; keep that order stable.
        live.sort_by_key(|c| c.cell);
    }
    done.append(&mut live);
    done.sort_by_key(|c| c.cell);

    let tracks: Vec<Trajectory> = done
        .into_iter()
        .map(|c| Trajectory {
            cell: c.cell,
            parent: c.parent,
            t_init: c.t_init,
            t_fin: c.t_init + c.nodes.len() - 1,
            nodes: c.nodes,
        })
        .collect();
    let gt = LineageForest::new(tracks);
    let universe: std::collections::BTreeSet<InstanceKey> = frames
        .iter()
        .flat_map(|f| {
            let t = f.t;
            let mut seen = std::collections::BTreeSet::new();
            for &l in &f.labels.data {
                if l != 0 {
                    seen.insert((t, l));
                }
            }
            seen
        })
        .collect();
    gt.validate_partition(&universe)?;
    for (a, b) in gt.links() {
        if a.0 + 1 != b.0 {
            return Err(Error::config(format!(
                "generator bug: link {}:{} -> {}:{} skips frames",
                a.0, a.1, b.0, b.1
            )));
        }
    }
    Ok(SynthDataset { frames, gt, warnings })
}

/// Copies ground-truth track identity onto extracted instances.
pub fn attach_gt_cells(instances: &mut [CellInstance], gt: &LineageForest) -> Result<()> {
    let index = gt.instance_index();
    for inst in instances.iter_mut() {
        match index.get(&(inst.frame, inst.label)) {
            Some(&cell) => inst.gt_cell = Some(cell as u32),
            None => {
                return Err(Error::config(format!(
                    "instance {}:{} has no ground-truth track",
                    inst.frame, inst.label
                )))
            }
        }
    }
    Ok(())
}

/// Greedy mutual-nearest-centroid matching between consecutive frames:
/// the distance-sorted pair list is consumed while both endpoints are
/// free.  No gating, no appearance: the sanity baseline.
pub fn nearest_centroid_baseline(
    instances: &[CellInstance],
) -> std::collections::BTreeSet<crate::lineage::Link> {
    use std::collections::{BTreeMap, BTreeSet};
    let mut by_frame: BTreeMap<usize, Vec<&CellInstance>> = BTreeMap::new();
    for inst in instances {
        by_frame.entry(inst.frame).or_default().push(inst);
    }
    let mut links = BTreeSet::new();
    let frames: Vec<usize> = by_frame.keys().copied().collect();
    for pair in frames.windows(2) {
        if pair[1] != pair[0] + 1 {
            continue;
        }
        let (cur, next) = (&by_frame[&pair[0]], &by_frame[&pair[1]]);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, a) in cur.iter().enumerate() {
            for (j, b) in next.iter().enumerate() {
                let d = a
                    .centroid
                    .iter()
                    .zip(&b.centroid)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                pairs.push((d, i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_cur = vec![false; cur.len()];
        let mut used_next = vec![false; next.len()];
        for (_, i, j) in pairs {
            if used_cur[i] || used_next[j] {
                continue;
            }
            used_cur[i] = true;
            used_next[j] = true;
            links.insert(((cur[i].frame, cur[i].label), (next[j].frame, next[j].label)));
        }
    }
    links
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_instances;
    use crate::metrics::association_accuracy;

    fn tiny_cfg(seed: u64) -> SynthConfig {
        SynthConfig {
            height: 96,
            width: 96,
            frames: 8,
            initial_cells: 4,
            division_prob: 0.0,
            exit_prob: 0.0,
            entry_prob: 0.0,
            step_sigma: 1.5,
            drift_max: 1.0,
            radius_min: 3.0,
            radius_max: 5.0,
            intensity_drift: 0.02,
            allow_overlap: false,
            maxval: 4095,
            seed,
        }
    }

    #[test]
    fn no_divisions_means_constant_population_and_no_parents() {
        let data = generate_sequence(&tiny_cfg(3)).unwrap();
        assert_eq!(data.gt.tracks.len(), 4);
        assert!(data.gt.tracks.iter().all(|t| t.parent == 0));
        for f in &data.frames {
            let labels: std::collections::BTreeSet<u32> =
                f.labels.data.iter().copied().filter(|&l| l != 0).collect();
            assert_eq!(labels.len(), 4);
        }
    }

    #[test]
    fn static_case_gives_baseline_perfect_accuracy() {
        let mut cfg = tiny_cfg(4);
        cfg.step_sigma = 0.0;
        cfg.drift_max = 0.0;
        let data = generate_sequence(&cfg).unwrap();
        let mut instances = Vec::new();
        for f in &data.frames {
            instances.extend(extract_instances(f));
        }
        let links = nearest_centroid_baseline(&instances);
        let aa = association_accuracy(&links, &data.gt.links()).unwrap();
        assert_eq!(aa, 1.0);
    }

    #[test]
    fn fixed_seed_reproduces_identically() {
        let a = generate_sequence(&tiny_cfg(9)).unwrap();
        let b = generate_sequence(&tiny_cfg(9)).unwrap();
        assert_eq!(a.gt, b.gt);
        assert_eq!(a.frames.len(), b.frames.len());
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.image, fb.image);
            assert_eq!(fa.labels, fb.labels);
        }
    }

    #[test]
    fn divisions_produce_valid_two_daughter_forests() {
        let mut cfg = tiny_cfg(11);
        cfg.frames = 16;
        cfg.division_prob = 0.08;
        let data = generate_sequence(&cfg).unwrap();
        let children = data.gt.children();
        assert!(!children.is_empty(), "expected at least one division");
        for kids in children.values() {
            assert_eq!(kids.len(), 2);
        }
        // Daughters begin right after the parent ends, near the parent.
        for (parent, kids) in children {
            let p = data.gt.track(parent).unwrap();
            for &kid in &kids {
                assert_eq!(data.gt.track(kid).unwrap().t_init, p.t_fin + 1);
            }
        }
    }

    #[test]
    fn entries_and_exits_stay_consistent() {
        let mut cfg = tiny_cfg(13);
        cfg.frames = 20;
        cfg.exit_prob = 0.04;
        cfg.entry_prob = 0.3;
        let data = generate_sequence(&cfg).unwrap();
        let starts = data.gt.tracks.iter().filter(|t| t.t_init > 1 && t.parent == 0).count();
        let ends = data.gt.tracks.iter().filter(|t| t.t_fin < cfg.frames).count();
        assert!(starts > 0, "expected at least one entry");
        assert!(ends > 0, "expected at least one exit");
    }

    #[test]
    fn ground_truth_moves_respect_step_cap() {
        let mut cfg = tiny_cfg(17);
        cfg.frames = 15;
        cfg.step_sigma = 4.0;
        let data = generate_sequence(&cfg).unwrap();
        let mut instances = Vec::new();
        for f in &data.frames {
            instances.extend(extract_instances(f));
        }
        let centroid: std::collections::BTreeMap<InstanceKey, Vec<f64>> = instances
            .iter()
            .map(|i| ((i.frame, i.label), i.centroid.clone()))
            .collect();
        // Mitosis offsets can exceed a move, so only same-track links
        // are held to the cap; centroid jitter from shading adds < 2px.
        for t in &data.gt.tracks {
            for w in t.nodes.windows(2) {
                let a = &centroid[&w[0]];
                let b = &centroid[&w[1]];
                for ax in 0..2 {
                    assert!(
                        (a[ax] - b[ax]).abs() <= cfg.step_cap() + 2.0,
                        "move {} exceeds cap {}",
                        (a[ax] - b[ax]).abs(),
                        cfg.step_cap()
                    );
                }
            }
        }
    }

    #[test]
    fn swapping_cells_fool_the_baseline() {
        // Two instances trade exact positions between frames; greedy
        // nearest matching must produce the documented identity switch.
        let mk = |frame: usize, label: u32, x: f64| CellInstance {
            frame,
            label,
            centroid: vec![10.0, x],
            bbox_min: vec![8.0, x - 2.0],
            bbox_max: vec![12.0, x + 2.0],
            area: 20.0,
            intensity_min: 0.1,
            intensity_max: 0.9,
            intensity_mean: 0.5,
            intensity_std: 0.2,
            axes: Some((4.0, 4.0)),
            descriptor: vec![0.1; crate::features::DESCRIPTOR_LEN],
            gt_cell: Some(label),
        };
        let instances = vec![mk(1, 1, 10.0), mk(1, 2, 30.0), mk(2, 1, 30.0), mk(2, 2, 10.0)];
        let links = nearest_centroid_baseline(&instances);
        // True motion: 1 -> 2's old spot and vice versa.  The baseline
        // links by proximity instead.
        assert!(links.contains(&((1, 1), (2, 2))));
        assert!(links.contains(&((1, 2), (2, 1))));
        let gt: std::collections::BTreeSet<crate::lineage::Link> =
            [((1, 1), (2, 1)), ((1, 2), (2, 2))].into_iter().collect();
        assert_eq!(association_accuracy(&links, &gt).unwrap(), 0.0);
    }

    #[test]
    fn baseline_matches_greedy_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut instances = Vec::new();
        for t in 1..=3usize {
            for k in 1..=5u32 {
                let mk = (t, k);
                instances.push(CellInstance {
                    frame: mk.0,
                    label: mk.1,
                    centroid: vec![rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)],
                    bbox_min: vec![0.0, 0.0],
                    bbox_max: vec![1.0, 1.0],
                    area: 4.0,
                    intensity_min: 0.0,
                    intensity_max: 1.0,
                    intensity_mean: 0.5,
                    intensity_std: 0.1,
                    axes: None,
                    descriptor: vec![0.2; crate::features::DESCRIPTOR_LEN],
                    gt_cell: None,
                });
            }
        }
        let links = nearest_centroid_baseline(&instances);
        // Oracle: repeatedly extract the globally closest free pair.
        let mut expect = std::collections::BTreeSet::new();
        for t in 1..=2usize {
            let cur: Vec<&CellInstance> =
                instances.iter().filter(|i| i.frame == t).collect();
            let next: Vec<&CellInstance> =
                instances.iter().filter(|i| i.frame == t + 1).collect();
            let mut free_cur: Vec<&CellInstance> = cur.clone();
            let mut free_next: Vec<&CellInstance> = next.clone();
            while !free_cur.is_empty() && !free_next.is_empty() {
                let mut best = (f64::INFINITY, 0usize, 0usize);
                for (i, a) in free_cur.iter().enumerate() {
                    for (j, b) in free_next.iter().enumerate() {
                        let d = ((a.centroid[0] - b.centroid[0]).powi(2)
                            + (a.centroid[1] - b.centroid[1]).powi(2))
                        .sqrt();
                        if d < best.0 {
                            best = (d, i, j);
                        }
                    }
                }
                let a = free_cur.remove(best.1);
                let b = free_next.remove(best.2);
                expect.insert(((a.frame, a.label), (b.frame, b.label)));
            }
        }
        assert_eq!(links, expect);
    }

    #[test]
    fn appearance_signatures_separate_same_cell_from_different_cells() {
        let mut cfg = tiny_cfg(29);
        cfg.frames = 10;
        cfg.initial_cells = 6;
        let data = generate_sequence(&cfg).unwrap();
        let mut instances = Vec::new();
        for f in &data.frames {
            instances.extend(extract_instances(f));
        }
        attach_gt_cells(&mut instances, &data.gt).unwrap();
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let mut same = Vec::new();
        let mut diff = Vec::new();
        for (i, a) in instances.iter().enumerate() {
            for b in instances.iter().skip(i + 1) {
                let s = cos(&a.descriptor, &b.descriptor);
                if a.gt_cell == b.gt_cell {
                    same.push(s);
                } else {
                    diff.push(s);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&same) > mean(&diff),
            "same-cell {} vs different-cell {}",
            mean(&same),
            mean(&diff)
        );
    }

    #[test]
    fn overlap_mode_keeps_every_cell_visible() {
        let mut cfg = tiny_cfg(31);
        cfg.allow_overlap = true;
        cfg.initial_cells = 10;
        cfg.step_sigma = 4.0;
        let data = generate_sequence(&cfg).unwrap();
        // validate_partition inside generate_sequence already proves
        // every tracked instance rendered; spot-check areas too.
        for f in &data.frames {
            for inst in extract_instances(f) {
                assert!(inst.area >= 3.0, "cell {}:{} nearly erased", f.t, inst.label);
            }
        }
    }
}
