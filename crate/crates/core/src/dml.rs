//! Deep metric learning of per-instance appearance embeddings.
//!
//! A three-layer MLP maps the 24-wide descriptor to a unit-normalized
//! 128-dimensional embedding.  Training samples m instances from each
//! of kappa cells out of temporally contiguous windows, mines hard
//! pairs from the batch affinity matrix, and minimizes the
//! multi-similarity loss.  Trunk and head train under separate Adam
//! instances with their own learning rates.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::adam::{Adam, AdamConfig};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::features::{CellInstance, DESCRIPTOR_LEN};
use crate::mlp::{Activation, LayerSpec, Mlp};
use crate::tape::{AnchorPairs, MinedPairs, MsLossConfig, Param, Tape, TapeMode, ValueId};
use crate::tensor::Tensor2;

/// Output embedding width.
pub const DML_DIM: usize = 128;
/// Hidden width of both trunk layers.
pub const DML_HIDDEN: usize = 64;

/// Descriptor rows with per-row cell identity, grouped for sampling.
pub struct DmlDataset {
    pub descriptors: Tensor2,
    pub labels: Vec<u32>,
    pub frames: Vec<usize>,
    by_class: BTreeMap<u32, Vec<usize>>,
}

impl DmlDataset {
    /// Collects descriptors from instances that carry ground truth.
    /// Rows are grouped per cell and ordered by frame.
    pub fn from_instances(instances: &[CellInstance]) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::config("no instances to learn embeddings from"));
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut frames = Vec::new();
        for inst in instances {
            let cell = inst.gt_cell.ok_or_else(|| {
                Error::config(format!(
                    "instance {}:{} lacks a ground-truth cell index",
                    inst.frame, inst.label
                ))
            })?;
            if inst.descriptor.len() != DESCRIPTOR_LEN {
                return Err(Error::config(format!(
                    "instance {}:{} has a descriptor of length {}",
                    inst.frame,
                    inst.label,
                    inst.descriptor.len()
                )));
            }
            rows.push(inst.descriptor.clone());
            labels.push(cell);
            frames.push(inst.frame);
        }
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (row, &label) in labels.iter().enumerate() {
            by_class.entry(label).or_default().push(row);
        }
        for members in by_class.values_mut() {
            members.sort_by_key(|&r| frames[r]);
        }
        Ok(DmlDataset {
            descriptors: Tensor2::from_rows(&rows),
            labels,
            frames,
            by_class,
        })
    }

    pub fn num_instances(&self) -> usize {
        self.labels.len()
    }

    /// Cells with at least `m` appearances.
    fn eligible_classes(&self, m: usize) -> Vec<u32> {
        self.by_class
            .iter()
            .filter(|(_, rows)| rows.len() >= m)
            .map(|(&c, _)| c)
            .collect()
    }
}

/// One sampled batch: m rows from each of kappa cells.
pub struct DmlBatch {
    pub rows: Tensor2,
    pub labels: Vec<u32>,
}

/// Draws kappa distinct cells, then m temporally consecutive
/// appearances per cell with a uniformly random window start.
pub fn sample_batch(
    dataset: &DmlDataset,
    kappa: usize,
    m: usize,
    rng: &mut impl Rng,
) -> Result<DmlBatch> {
    if kappa == 0 || m == 0 {
        return Err(Error::config("kappa and m must be positive"));
    }
    let eligible = dataset.eligible_classes(m);
    if eligible.len() < kappa {
        return Err(Error::config(format!(
            "need {} cells with at least {} appearances, found {}",
            kappa,
            m,
            eligible.len()
        )));
    }
    let chosen: Vec<u32> = eligible.choose_multiple(rng, kappa).cloned().collect();
    let mut rows = Vec::with_capacity(kappa * m);
    let mut labels = Vec::with_capacity(kappa * m);
    for class in chosen {
        let members = &dataset.by_class[&class];
        let start = rng.gen_range(0..=members.len() - m);
        for &r in &members[start..start + m] {
            rows.push(dataset.descriptors.row(r).to_vec());
            labels.push(class);
        }
    }
    Ok(DmlBatch { rows: Tensor2::from_rows(&rows), labels })
}

/// The descriptor-to-embedding network.
pub struct Embedder {
    mlp: Mlp,
}

impl Embedder {
    pub fn new(rng: &mut impl Rng) -> Result<Self> {
        let specs = [
            LayerSpec::new(DESCRIPTOR_LEN, DML_HIDDEN, Activation::Relu),
            LayerSpec::new(DML_HIDDEN, DML_HIDDEN, Activation::Relu),
            LayerSpec::new(DML_HIDDEN, DML_DIM, Activation::None),
        ];
        Ok(Embedder { mlp: Mlp::new("embedder", &specs, rng)? })
    }

    /// Taped forward pass ending in the unit-normalization op.
    pub fn forward(&self, tape: &mut Tape, input: ValueId) -> Result<ValueId> {
        let raw = self.mlp.forward(tape, input)?;
        tape.row_l2_normalize(raw)
    }

    /// Embeds rows outside any training context.
    pub fn embed(&self, descriptors: &Tensor2) -> Result<Tensor2> {
        let mut tape = Tape::new(TapeMode::Eval);
        let input = tape.leaf(descriptors.clone());
        let out = self.forward(&mut tape, input)?;
        Ok(tape.value(out).clone())
    }

    pub fn params(&self) -> Vec<&Param> {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.mlp.params_mut()
    }

    /// First two layers: the trunk group of the two-optimizer scheme.
    pub fn trunk_params_mut(&mut self) -> Vec<&mut Param> {
        let mut all = self.mlp.params_mut();
        all.truncate(4);
        all
    }

    /// Final projection layer: the head group.
    pub fn head_params_mut(&mut self) -> Vec<&mut Param> {
        self.mlp.params_mut().split_off(4)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "descriptor_len": DESCRIPTOR_LEN,
            "hidden": DML_HIDDEN,
            "dim": DML_DIM,
        });
        Checkpoint::from_params("embedder", meta, &self.params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, rng: &mut impl Rng) -> Result<Self> {
        ckpt.expect_kind("embedder")?;
        let mut embedder = Embedder::new(rng)?;
        ckpt.apply_to_params(&mut embedder.params_mut())?;
        Ok(embedder)
    }
}

/// Pairwise cosine similarities of unit rows.
pub fn affinity(embeddings: &Tensor2) -> Tensor2 {
    embeddings.matmul(&embeddings.transpose())
}

/// Selects hard pairs per anchor.  A different-class j is hard when its
/// similarity exceeds the anchor's weakest same-class similarity minus
/// epsilon; a same-class l is hard when its similarity is below the
/// anchor's strongest different-class similarity plus epsilon.  Anchors
/// without same-class partners (or, for positives, without any
/// different-class rows) contribute nothing.
pub fn mine_hard_pairs(a: &Tensor2, labels: &[u32], epsilon: f64) -> MinedPairs {
    assert_eq!(a.rows(), a.cols());
    assert_eq!(a.rows(), labels.len());
    let n = labels.len();
    let mut anchors = Vec::new();
    for i in 0..n {
        let same: Vec<usize> = (0..n).filter(|&k| k != i && labels[k] == labels[i]).collect();
        if same.is_empty() {
            continue;
        }
        let diff: Vec<usize> = (0..n).filter(|&r| labels[r] != labels[i]).collect();
        let min_pos = same
            .iter()
            .map(|&k| a.get(i, k))
            .fold(f64::INFINITY, f64::min);
        let negatives: Vec<usize> = diff
            .iter()
            .cloned()
            .filter(|&j| a.get(i, j) > min_pos - epsilon)
            .collect();
        let positives: Vec<usize> = if diff.is_empty() {
            Vec::new()
        } else {
            let max_neg = diff
                .iter()
                .map(|&r| a.get(i, r))
                .fold(f64::NEG_INFINITY, f64::max);
            same.iter()
                .cloned()
                .filter(|&l| a.get(i, l) < max_neg + epsilon)
                .collect()
        };
        if positives.is_empty() && negatives.is_empty() {
            continue;
        }
        anchors.push(AnchorPairs { anchor: i, positives, negatives });
    }
    MinedPairs { anchors }
}

/// Total mined pair count, the clustering progress signal.
pub fn hard_pair_count(mined: &MinedPairs) -> usize {
    mined
        .anchors
        .iter()
        .map(|a| a.positives.len() + a.negatives.len())
        .sum()
}

#[derive(Debug, Clone, Copy)]
pub struct DmlConfig {
    pub kappa: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Mining margin.
    pub epsilon: f64,
    pub steps: usize,
    pub lr_trunk: f64,
    pub lr_head: f64,
    pub weight_decay: f64,
}

impl Default for DmlConfig {
    fn default() -> Self {
        DmlConfig {
            kappa: 8,
            m: 4,
            alpha: 2.0,
            beta: 50.0,
            lambda: 0.5,
            epsilon: 0.1,
            steps: 600,
            lr_trunk: 1e-5,
            lr_head: 1e-4,
            weight_decay: 1e-4,
        }
    }
}

impl DmlConfig {
    pub fn loss_config(&self) -> MsLossConfig {
        MsLossConfig { alpha: self.alpha, beta: self.beta, lambda: self.lambda }
    }
}

/// One training step's diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct DmlStep {
    pub step: usize,
    pub loss: f64,
    pub hard_pairs: usize,
}

/// Trains the embedder in place, returning the per-step loss history.
pub fn train_dml(
    embedder: &mut Embedder,
    dataset: &DmlDataset,
    cfg: &DmlConfig,
    rng: &mut impl Rng,
) -> Result<Vec<DmlStep>> {
    let mut trunk_opt = Adam::new(AdamConfig::new(cfg.lr_trunk, cfg.weight_decay));
    let mut head_opt = Adam::new(AdamConfig::new(cfg.lr_head, cfg.weight_decay));
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = sample_batch(dataset, cfg.kappa, cfg.m, rng)?;
        let mut tape = Tape::new(TapeMode::Train);
        let input = tape.leaf(batch.rows.clone());
        let emb = embedder.forward(&mut tape, input)?;
        let sim = tape.gram(emb);
        let mined = mine_hard_pairs(tape.value(sim), &batch.labels, cfg.epsilon);
        let hard_pairs = hard_pair_count(&mined);
        let loss = tape.ms_loss(sim, mined, cfg.loss_config());
        let loss_value = tape.value(loss).get(0, 0);
        if !loss_value.is_finite() {
            return Err(Error::NonFinite {
                name: "dml loss".to_string(),
                detail: format!("step {}: loss {}", step, loss_value),
            });
        }
        let grads = tape.backward(loss)?;
        trunk_opt.step(&mut embedder.trunk_params_mut(), &grads)?;
        head_opt.step(&mut embedder.head_params_mut(), &grads)?;
        history.push(DmlStep { step, loss: loss_value, hard_pairs });
    }
    Ok(history)
}

/// Exact nearest-neighbor retrieval quality of an embedding set.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RetrievalMetrics {
    pub p_at_1: f64,
    pub r_precision: f64,
    pub map_at_r: f64,
    pub queries: usize,
}

/// Ranks every other row by cosine similarity per query (ties broken by
/// row index) and reports P@1, R-precision and MAP@R, with R set per
/// query to its class size minus one.  Rows whose class has a single
/// member are skipped.
pub fn retrieval_metrics(embeddings: &Tensor2, labels: &[u32]) -> Result<RetrievalMetrics> {
    assert_eq!(embeddings.rows(), labels.len());
    let n = labels.len();
    let mut class_size: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in labels {
        *class_size.entry(l).or_insert(0) += 1;
    }
    let sim = affinity(embeddings);
    let mut p1_sum = 0.0;
    let mut rp_sum = 0.0;
    let mut map_sum = 0.0;
    let mut queries = 0;
    for q in 0..n {
        let r_budget = class_size[&labels[q]] - 1;
        if r_budget == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..n).filter(|&j| j != q).collect();
        order.sort_by(|&a, &b| {
            sim.get(q, b)
                .partial_cmp(&sim.get(q, a))
                .unwrap()
                .then(a.cmp(&b))
        });
        let relevant = |j: usize| labels[j] == labels[q];
        p1_sum += if relevant(order[0]) { 1.0 } else { 0.0 };
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (k, &j) in order.iter().take(r_budget).enumerate() {
            if relevant(j) {
                hits += 1;
                ap += hits as f64 / (k + 1) as f64;
            }
        }
        rp_sum += hits as f64 / r_budget as f64;
        map_sum += ap / r_budget as f64;
        queries += 1;
    }
    if queries == 0 {
        return Err(Error::config(
            "retrieval metrics need at least one class with two instances",
        ));
    }
    let q = queries as f64;
    Ok(RetrievalMetrics {
        p_at_1: p1_sum / q,
        r_precision: rp_sum / q,
        map_at_r: map_sum / q,
        queries,
    })
}
