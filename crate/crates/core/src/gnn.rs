//! The edge-classifying message-passing network.
//!
//! Node features homogenize the concatenated metric embedding and
//! spatio-temporal vector; edge features start from the
//! distance-and-similarity vector of their endpoints.  Each of the L
//! blocks first updates nodes with attention-weighted neighbor sums
//! (the self term enters with weight exactly 1, never through the
//! attention MLP), then refreshes edge features from the updated
//! endpoints.  A classifier head turns final edge features into
//! association probabilities.

use rand::Rng;
use serde_json::json;

use crate::adam::{Adam, AdamConfig};
use crate::checkpoint::Checkpoint;
use crate::dml::Embedder;
use crate::error::{Error, Result};
use crate::features::{build_st_table, minmax_scale, DESCRIPTOR_LEN};
use crate::graph::{
    build_graph, frame_window, gt_edge_labels, CandidateGraph, NeighborhoodRule,
    TrainingSequence,
};
use crate::metrics::edge_prf;
use crate::mlp::{Activation, LayerSpec, Mlp};
use crate::tape::{Param, Tape, TapeMode, ValueId};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GnnConfig {
    /// Node feature width after homogenization.
    pub d_v: usize,
    /// Edge feature width.
    pub d_e: usize,
    /// Message-passing blocks L.
    pub blocks: usize,
    /// Classifier hidden widths.
    pub classifier_hidden: (usize, usize),
    /// Spatio-temporal feature width (13 for 2D, 14 for 3D).
    pub st_width: usize,
    /// Metric embedding width.
    pub dml_dim: usize,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            d_v: 32,
            d_e: 64,
            blocks: 6,
            classifier_hidden: (64, 32),
            st_width: 13,
            dml_dim: crate::dml::DML_DIM,
        }
    }
}

impl GnnConfig {
    fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::config("the network needs at least one block"));
        }
        if self.d_v == 0 || self.d_e == 0 {
            return Err(Error::config("feature widths must be positive"));
        }
        Ok(())
    }

    /// Width of the edge-encoder input: previous edge feature, both
    /// endpoint features, and their distance-and-similarity vector.
    pub fn ee_input(&self) -> usize {
        self.d_e + 2 * self.d_v + self.d_v + 1
    }
}

struct Block {
    f_edge: Mlp,
    f_node: Mlp,
    f_ee: Mlp,
}

pub struct GnnModel {
    cfg: GnnConfig,
    node_homogenizer: Mlp,
    edge_homogenizer: Mlp,
    blocks: Vec<Block>,
    classifier: Mlp,
}

/// Detached per-graph inputs for a forward pass.
pub struct GraphInputs {
    pub v_dml: Tensor2,
    pub v_st: Tensor2,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

/// Tape handles produced by a forward pass.
pub struct GnnForward {
    pub probs: ValueId,
    pub logits: ValueId,
}

impl GnnModel {
    pub fn new(cfg: GnnConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let node_homogenizer = Mlp::new(
            "node_homogenizer",
            &[LayerSpec::new(cfg.dml_dim + cfg.st_width, cfg.d_v, Activation::None)],
            rng,
        )?;
        let edge_homogenizer = Mlp::new(
            "edge_homogenizer",
            &[LayerSpec::new(cfg.d_v + 1, cfg.d_e, Activation::None)],
            rng,
        )?;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for l in 0..cfg.blocks {
            blocks.push(Block {
                f_edge: Mlp::new(
                    format!("block{}.edge", l),
                    &[
                        LayerSpec::new(cfg.d_e, cfg.d_v, Activation::Relu),
                        LayerSpec::new(cfg.d_v, 1, Activation::Sigmoid),
                    ],
                    rng,
                )?,
                f_node: Mlp::new(
                    format!("block{}.node", l),
                    &[LayerSpec::new(cfg.d_v, cfg.d_v, Activation::None)],
                    rng,
                )?,
                f_ee: Mlp::new(
                    format!("block{}.ee", l),
                    &[
                        LayerSpec::new(cfg.ee_input(), cfg.d_e, Activation::Relu),
                        LayerSpec::new(cfg.d_e, cfg.d_e, Activation::None),
                    ],
                    rng,
                )?,
            });
        }
        let classifier = Mlp::new(
            "classifier",
            &[
                LayerSpec::new(cfg.d_e, cfg.classifier_hidden.0, Activation::Relu),
                LayerSpec::new(cfg.classifier_hidden.0, cfg.classifier_hidden.1, Activation::Relu),
                LayerSpec::new(cfg.classifier_hidden.1, 1, Activation::None),
            ],
            rng,
        )?;
        Ok(GnnModel { cfg, node_homogenizer, edge_homogenizer, blocks, classifier })
    }

    pub fn config(&self) -> GnnConfig {
        self.cfg
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = self.node_homogenizer.params();
        out.extend(self.edge_homogenizer.params());
        for b in &self.blocks {
            out.extend(b.f_edge.params());
            out.extend(b.f_node.params());
            out.extend(b.f_ee.params());
        }
        out.extend(self.classifier.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.node_homogenizer.params_mut();
        out.extend(self.edge_homogenizer.params_mut());
        for b in &mut self.blocks {
            out.extend(b.f_edge.params_mut());
            out.extend(b.f_node.params_mut());
            out.extend(b.f_ee.params_mut());
        }
        out.extend(self.classifier.params_mut());
        out
    }

    /// Per-edge distance-and-similarity segment on the tape: absolute
    /// endpoint differences plus their cosine, one row per edge.
    fn ds_segment(&self, tape: &mut Tape, x: ValueId, src: &[usize], dst: &[usize]) -> ValueId {
        let xi = tape.gather_rows(x, src);
        let xj = tape.gather_rows(x, dst);
        let diff = tape.sub(xi, xj);
        let absdiff = tape.abs(diff);
        let cos = tape.row_cosine(xi, xj);
        tape.concat_cols(&[absdiff, cos])
    }

    /// Attention-weighted node update: for each node, the mapped self
    /// feature plus the sum of mapped in-neighbors scaled by their
    /// edge's attention weight.
    fn pdn_conv(
        &self,
        tape: &mut Tape,
        block: &Block,
        x: ValueId,
        z: ValueId,
        src: &[usize],
        dst: &[usize],
        num_nodes: usize,
    ) -> Result<ValueId> {
        let weights = block.f_edge.forward(tape, z)?;
        let mapped = block.f_node.forward(tape, x)?;
        let gathered = tape.gather_rows(mapped, src);
        let scaled = tape.mul_rows_by_col(gathered, weights);
        let agg = tape.scatter_add_rows(scaled, dst, num_nodes);
        Ok(tape.add(mapped, agg))
    }

    /// Edge refresh: encode [previous edge feature, updated source,
    /// updated target, distance-and-similarity of the endpoints].
    fn edge_encode(
        &self,
        tape: &mut Tape,
        block: &Block,
        z: ValueId,
        x: ValueId,
        src: &[usize],
        dst: &[usize],
    ) -> Result<ValueId> {
        let xi = tape.gather_rows(x, src);
        let xj = tape.gather_rows(x, dst);
        let ds = self.ds_segment(tape, x, src, dst);
        let cat = tape.concat_cols(&[z, xi, xj, ds]);
        block.f_ee.forward(tape, cat)
    }

    /// Full taped pass from raw inputs to edge probabilities.
    pub fn forward(
        &self,
        tape: &mut Tape,
        v_dml: ValueId,
        v_st: ValueId,
        src: &[usize],
        dst: &[usize],
    ) -> Result<GnnForward> {
        let n_dml = tape.value(v_dml).rows();
        let n_st = tape.value(v_st).rows();
        if n_dml != n_st {
            return Err(Error::config(format!(
                "{} embedding rows vs {} feature rows",
                n_dml, n_st
            )));
        }
        if src.len() != dst.len() {
            return Err(Error::config("edge endpoint lists differ in length"));
        }
        let num_nodes = n_dml;
        let node_input = tape.concat_cols(&[v_dml, v_st]);
        let mut x = self.node_homogenizer.forward(tape, node_input)?;
        let ds0 = self.ds_segment(tape, x, src, dst);
        let mut z = self.edge_homogenizer.forward(tape, ds0)?;
        for block in &self.blocks {
            x = self.pdn_conv(tape, block, x, z, src, dst, num_nodes)?;
            z = self.edge_encode(tape, block, z, x, src, dst)?;
        }
        let logits = self.classifier.forward(tape, z)?;
        let probs = tape.sigmoid(logits);
        Ok(GnnForward { probs, logits })
    }

    /// Convenience evaluation pass returning plain tensors.
    pub fn forward_plain(&self, inputs: &GraphInputs) -> Result<(Tensor2, Tensor2)> {
        let mut tape = Tape::new(TapeMode::Eval);
        let v_dml = tape.leaf(inputs.v_dml.clone());
        let v_st = tape.leaf(inputs.v_st.clone());
        let out = self.forward(&mut tape, v_dml, v_st, &inputs.src, &inputs.dst)?;
        Ok((tape.value(out.probs).clone(), tape.value(out.logits).clone()))
    }

    /// Serializes weights plus the architecture and any caller metadata
    /// (for example the fitted neighborhood rule).
    pub fn to_checkpoint(&self, extra_meta: serde_json::Value) -> Result<Checkpoint> {
        let mut meta = json!({
            "d_v": self.cfg.d_v,
            "d_e": self.cfg.d_e,
            "blocks": self.cfg.blocks,
            "classifier_hidden": [self.cfg.classifier_hidden.0, self.cfg.classifier_hidden.1],
            "st_width": self.cfg.st_width,
            "dml_dim": self.cfg.dml_dim,
        });
        if let (Some(base), Some(extra)) = (meta.as_object_mut(), extra_meta.as_object()) {
            for (k, v) in extra {
                base.insert(k.clone(), v.clone());
            }
        }
        Checkpoint::from_params("tracker", meta, &self.params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, rng: &mut impl Rng) -> Result<Self> {
        ckpt.expect_kind("tracker")?;
        let dim = |key: &str| -> Result<usize> {
            ckpt.meta_field(key)?
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::config(format!("checkpoint field `{}` is not an integer", key)))
        };
        let hidden = ckpt.meta_field("classifier_hidden")?;
        let hidden = hidden
            .as_array()
            .filter(|a| a.len() == 2)
            .and_then(|a| Some((a[0].as_u64()? as usize, a[1].as_u64()? as usize)))
            .ok_or_else(|| Error::config("checkpoint field `classifier_hidden` malformed"))?;
        let cfg = GnnConfig {
            d_v: dim("d_v")?,
            d_e: dim("d_e")?,
            blocks: dim("blocks")?,
            classifier_hidden: hidden,
            st_width: dim("st_width")?,
            dml_dim: dim("dml_dim")?,
        };
        let mut model = GnnModel::new(cfg, rng)?;
        ckpt.apply_to_params(&mut model.params_mut())?;
        Ok(model)
    }
}

/// Class-weighted cross-entropy for edge classification.  The positive
/// class weight grows with the mean candidate in-degree so that the
/// single true association outweighs its many inactive rivals.
pub fn weighted_ce_loss(
    tape: &mut Tape,
    probs: ValueId,
    labels: &[f64],
    mean_in_degree: f64,
) -> Result<ValueId> {
    if mean_in_degree < 1.0 {
        return Err(Error::config(format!(
            "mean candidate in-degree {} is below 1; the class weights are meaningless",
            mean_in_degree
        )));
    }
    let w0 = 1.0 / mean_in_degree;
    let w1 = (mean_in_degree - 1.0) / mean_in_degree;
    Ok(tape.weighted_bce(probs, labels, w0, w1))
}

/// One prepared training graph: structure, ground truth, and detached
/// input features (the spatio-temporal table scaled within this graph).
pub struct TrainGraph {
    pub graph: CandidateGraph,
    pub labels: Vec<f64>,
    pub v_st: Tensor2,
    pub descriptors: Tensor2,
}

impl TrainGraph {
    /// Builds structure and inputs for one set of instances.
    pub fn prepare(
        instances: &[crate::features::CellInstance],
        rule: &NeighborhoodRule,
        gt: Option<&crate::lineage::LineageForest>,
    ) -> Result<Self> {
        let graph = build_graph(instances, rule)?;
        let labels = match gt {
            Some(forest) => gt_edge_labels(&graph, forest)?,
            None => Vec::new(),
        };
        let st = build_st_table(&graph.instances)?;
        let (scaled, _) = minmax_scale(&st);
        let mut descriptors = Tensor2::zeros(graph.instances.len(), DESCRIPTOR_LEN);
        for (r, inst) in graph.instances.iter().enumerate() {
            if inst.descriptor.len() != DESCRIPTOR_LEN {
                return Err(Error::config(format!(
                    "instance {}:{} has descriptor length {}",
                    inst.frame,
                    inst.label,
                    inst.descriptor.len()
                )));
            }
            descriptors.row_mut(r).copy_from_slice(&inst.descriptor);
        }
        Ok(TrainGraph { graph, labels, v_st: scaled.features, descriptors })
    }
}

/// Cuts every training sequence into fixed-length frame windows and
/// prepares a graph per window.  Windows with no edges are dropped.
pub fn prepare_training_graphs(
    sequences: &[TrainingSequence],
    rule: &NeighborhoodRule,
    window: usize,
    stride: usize,
) -> Result<Vec<TrainGraph>> {
    if window < 2 {
        return Err(Error::config("windows need at least two frames"));
    }
    if stride == 0 {
        return Err(Error::config("stride must be positive"));
    }
    let mut graphs = Vec::new();
    for seq in sequences {
        let t_max = seq.instances.iter().map(|i| i.frame).max().unwrap_or(0);
        let t_min = seq.instances.iter().map(|i| i.frame).min().unwrap_or(1);
        if t_max < t_min + 1 {
            continue;
        }
        let mut t0 = t_min;
        loop {
            let t1 = (t0 + window - 1).min(t_max);
            let slice = frame_window(seq.instances, t0, t1);
            if !slice.is_empty() {
                let tg = TrainGraph::prepare(&slice, rule, Some(seq.gt))?;
                if tg.graph.num_edges() > 0 {
                    graphs.push(tg);
                }
            }
            if t1 == t_max {
                break;
            }
            t0 += stride;
        }
    }
    if graphs.is_empty() {
        return Err(Error::config("no usable training graphs after windowing"));
    }
    Ok(graphs)
}

#[derive(Debug, Clone, Copy)]
pub struct GnnTrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Frames per training graph.
    pub window: usize,
    /// Window step; equal to `window` means disjoint windows.
    pub stride: usize,
    /// Also fine-tune the metric embedder end to end.
    pub joint_dml: bool,
    /// Embedder learning rate during joint fine-tuning.
    pub joint_dml_lr: f64,
}

impl Default for GnnTrainConfig {
    fn default() -> Self {
        GnnTrainConfig {
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 30,
            window: 10,
            stride: 10,
            joint_dml: false,
            joint_dml_lr: 1e-5,
        }
    }
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct GnnEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Trains the tracker on prepared graphs.  Descriptors run through the
/// embedder inside the tape, so gradients reach it; its parameters only
/// move when joint fine-tuning is on.
pub fn train_gnn(
    model: &mut GnnModel,
    embedder: &mut Embedder,
    graphs: &[TrainGraph],
    cfg: &GnnTrainConfig,
) -> Result<Vec<GnnEpoch>> {
    if graphs.is_empty() {
        return Err(Error::config("no training graphs"));
    }
    let mut opt = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));
    let mut dml_opt = Adam::new(AdamConfig::new(cfg.joint_dml_lr, cfg.weight_decay));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut probs_all = Vec::new();
        let mut labels_all = Vec::new();
        for tg in graphs {
            let mut tape = Tape::new(TapeMode::Train);
            let desc = tape.leaf(tg.descriptors.clone());
            let v_dml = embedder.forward(&mut tape, desc)?;
            let v_st = tape.leaf(tg.v_st.clone());
            let out = model.forward(
                &mut tape,
                v_dml,
                v_st,
                &tg.graph.source_indices(),
                &tg.graph.target_indices(),
            )?;
            let loss = weighted_ce_loss(
                &mut tape,
                out.probs,
                &tg.labels,
                tg.graph.mean_in_degree(),
            )?;
            let loss_value = tape.value(loss).get(0, 0);
            if !loss_value.is_finite() {
                return Err(Error::NonFinite {
                    name: "tracker loss".to_string(),
                    detail: format!("epoch {}: loss {}", epoch, loss_value),
                });
            }
            loss_sum += loss_value;
            probs_all.extend(tape.value(out.probs).data().iter().cloned());
            labels_all.extend(tg.labels.iter().cloned());
            let grads = tape.backward(loss)?;
            opt.step(&mut model.params_mut(), &grads)?;
            if cfg.joint_dml {
                dml_opt.step(&mut embedder.params_mut(), &grads)?;
            }
        }
        let prf = edge_prf(&probs_all, &labels_all, 0.5);
        history.push(GnnEpoch {
            epoch,
            mean_loss: loss_sum / graphs.len() as f64,
            precision: prf.precision,
            recall: prf.recall,
        });
    }
    Ok(history)
}
