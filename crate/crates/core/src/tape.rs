//! Tape-based reverse-mode differentiation over `Tensor2` values.
//!
//! A `Tape` records every operation of a forward pass as a node holding
//! the produced value.  `backward` walks the nodes in reverse order and
//! accumulates exact gradients for every parameter leaf.  The op set is
//! exactly what the feature embedder, the message-passing network, and
//! their losses need.  Higher-order derivatives are not supported.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{dot, norm, Tensor2};

/// Smallest row norm `row_l2_normalize` accepts.
pub const MIN_NORMALIZE_NORM: f64 = 1e-12;

/// Below this product of row norms a cosine is defined as zero.
const COSINE_TINY: f64 = 1e-24;

static NEXT_PARAM_ID: AtomicUsize = AtomicUsize::new(0);

/// A named, trainable matrix.  Ids are unique per process so optimizer
/// state and gradient maps can be keyed by them.
#[derive(Debug, Clone)]
pub struct Param {
    id: usize,
    name: String,
    pub value: Tensor2,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor2) -> Self {
        Param {
            id: NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            value,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Handle to a value stored on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

/// Whether a tape supports `backward`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapeMode {
    Train,
    Eval,
}

/// Multi-similarity loss constants (mining margin lives with the miner).
#[derive(Debug, Clone, Copy)]
pub struct MsLossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

/// Pairs selected by the miner for one anchor.  Index values refer to
/// rows of the similarity matrix the loss consumes.
#[derive(Debug, Clone)]
pub struct AnchorPairs {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Mining output: only anchors that kept at least one pair.
#[derive(Debug, Clone, Default)]
pub struct MinedPairs {
    pub anchors: Vec<AnchorPairs>,
}

impl MinedPairs {
    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

enum Op {
    Leaf { param: Option<usize> },
    MatMul { a: ValueId, b: ValueId },
    AddRowBroadcast { a: ValueId, bias: ValueId },
    Relu { x: ValueId },
    Sigmoid { x: ValueId },
    Abs { x: ValueId },
    Add { a: ValueId, b: ValueId },
    Sub { a: ValueId, b: ValueId },
    MulElem { a: ValueId, b: ValueId },
    ConcatCols { parts: Vec<ValueId> },
    GatherRows { x: ValueId, idx: Vec<usize> },
    ScatterAddRows { x: ValueId, idx: Vec<usize> },
    MulRowsByCol { a: ValueId, s: ValueId },
    RowCosine { a: ValueId, b: ValueId },
    RowL2Normalize { x: ValueId },
    Gram { x: ValueId },
    SumAll { x: ValueId },
    MsLoss { sim: ValueId, mined: MinedPairs, cfg: MsLossConfig },
    WeightedBce { p: ValueId, labels: Vec<f64>, w0: f64, w1: f64 },
}

struct Node {
    op: Op,
    value: Tensor2,
}

/// Gradients produced by one `backward` call.
pub struct Gradients {
    by_param: BTreeMap<usize, Tensor2>,
    by_value: Vec<Option<Tensor2>>,
}

impl Gradients {
    /// Gradient for `p`; zeros if the loss never touched it.
    pub fn for_param(&self, p: &Param) -> Tensor2 {
        match self.by_param.get(&p.id()) {
            Some(g) => g.clone(),
            None => Tensor2::zeros(p.value.rows(), p.value.cols()),
        }
    }

    /// Gradient flowing into any tape value, if it was reached.
    pub fn for_value(&self, id: ValueId) -> Option<&Tensor2> {
        self.by_value.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Records a forward pass and differentiates it.
pub struct Tape {
    mode: TapeMode,
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new(mode: TapeMode) -> Self {
        Tape { mode, nodes: Vec::new() }
    }

    pub fn mode(&self) -> TapeMode {
        self.mode
    }

    pub fn value(&self, id: ValueId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor2) -> ValueId {
        self.nodes.push(Node { op, value });
        ValueId(self.nodes.len() - 1)
    }

    /// Registers a constant or network input.
    pub fn leaf(&mut self, value: Tensor2) -> ValueId {
        self.push(Op::Leaf { param: None }, value)
    }

    /// Registers a trainable parameter by copying its current value.
    pub fn param(&mut self, p: &Param) -> ValueId {
        self.push(Op::Leaf { param: Some(p.id()) }, p.value.clone())
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul { a, b }, v)
    }

    /// Adds a `1 x n` bias row to every row of `a`.
    pub fn add_row_broadcast(&mut self, a: ValueId, bias: ValueId) -> ValueId {
        let av = self.value(a);
        let bv = self.value(bias);
        assert_eq!(bv.rows(), 1, "bias must be one row");
        assert_eq!(av.cols(), bv.cols(), "bias width mismatch");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c) + bv.get(0, c);
                out.set(r, c, v);
            }
        }
        self.push(Op::AddRowBroadcast { a, bias }, out)
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let v = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu { x }, v)
    }

    pub fn sigmoid(&mut self, x: ValueId) -> ValueId {
        let v = self.value(x).map(sigmoid_scalar);
        self.push(Op::Sigmoid { x }, v)
    }

    pub fn abs(&mut self, x: ValueId) -> ValueId {
        let v = self.value(x).map(f64::abs);
        self.push(Op::Abs { x }, v)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let v = self.value(a).add(self.value(b));
        self.push(Op::Add { a, b }, v)
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let v = self.value(a).sub(self.value(b));
        self.push(Op::Sub { a, b }, v)
    }

    pub fn mul_elem(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let av = self.value(a);
        let bv = self.value(b);
        assert!(av.same_shape(bv), "mul_elem shape mismatch");
        let data: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let v = Tensor2::from_vec(av.rows(), av.cols(), data);
        self.push(Op::MulElem { a, b }, v)
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[ValueId]) -> ValueId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor2::zeros(rows, total);
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
            }
            off += pv.cols();
        }
        self.push(Op::ConcatCols { parts: parts.to_vec() }, out)
    }

    /// `out[e] = x[idx[e]]` for every output row `e`.
    pub fn gather_rows(&mut self, x: ValueId, idx: &[usize]) -> ValueId {
        let xv = self.value(x);
        let mut out = Tensor2::zeros(idx.len(), xv.cols());
        for (e, &i) in idx.iter().enumerate() {
            assert!(i < xv.rows(), "gather index {} out of {} rows", i, xv.rows());
            out.row_mut(e).copy_from_slice(xv.row(i));
        }
        self.push(Op::GatherRows { x, idx: idx.to_vec() }, out)
    }

    /// `out[idx[e]] += x[e]`; `out` has `out_rows` rows.
    pub fn scatter_add_rows(&mut self, x: ValueId, idx: &[usize], out_rows: usize) -> ValueId {
        let xv = self.value(x);
        assert_eq!(xv.rows(), idx.len(), "one index per input row");
        let mut out = Tensor2::zeros(out_rows, xv.cols());
        for (e, &i) in idx.iter().enumerate() {
            assert!(i < out_rows, "scatter index {} out of {} rows", i, out_rows);
            for (o, v) in out.row_mut(i).iter_mut().zip(xv.row(e)) {
                *o += v;
            }
        }
        self.push(Op::ScatterAddRows { x, idx: idx.to_vec() }, out)
    }

    /// Scales row `e` of `a` by the scalar `s[e]`; `s` is a column.
    pub fn mul_rows_by_col(&mut self, a: ValueId, s: ValueId) -> ValueId {
        let av = self.value(a);
        let sv = self.value(s);
        assert_eq!(sv.cols(), 1, "scale factors must form a column");
        assert_eq!(sv.rows(), av.rows(), "one scale per row");
        let mut out = av.clone();
        for r in 0..out.rows() {
            let f = sv.get(r, 0);
            for v in out.row_mut(r) {
                *v *= f;
            }
        }
        self.push(Op::MulRowsByCol { a, s }, out)
    }

    /// Row-wise cosine similarity, as a column.  Rows whose norm product
    /// vanishes get similarity 0 and propagate no gradient.
    pub fn row_cosine(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let av = self.value(a);
        let bv = self.value(b);
        assert!(av.same_shape(bv), "row_cosine shape mismatch");
        let mut out = Tensor2::zeros(av.rows(), 1);
        for r in 0..av.rows() {
            let (ar, br) = (av.row(r), bv.row(r));
            let prod = norm(ar) * norm(br);
            let c = if prod < COSINE_TINY { 0.0 } else { dot(ar, br) / prod };
            out.set(r, 0, c);
        }
        self.push(Op::RowCosine { a, b }, out)
    }

    /// Divides each row by its Euclidean norm.  Errors when a norm is
    /// too small to normalize stably.
    pub fn row_l2_normalize(&mut self, x: ValueId) -> Result<ValueId> {
        let xv = self.value(x);
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let n = norm(out.row(r));
            if n < MIN_NORMALIZE_NORM {
                return Err(Error::NonFinite {
                    name: "row_l2_normalize".to_string(),
                    detail: format!("row {} has norm {:e}", r, n),
                });
            }
            for v in out.row_mut(r) {
                *v /= n;
            }
        }
        Ok(self.push(Op::RowL2Normalize { x }, out))
    }

    /// `X * X^T`; with unit rows this is the cosine similarity matrix.
    pub fn gram(&mut self, x: ValueId) -> ValueId {
        let xv = self.value(x);
        let v = xv.matmul(&xv.transpose());
        self.push(Op::Gram { x }, v)
    }

    pub fn sum_all(&mut self, x: ValueId) -> ValueId {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Op::SumAll { x }, Tensor2::scalar(s))
    }

    /// Multi-similarity loss over a similarity matrix with pre-mined
    /// pairs.  Averages per-anchor terms over the mined anchors; zero
    /// when mining kept nothing.
    pub fn ms_loss(&mut self, sim: ValueId, mined: MinedPairs, cfg: MsLossConfig) -> ValueId {
        let s = self.value(sim);
        assert_eq!(s.rows(), s.cols(), "similarity matrix must be square");
        let mut total = 0.0;
        for ap in &mined.anchors {
            let (pos_term, _) = ms_pos_term(s, ap, cfg);
            let (neg_term, _) = ms_neg_term(s, ap, cfg);
            total += pos_term + neg_term;
        }
        let n = mined.anchors.len();
        let value = if n == 0 { 0.0 } else { total / n as f64 };
        self.push(Op::MsLoss { sim, mined, cfg }, Tensor2::scalar(value))
    }

    /// Class-weighted binary cross-entropy over a probability column.
    /// Probabilities are clamped to `[1e-7, 1 - 1e-7]`; entries outside
    /// the clamp window receive zero gradient.
    pub fn weighted_bce(&mut self, p: ValueId, labels: &[f64], w0: f64, w1: f64) -> ValueId {
        let pv = self.value(p);
        assert_eq!(pv.cols(), 1, "probabilities must form a column");
        assert_eq!(pv.rows(), labels.len(), "one label per probability");
        assert!(!labels.is_empty(), "empty batch");
        let n = labels.len() as f64;
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let q = clamp_prob(pv.get(r, 0));
            total += w1 * y * q.ln() + w0 * (1.0 - y) * (1.0 - q).ln();
        }
        let value = -total / n;
        self.push(
            Op::WeightedBce { p, labels: labels.to_vec(), w0, w1 },
            Tensor2::scalar(value),
        )
    }

    /// Accumulates gradients of a scalar `loss` into every leaf.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients> {
        if self.mode != TapeMode::Train {
            return Err(Error::usage("backward requires a tape in train mode"));
        }
        let lv = self.value(loss);
        if lv.rows() != 1 || lv.cols() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut by_value: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        by_value[loss.0] = Some(Tensor2::scalar(1.0));
        let mut by_param: BTreeMap<usize, Tensor2> = BTreeMap::new();

        for id in (0..=loss.0).rev() {
            let Some(d) = by_value[id].clone() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        by_param
                            .entry(*pid)
                            .and_modify(|g| g.add_assign(&d))
                            .or_insert(d);
                    }
                }
                Op::MatMul { a, b } => {
                    let da = d.matmul(&self.value(*b).transpose());
                    let db = self.value(*a).transpose().matmul(&d);
                    accumulate(&mut by_value, *a, da);
                    accumulate(&mut by_value, *b, db);
                }
                Op::AddRowBroadcast { a, bias } => {
                    let mut db = Tensor2::zeros(1, d.cols());
                    for r in 0..d.rows() {
                        for c in 0..d.cols() {
                            let v = db.get(0, c) + d.get(r, c);
                            db.set(0, c, v);
                        }
                    }
                    accumulate(&mut by_value, *a, d);
                    accumulate(&mut by_value, *bias, db);
                }
                Op::Relu { x } => {
                    let xv = self.value(*x);
                    let mut dx = d;
                    for (g, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    accumulate(&mut by_value, *x, dx);
                }
                Op::Sigmoid { x } => {
                    let out = &node.value;
                    let mut dx = d;
                    for (g, &s) in dx.data_mut().iter_mut().zip(out.data()) {
                        *g *= s * (1.0 - s);
                    }
                    accumulate(&mut by_value, *x, dx);
                }
                Op::Abs { x } => {
                    let xv = self.value(*x);
                    let mut dx = d;
                    for (g, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        *g *= if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                    accumulate(&mut by_value, *x, dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut by_value, *a, d.clone());
                    accumulate(&mut by_value, *b, d);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut by_value, *a, d.clone());
                    accumulate(&mut by_value, *b, d.scale(-1.0));
                }
                Op::MulElem { a, b } => {
                    let da_data: Vec<f64> = d
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(g, v)| g * v)
                        .collect();
                    let db_data: Vec<f64> = d
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(g, v)| g * v)
                        .collect();
                    accumulate(&mut by_value, *a, Tensor2::from_vec(d.rows(), d.cols(), da_data));
                    accumulate(&mut by_value, *b, Tensor2::from_vec(d.rows(), d.cols(), db_data));
                }
                Op::ConcatCols { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut dp = Tensor2::zeros(d.rows(), pc);
                        for r in 0..d.rows() {
                            dp.row_mut(r).copy_from_slice(&d.row(r)[off..off + pc]);
                        }
                        accumulate(&mut by_value, p, dp);
                        off += pc;
                    }
                }
                Op::GatherRows { x, idx } => {
                    let xv = self.value(*x);
                    let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                    for (e, &i) in idx.iter().enumerate() {
                        for (g, v) in dx.row_mut(i).iter_mut().zip(d.row(e)) {
                            *g += v;
                        }
                    }
                    accumulate(&mut by_value, *x, dx);
                }
                Op::ScatterAddRows { x, idx } => {
                    let mut dx = Tensor2::zeros(idx.len(), d.cols());
                    for (e, &i) in idx.iter().enumerate() {
                        dx.row_mut(e).copy_from_slice(d.row(i));
                    }
                    accumulate(&mut by_value, *x, dx);
                }
                Op::MulRowsByCol { a, s } => {
                    let av = self.value(*a);
                    let sv = self.value(*s);
                    let mut da = d.clone();
                    let mut ds = Tensor2::zeros(sv.rows(), 1);
                    for r in 0..d.rows() {
                        let f = sv.get(r, 0);
                        for g in da.row_mut(r) {
                            *g *= f;
                        }
                        ds.set(r, 0, dot(d.row(r), av.row(r)));
                    }
                    accumulate(&mut by_value, *a, da);
                    accumulate(&mut by_value, *s, ds);
                }
                Op::RowCosine { a, b } => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let mut da = Tensor2::zeros(av.rows(), av.cols());
                    let mut db = Tensor2::zeros(bv.rows(), bv.cols());
                    for r in 0..av.rows() {
                        let (ar, br) = (av.row(r), bv.row(r));
                        let (na, nb) = (norm(ar), norm(br));
                        if na * nb < COSINE_TINY {
                            continue;
                        }
                        let c = node.value.get(r, 0);
                        let g = d.get(r, 0);
                        for k in 0..av.cols() {
                            da.row_mut(r)[k] = g * (br[k] / (na * nb) - c * ar[k] / (na * na));
                            db.row_mut(r)[k] = g * (ar[k] / (na * nb) - c * br[k] / (nb * nb));
                        }
                    }
                    accumulate(&mut by_value, *a, da);
                    accumulate(&mut by_value, *b, db);
                }
                Op::RowL2Normalize { x } => {
                    let xv = self.value(*x);
                    let yv = &node.value;
                    let mut dx = Tensor2::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        let n = norm(xv.row(r));
                        let y = yv.row(r);
                        let g = d.row(r);
                        let gy = dot(g, y);
                        for k in 0..xv.cols() {
                            dx.row_mut(r)[k] = (g[k] - y[k] * gy) / n;
                        }
                    }
                    accumulate(&mut by_value, *x, dx);
                }
                Op::Gram { x } => {
                    let xv = self.value(*x);
                    let dsym = d.add(&d.transpose());
                    accumulate(&mut by_value, *x, dsym.matmul(xv));
                }
                Op::SumAll { x } => {
                    let xv = self.value(*x);
                    let g = d.get(0, 0);
                    let dx = Tensor2::from_vec(
                        xv.rows(),
                        xv.cols(),
                        vec![g; xv.rows() * xv.cols()],
                    );
                    accumulate(&mut by_value, *x, dx);
                }
                Op::MsLoss { sim, mined, cfg } => {
                    let s = self.value(*sim);
                    let n = mined.anchors.len();
                    if n == 0 {
                        continue;
                    }
                    let scale = d.get(0, 0) / n as f64;
                    let mut ds = Tensor2::zeros(s.rows(), s.cols());
                    for ap in &mined.anchors {
                        let (_, pos_grads) = ms_pos_term(s, ap, *cfg);
                        let (_, neg_grads) = ms_neg_term(s, ap, *cfg);
                        for (&p, g) in ap.positives.iter().zip(pos_grads) {
                            let v = ds.get(ap.anchor, p) + scale * g;
                            ds.set(ap.anchor, p, v);
                        }
                        for (&q, g) in ap.negatives.iter().zip(neg_grads) {
                            let v = ds.get(ap.anchor, q) + scale * g;
                            ds.set(ap.anchor, q, v);
                        }
                    }
                    accumulate(&mut by_value, *sim, ds);
                }
                Op::WeightedBce { p, labels, w0, w1 } => {
                    let pv = self.value(*p);
                    let n = labels.len() as f64;
                    let scale = d.get(0, 0) / n;
                    let mut dp = Tensor2::zeros(pv.rows(), 1);
                    for (r, &y) in labels.iter().enumerate() {
                        let raw = pv.get(r, 0);
                        if raw < PROB_CLAMP_LO || raw > PROB_CLAMP_HI {
                            continue;
                        }
                        let g = -scale * (w1 * y / raw - w0 * (1.0 - y) / (1.0 - raw));
                        dp.set(r, 0, g);
                    }
                    accumulate(&mut by_value, *p, dp);
                }
            }
        }
        Ok(Gradients { by_param, by_value })
    }
}

/// Lower probability clamp used by the weighted cross-entropy.
pub const PROB_CLAMP_LO: f64 = 1e-7;
/// Upper probability clamp used by the weighted cross-entropy.
pub const PROB_CLAMP_HI: f64 = 1.0 - 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP_LO, PROB_CLAMP_HI)
}

fn accumulate(grads: &mut [Option<Tensor2>], id: ValueId, d: Tensor2) {
    match &mut grads[id.0] {
        Some(g) => g.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Positive branch of one anchor's loss term:
/// `(1/alpha) * ln(1 + sum_p exp(-alpha (S_ap - lambda)))`,
/// stabilized by factoring out the max exponent.  Also returns
/// `d term / d S_ap` for each mined positive.
fn ms_pos_term(s: &Tensor2, ap: &AnchorPairs, cfg: MsLossConfig) -> (f64, Vec<f64>) {
    log1p_exp_sum(
        ap.positives.iter().map(|&p| -cfg.alpha * (s.get(ap.anchor, p) - cfg.lambda)),
        1.0 / cfg.alpha,
        -cfg.alpha,
    )
}

/// Negative branch: `(1/beta) * ln(1 + sum_n exp(beta (S_an - lambda)))`.
fn ms_neg_term(s: &Tensor2, ap: &AnchorPairs, cfg: MsLossConfig) -> (f64, Vec<f64>) {
    log1p_exp_sum(
        ap.negatives.iter().map(|&q| cfg.beta * (s.get(ap.anchor, q) - cfg.lambda)),
        1.0 / cfg.beta,
        cfg.beta,
    )
}

/// `coeff * ln(1 + sum_k exp(x_k))` with gradients
/// `coeff * inner_coeff * exp(x_k) / (1 + sum exp(x_j))` per element.
fn log1p_exp_sum(
    xs: impl Iterator<Item = f64>,
    coeff: f64,
    inner_coeff: f64,
) -> (f64, Vec<f64>) {
    let xs: Vec<f64> = xs.collect();
    if xs.is_empty() {
        return (0.0, Vec::new());
    }
    let m = xs.iter().cloned().fold(0.0_f64, f64::max);
    let denom: f64 = (-m).exp() + xs.iter().map(|x| (x - m).exp()).sum::<f64>();
    let value = coeff * (denom.ln() + m);
    let grads = xs
        .iter()
        .map(|x| coeff * inner_coeff * (x - m).exp() / denom)
        .collect();
    (value, grads)
}
