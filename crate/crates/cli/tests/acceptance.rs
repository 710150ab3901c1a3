//! Acceptance gate: one test per release criterion, each printing a
//! single PASS line (run with `--nocapture` to see them).  A violation
//! panics with a FAIL line carrying the measured values.
//!
//! Thresholds here are regression baselines for this synthetic
//! benchmark, fixed by the seeds below.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use celltrack_cli::dataset::read_dataset;
use celltrack_core::dml::{
    affinity, hard_pair_count, mine_hard_pairs, retrieval_metrics, train_dml, DmlConfig,
    DmlDataset, Embedder,
};
use celltrack_core::features::{extract_instances, CellInstance, DESCRIPTOR_LEN};
use celltrack_core::gnn::{GnnConfig, GnnModel, GraphInputs};
use celltrack_core::gradsuite::full_suite;
use celltrack_core::graph::{
    build_graph, ds_vector, fit_neighborhood, CandidateGraph, TrainingSequence,
};
use celltrack_core::infer::{build_tracks, detect_mitosis, resolve_edges};
use celltrack_core::lineage::LineageForest;
use celltrack_core::metrics::{association_accuracy, evaluate_forests};
use celltrack_core::synth::{desk_preset, generate_sequence, nearest_centroid_baseline};
use celltrack_core::tape::{MsLossConfig, Tape, TapeMode};
use celltrack_core::tensor::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(ok: bool, name: &str, detail: String) {
    if ok {
        println!("PASS {}: {}", name, detail);
    } else {
        panic!("FAIL {}: {}", name, detail);
    }
}

#[test]
fn gradient_suite() {
    let start = Instant::now();
    let reports = full_suite(7).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut checked = 0;
    for (label, report) in &reports {
        checked += report.checked;
        assert!(
            report.pass(),
            "FAIL gradient-suite: {}",
            report.summary(label)
        );
    }
    check(
        elapsed < 120.0,
        "gradient-suite",
        format!(
            "{} suites, {} parameter entries, worst |analytic - numeric| {:.3e}, {:.1}s",
            reports.len(),
            checked,
            reports
                .iter()
                .map(|(_, r)| r.max_abs_diff)
                .fold(0.0f64, f64::max),
            elapsed
        ),
    );
}

/// Row-major matrix of plain numbers for the scalar re-implementation.
fn linear(x: &[f64], w: &Tensor2, b: &Tensor2) -> Vec<f64> {
    assert_eq!(x.len(), w.rows());
    (0..w.cols())
        .map(|j| {
            let mut s = b.get(0, j);
            for i in 0..x.len() {
                s += x[i] * w.get(i, j);
            }
            s
        })
        .collect()
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let prod = na * nb;
    if prod < 1e-24 {
        0.0
    } else {
        dot / prod
    }
}

fn ds_scalar(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    out.push(cosine(a, b));
    out
}

#[test]
fn equation_oracles() {
    // Two frame-1 nodes feeding one frame-2 node through edges
    // (0 -> 2) and (1 -> 2); a single message-passing block.
    let cfg = GnnConfig {
        d_v: 4,
        d_e: 5,
        blocks: 1,
        classifier_hidden: (3, 2),
        st_width: 3,
        dml_dim: 6,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let model = GnnModel::new(cfg, &mut rng).unwrap();
    let rand_mat = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor2::from_vec(rows, cols, data)
    };
    let v_dml = rand_mat(&mut rng, 3, cfg.dml_dim);
    let v_st = rand_mat(&mut rng, 3, cfg.st_width);
    let src = vec![0usize, 1];
    let dst = vec![2usize, 2];
    let (probs, logits) = model
        .forward_plain(&GraphInputs {
            v_dml: v_dml.clone(),
            v_st: v_st.clone(),
            src: src.clone(),
            dst: dst.clone(),
        })
        .unwrap();

    let params: std::collections::BTreeMap<String, &Tensor2> = model
        .params()
        .into_iter()
        .map(|p| (p.name().to_string(), &p.value))
        .collect();
    let p = |name: &str| params[name];

    // Node homogenizer on [v_dml | v_st].
    let mut x: Vec<Vec<f64>> = Vec::new();
    for r in 0..3 {
        let mut row = v_dml.row(r).to_vec();
        row.extend_from_slice(v_st.row(r));
        x.push(linear(&row, p("node_homogenizer.0.weight"), p("node_homogenizer.0.bias")));
    }
    // Initial edge features from the distance-and-similarity vectors.
    let z0: Vec<Vec<f64>> = (0..2)
        .map(|e| {
            let ds = ds_scalar(&x[src[e]], &x[dst[e]]);
            linear(&ds, p("edge_homogenizer.0.weight"), p("edge_homogenizer.0.bias"))
        })
        .collect();
    // Attention weights from edge features, one scalar per edge.
    let w_edge: Vec<f64> = z0
        .iter()
        .map(|z| {
            let h = relu(linear(z, p("block0.edge.0.weight"), p("block0.edge.0.bias")));
            sigmoid_scalar(linear(&h, p("block0.edge.1.weight"), p("block0.edge.1.bias"))[0])
        })
        .collect();
    // Node update: mapped self plus attention-weighted mapped sources.
    let mapped: Vec<Vec<f64>> = x
        .iter()
        .map(|row| linear(row, p("block0.node.0.weight"), p("block0.node.0.bias")))
        .collect();
    let mut x1 = mapped.clone();
    for e in 0..2 {
        for d in 0..cfg.d_v {
            x1[dst[e]][d] += w_edge[e] * mapped[src[e]][d];
        }
    }
    // Edge refresh and classification.
    let mut max_err = 0.0f64;
    for e in 0..2 {
        let mut cat = z0[e].clone();
        cat.extend_from_slice(&x1[src[e]]);
        cat.extend_from_slice(&x1[dst[e]]);
        cat.extend(ds_scalar(&x1[src[e]], &x1[dst[e]]));
        let h = relu(linear(&cat, p("block0.ee.0.weight"), p("block0.ee.0.bias")));
        let z1 = linear(&h, p("block0.ee.1.weight"), p("block0.ee.1.bias"));
        let c1 = relu(linear(&z1, p("classifier.0.weight"), p("classifier.0.bias")));
        let c2 = relu(linear(&c1, p("classifier.1.weight"), p("classifier.1.bias")));
        let logit = linear(&c2, p("classifier.2.weight"), p("classifier.2.bias"))[0];
        max_err = max_err.max((logit - logits.get(e, 0)).abs());
        max_err = max_err.max((sigmoid_scalar(logit) - probs.get(e, 0)).abs());
    }
    assert!(
        max_err < 1e-10,
        "FAIL equation-oracles: hand-unrolled forward differs by {:.3e}",
        max_err
    );

    // ds_vector against its closed form on random pairs, including
    // degenerate zero vectors.
    let mut ds_err = 0.0f64;
    for trial in 0..1000 {
        let dim = rng.gen_range(2..10usize);
        let mut a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if trial % 97 == 0 {
            a = vec![0.0; dim];
        }
        let got = ds_vector(&a, &b);
        let want = ds_scalar(&a, &b);
        assert_eq!(got.len(), dim + 1);
        for (g, w) in got.iter().zip(&want) {
            ds_err = ds_err.max((g - w).abs());
        }
    }
    assert!(ds_err < 1e-12, "FAIL equation-oracles: ds_vector off by {:.3e}", ds_err);
    check(
        true,
        "equation-oracles",
        format!(
            "hand-unrolled single-block forward within {:.3e}, ds_vector within {:.3e} over 1000 pairs",
            max_err, ds_err
        ),
    );
}

/// Two cells per frame, fully connected between consecutive frames.
fn chain_inputs(
    rng: &mut ChaCha8Rng,
    frames: usize,
    dml_dim: usize,
    st_width: usize,
) -> GraphInputs {
    let per = 2usize;
    let n = frames * per;
    let rand_mat = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor2::from_vec(rows, cols, data)
    };
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for f in 0..frames - 1 {
        for a in 0..per {
            for b in 0..per {
                src.push(f * per + a);
                dst.push((f + 1) * per + b);
            }
        }
    }
    GraphInputs {
        v_dml: rand_mat(rng, n, dml_dim),
        v_st: rand_mat(rng, n, st_width),
        src,
        dst,
    }
}

#[test]
fn message_passing_locality() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut summary = Vec::new();
    for blocks in 1..=3usize {
        let cfg = GnnConfig {
            d_v: 4,
            d_e: 6,
            blocks,
            classifier_hidden: (4, 3),
            st_width: 3,
            dml_dim: 5,
        };
        let model = GnnModel::new(cfg, &mut rng).unwrap();
        let frames = blocks + 3;
        let inputs = chain_inputs(&mut rng, frames, cfg.dml_dim, cfg.st_width);
        // Measured edge: first edge of the last transition; its source
        // sits in frame index `frames - 2`.
        let edge = inputs.src.len() - 4;
        let source_frame = frames - 2;
        let base = model.forward_plain(&inputs).unwrap().1.get(edge, 0);

        let perturbed_logit = |rng: &mut ChaCha8Rng, frame: usize| -> f64 {
            let mut v_dml = inputs.v_dml.clone();
            let mut v_st = inputs.v_st.clone();
            for node in frame * 2..frame * 2 + 2 {
                for v in v_dml.row_mut(node) {
                    *v += rng.gen_range(-0.5..0.5);
                }
                for v in v_st.row_mut(node) {
                    *v += rng.gen_range(-0.5..0.5);
                }
            }
            model
                .forward_plain(&GraphInputs {
                    v_dml,
                    v_st,
                    src: inputs.src.clone(),
                    dst: inputs.dst.clone(),
                })
                .unwrap()
                .1
                .get(edge, 0)
        };

        let mut changed = 0;
        let mut max_leak = 0.0f64;
        for _ in 0..100 {
            let in_reach = perturbed_logit(&mut rng, source_frame - blocks);
            if (in_reach - base).abs() > 1e-9 {
                changed += 1;
            }
            let out_of_reach = perturbed_logit(&mut rng, source_frame - blocks - 1);
            max_leak = max_leak.max((out_of_reach - base).abs());
        }
        assert!(
            max_leak <= 1e-9,
            "FAIL mp-locality: L={} leaks {:.3e} from {} frames upstream",
            blocks,
            max_leak,
            blocks + 1
        );
        assert!(
            changed >= 95,
            "FAIL mp-locality: L={} perturbation {} frames upstream moved the logit in only {}/100 trials",
            blocks,
            blocks,
            changed
        );
        summary.push(format!("L={} reach {}/100 leak {:.1e}", blocks, changed, max_leak));
    }
    check(true, "mp-locality", summary.join(", "));
}

fn bare_instance(frame: usize, label: u32, r: f64, c: f64) -> CellInstance {
    CellInstance {
        frame,
        label,
        centroid: vec![r, c],
        bbox_min: vec![r - 1.0, c - 1.0],
        bbox_max: vec![r + 1.0, c + 1.0],
        area: 4.0,
        intensity_min: 0.1,
        intensity_max: 0.9,
        intensity_mean: 0.5,
        intensity_std: 0.1,
        axes: Some((2.0, 2.0)),
        descriptor: vec![0.5; DESCRIPTOR_LEN],
        gt_cell: None,
    }
}

#[test]
fn inference_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut total_edges = 0usize;
    for trial in 0..1000 {
        let frames = rng.gen_range(2..6usize);
        let counts: Vec<usize> = (0..frames).map(|_| rng.gen_range(1..6usize)).collect();
        let mut instances = Vec::new();
        let mut index_of_frame_start = vec![0usize];
        for (f, &k) in counts.iter().enumerate() {
            for label in 1..=k as u32 {
                instances.push(bare_instance(
                    f + 1,
                    label,
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                ));
            }
            index_of_frame_start.push(instances.len());
        }
        let mut edges = Vec::new();
        for f in 0..frames - 1 {
            for a in index_of_frame_start[f]..index_of_frame_start[f + 1] {
                for b in index_of_frame_start[f + 1]..index_of_frame_start[f + 2] {
                    if rng.gen_bool(0.5) {
                        edges.push((a, b));
                    }
                }
            }
        }
        if edges.is_empty() {
            edges.push((0, index_of_frame_start[1]));
        }
        let probs: Vec<f64> = (0..edges.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let active = resolve_edges(&probs, &edges);

        let n = instances.len();
        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        for &e in &active {
            assert!(probs[e] > 0.5, "trial {}: inactive probability kept", trial);
            out_deg[edges[e].0] += 1;
            in_deg[edges[e].1] += 1;
        }
        assert!(
            out_deg.iter().all(|&d| d <= 2),
            "FAIL inference-invariants: trial {} keeps more than two outgoing edges",
            trial
        );
        assert!(
            in_deg.iter().all(|&d| d <= 1),
            "FAIL inference-invariants: trial {} keeps more than one incoming edge",
            trial
        );

        let graph = CandidateGraph { instances: instances.clone(), edges };
        let forest = build_tracks(&graph, &active).unwrap();
        let mut covered = BTreeSet::new();
        for t in &forest.tracks {
            assert_eq!(t.nodes.first().unwrap().0, t.t_init);
            assert_eq!(t.nodes.last().unwrap().0, t.t_fin);
            for (i, key) in t.nodes.iter().enumerate() {
                assert_eq!(
                    key.0,
                    t.t_init + i,
                    "FAIL inference-invariants: trial {} track {} has a frame gap",
                    trial,
                    t.cell
                );
                assert!(
                    covered.insert(*key),
                    "FAIL inference-invariants: trial {} assigns {:?} twice",
                    trial,
                    key
                );
            }
        }
        let universe: BTreeSet<(usize, u32)> =
            instances.iter().map(|i| (i.frame, i.label)).collect();
        assert_eq!(
            covered, universe,
            "FAIL inference-invariants: trial {} dropped instances",
            trial
        );
        total_edges += active.len();
    }
    check(
        true,
        "inference-invariants",
        format!("1000 random graphs, {} active edges, all degree and partition checks hold", total_edges),
    );
}

struct Cli {
    bin: PathBuf,
}

impl Cli {
    fn new() -> Self {
        Cli { bin: PathBuf::from(env!("CARGO_BIN_EXE_celltrack")) }
    }

    fn run(&self, args: &[&str]) {
        let out = Command::new(&self.bin).args(args).output().expect("binary runs");
        assert!(
            out.status.success(),
            "celltrack {:?} failed:\n{}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

fn metrics_values(path: &Path) -> (f64, f64) {
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    (v["aa"].as_f64().unwrap(), v["te"].as_f64().unwrap())
}

/// Nearest-centroid matching scored like any other prediction: links
/// wrapped into tracks so AA and TE come from the same evaluator.
fn baseline_scores(dir: &Path) -> (f64, f64) {
    let data = read_dataset(dir).unwrap();
    let gt = data.gt.expect("held-out dataset keeps its ground truth");
    let mut instances = Vec::new();
    for f in &data.frames {
        instances.extend(extract_instances(f));
    }
    instances.sort_by_key(|i| (i.frame, i.label));
    let links = nearest_centroid_baseline(&instances);
    let aa = association_accuracy(&links, &gt.links()).unwrap();
    let index: std::collections::BTreeMap<(usize, u32), usize> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| ((inst.frame, inst.label), i))
        .collect();
    let edges: Vec<(usize, usize)> = links.iter().map(|(a, b)| (index[a], index[b])).collect();
    let graph = CandidateGraph { instances, edges };
    let active: Vec<usize> = (0..graph.num_edges()).collect();
    let forest = build_tracks(&graph, &active).unwrap();
    let report = evaluate_forests(&forest, &gt).unwrap();
    (aa, report.te)
}

// Observed with the seeds below: desk AA 0.9773 / 0.9769 and
// TE 0.9504 / 0.9065; high-motion model AA 0.9590 TE 0.8497 against
// baseline AA 0.8050 TE 0.6189; about 3 minutes end to end.
#[test]
fn end_to_end_benchmark() {
    let start = Instant::now();
    let cli = Cli::new();
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let arg = |p: PathBuf| p.to_str().unwrap().to_string();

    // Desk preset: five training sequences, two held out.
    let mut train_dirs = Vec::new();
    for (i, seed) in [100u64, 101, 102, 103, 104].iter().enumerate() {
        let out = arg(path(&format!("train{}", i)));
        cli.run(&["synth", "--out", &out, "--preset", "desk", "--seed", &seed.to_string()]);
        train_dirs.push(out);
    }
    for (name, seed) in [("held0", 200u64), ("held1", 201)] {
        cli.run(&["synth", "--out", &arg(path(name)), "--preset", "desk", "--seed", &seed.to_string()]);
    }
    let model = arg(path("model"));
    let mut dml_args = vec!["train-dml", "--data"];
    dml_args.extend(train_dirs.iter().map(String::as_str));
    let model_dir = model.clone();
    dml_args.extend(["--out", &model_dir, "--seed", "7"]);
    cli.run(&dml_args);
    let embedder = arg(path("model/embedder.json"));
    let tracker = arg(path("model/tracker.json"));
    let mut gnn_args = vec!["train-gnn", "--data"];
    gnn_args.extend(train_dirs.iter().map(String::as_str));
    gnn_args.extend(["--embedder", &embedder, "--out", &model_dir, "--seed", "7", "--epochs", "100"]);
    cli.run(&gnn_args);

    let mut desk_scores = Vec::new();
    for name in ["held0", "held1"] {
        let run = arg(path(&format!("run_{}", name)));
        let metrics = path(&format!("run_{}/metrics.json", name));
        cli.run(&["infer", "--data", &arg(path(name)), "--embedder", &embedder, "--tracker", &tracker, "--out", &run]);
        cli.run(&[
            "eval",
            "--pred",
            &arg(path(&format!("run_{}/tracks.txt", name))),
            "--gt",
            &arg(path(name).join("gt_tracks.txt")),
            "--out",
            metrics.to_str().unwrap(),
        ]);
        desk_scores.push(metrics_values(&metrics));
    }
    for (i, (aa, te)) in desk_scores.iter().enumerate() {
        assert!(
            *aa >= 0.95 && *te >= 0.90,
            "FAIL e2e-benchmark: held-out {} scored AA {:.4} TE {:.4} (need 0.95 / 0.90)",
            i,
            aa,
            te
        );
    }

    // High-motion preset: the same pipeline trained on its own
    // sequences must beat nearest-centroid matching, which degrades
    // badly at this step size.
    let mut hm_train = Vec::new();
    for (i, seed) in [300u64, 301, 302].iter().enumerate() {
        let out = arg(path(&format!("hm_train{}", i)));
        cli.run(&["synth", "--out", &out, "--preset", "high-motion", "--seed", &seed.to_string()]);
        hm_train.push(out);
    }
    cli.run(&["synth", "--out", &arg(path("hm_held")), "--preset", "high-motion", "--seed", "400"]);
    let hm_model = arg(path("hm_model"));
    let mut hm_dml = vec!["train-dml", "--data"];
    hm_dml.extend(hm_train.iter().map(String::as_str));
    hm_dml.extend(["--out", &hm_model, "--seed", "7"]);
    cli.run(&hm_dml);
    let hm_embedder = arg(path("hm_model/embedder.json"));
    let hm_tracker = arg(path("hm_model/tracker.json"));
    let mut hm_gnn = vec!["train-gnn", "--data"];
    hm_gnn.extend(hm_train.iter().map(String::as_str));
    hm_gnn.extend(["--embedder", &hm_embedder, "--out", &hm_model, "--seed", "7", "--epochs", "60"]);
    cli.run(&hm_gnn);
    cli.run(&["infer", "--data", &arg(path("hm_held")), "--embedder", &hm_embedder, "--tracker", &hm_tracker, "--out", &arg(path("hm_run"))]);
    cli.run(&[
        "eval",
        "--pred",
        &arg(path("hm_run/tracks.txt")),
        "--gt",
        &arg(path("hm_held/gt_tracks.txt")),
        "--out",
        path("hm_run/metrics.json").to_str().unwrap(),
    ]);
    let (hm_aa, hm_te) = metrics_values(&path("hm_run/metrics.json"));
    let (base_aa, base_te) = baseline_scores(&path("hm_held"));
    assert!(
        base_aa < 0.85,
        "FAIL e2e-benchmark: baseline AA {:.4} is not below 0.85; the preset is too gentle",
        base_aa
    );
    assert!(
        hm_aa > base_aa && hm_te > base_te,
        "FAIL e2e-benchmark: model AA {:.4} TE {:.4} does not beat baseline AA {:.4} TE {:.4}",
        hm_aa,
        hm_te,
        base_aa,
        base_te
    );

    let elapsed = start.elapsed().as_secs_f64();
    check(
        elapsed < 900.0,
        "e2e-benchmark",
        format!(
            "desk AA {:.4}/{:.4} TE {:.4}/{:.4}; high-motion model AA {:.4} TE {:.4} vs baseline AA {:.4} TE {:.4}; {:.0}s",
            desk_scores[0].0,
            desk_scores[1].0,
            desk_scores[0].1,
            desk_scores[1].1,
            hm_aa,
            hm_te,
            base_aa,
            base_te,
            elapsed
        ),
    );
}

fn clustered_instance(frame: usize, class: u32, descriptor: Vec<f64>) -> CellInstance {
    CellInstance {
        frame,
        label: class,
        centroid: vec![0.0, 0.0],
        bbox_min: vec![0.0, 0.0],
        bbox_max: vec![1.0, 1.0],
        area: 1.0,
        intensity_min: 0.0,
        intensity_max: 1.0,
        intensity_mean: 0.5,
        intensity_std: 0.1,
        axes: None,
        descriptor,
        gt_cell: Some(class),
    }
}

/// Twelve classes, fourteen instances each, tightly clustered around
/// random centers: separable by construction.
fn separable_dataset(seed: u64) -> DmlDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::new();
    for class in 1..=12u32 {
        let center: Vec<f64> = (0..DESCRIPTOR_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for frame in 1..=14usize {
            let row: Vec<f64> = center.iter().map(|&c| c + rng.gen_range(-0.02..0.02)).collect();
            instances.push(clustered_instance(frame, class, row));
        }
    }
    DmlDataset::from_instances(&instances).unwrap()
}

#[test]
fn dml_suite() {
    // Loss oracle first: the taped multi-similarity loss against a
    // direct evaluation of its formula on mined pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ms = MsLossConfig { alpha: 2.0, beta: 50.0, lambda: 0.5 };
    let mut oracle_err = 0.0f64;
    for _ in 0..20 {
        let n = 24usize;
        let labels: Vec<u32> = (0..n).map(|i| (i / 6) as u32 + 1).collect();
        let mut emb = Tensor2::zeros(n, 8);
        for r in 0..n {
            let row: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (c, v) in row.iter().enumerate() {
                emb.set(r, c, v / norm);
            }
        }
        let sim = affinity(&emb);
        let mined = mine_hard_pairs(&sim, &labels, 0.1);
        if mined.is_empty() {
            continue;
        }
        let mut expected = 0.0;
        for ap in &mined.anchors {
            let pos: f64 = ap
                .positives
                .iter()
                .map(|&p| (-ms.alpha * (sim.get(ap.anchor, p) - ms.lambda)).exp())
                .sum();
            let neg: f64 = ap
                .negatives
                .iter()
                .map(|&q| (ms.beta * (sim.get(ap.anchor, q) - ms.lambda)).exp())
                .sum();
            expected += (1.0 + pos).ln() / ms.alpha + (1.0 + neg).ln() / ms.beta;
        }
        expected /= mined.anchors.len() as f64;

        let mut tape = Tape::new(TapeMode::Eval);
        let sim_id = tape.leaf(sim);
        let loss = tape.ms_loss(sim_id, mined, ms);
        oracle_err = oracle_err.max((tape.value(loss).get(0, 0) - expected).abs());
    }
    assert!(oracle_err < 1e-10, "FAIL dml-suite: loss oracle differs by {:.3e}", oracle_err);

    // Training on separable descriptors must clear the hard pairs and
    // make nearest-neighbor retrieval nearly perfect.
    let dataset = separable_dataset(3);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut embedder = Embedder::new(&mut rng).unwrap();
    let cfg = DmlConfig { steps: 1500, ..DmlConfig::default() };
    let history = train_dml(&mut embedder, &dataset, &cfg, &mut rng).unwrap();
    let tail_max = history[1400..].iter().map(|s| s.hard_pairs).max().unwrap();
    assert_eq!(tail_max, 0, "FAIL dml-suite: hard pairs persist at the end of training");

    let embeddings = embedder.embed(&dataset.descriptors).unwrap();
    let after = retrieval_metrics(&embeddings, &dataset.labels).unwrap();
    let residual = hard_pair_count(&mine_hard_pairs(&affinity(&embeddings), &dataset.labels, 0.1));
    assert!(
        after.p_at_1 >= 0.9 && residual == 0,
        "FAIL dml-suite: P@1 {:.4}, residual hard pairs {}",
        after.p_at_1,
        residual
    );
    check(
        true,
        "dml-suite",
        format!(
            "loss oracle within {:.3e}; P@1 {:.4}, RP {:.4}, MAP@R {:.4}, residual hard pairs 0",
            oracle_err, after.p_at_1, after.r_precision, after.map_at_r
        ),
    );
}

#[test]
fn mitosis_recovery() {
    let mut total_divisions = 0usize;
    for seed in 0..6u64 {
        let mut cfg = desk_preset(seed);
        cfg.division_prob = 0.035;
        let data = generate_sequence(&cfg).unwrap();
        let divisions = data.gt.children().values().filter(|c| c.len() == 2).count();
        assert!(
            divisions >= 3,
            "FAIL mitosis: seed {} produced only {} divisions",
            seed,
            divisions
        );
        let mut instances = Vec::new();
        for f in &data.frames {
            instances.extend(extract_instances(f));
        }
        let seqs = [TrainingSequence { instances: &instances, gt: &data.gt }];
        let fit = fit_neighborhood(&seqs, 2.0).unwrap();
        let graph = build_graph(&instances, &fit.rule).unwrap();

        let stripped = LineageForest::new(
            data.gt
                .tracks
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    t.parent = 0;
                    t
                })
                .collect(),
        );
        let recovered = detect_mitosis(&stripped, &graph, &fit.rule).unwrap();
        for (got, want) in recovered.tracks.iter().zip(&data.gt.tracks) {
            assert_eq!(
                got.parent, want.parent,
                "FAIL mitosis: seed {} track {} recovered parent {} instead of {}",
                seed, want.cell, got.parent, want.parent
            );
        }
        total_divisions += divisions;
    }
    check(
        true,
        "mitosis",
        format!("6 sequences, {} divisions, every parent assignment recovered", total_divisions),
    );
}

#[test]
fn determinism() {
    let cli = Cli::new();
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> PathBuf {
        let root = dir.path().join(tag);
        let arg = |p: &str| root.join(p).to_str().unwrap().to_string();
        cli.run(&["synth", "--out", &arg("data"), "--preset", "desk", "--seed", "500"]);
        cli.run(&["train-dml", "--data", &arg("data"), "--out", &arg("model"), "--seed", "7", "--steps", "150"]);
        cli.run(&["train-gnn", "--data", &arg("data"), "--embedder", &arg("model/embedder.json"), "--out", &arg("model"), "--seed", "7", "--epochs", "12"]);
        cli.run(&["infer", "--data", &arg("data"), "--embedder", &arg("model/embedder.json"), "--tracker", &arg("model/tracker.json"), "--out", &arg("run")]);
        cli.run(&["eval", "--pred", &arg("run/tracks.txt"), "--gt", &arg("data/gt_tracks.txt"), "--out", &arg("run/metrics.json")]);
        root
    };
    let a = run("a");
    let b = run("b");
    let mut compared = Vec::new();
    for file in ["run/tracks.txt", "run/instances.csv", "run/metrics.json"] {
        let x = std::fs::read(a.join(file)).unwrap();
        let y = std::fs::read(b.join(file)).unwrap();
        assert!(
            x == y,
            "FAIL determinism: {} differs between identical runs ({} vs {} bytes)",
            file,
            x.len(),
            y.len()
        );
        compared.push(format!("{} ({} bytes)", file, x.len()));
    }
    check(
        true,
        "determinism",
        format!("byte-identical across two runs: {}", compared.join(", ")),
    );
}
