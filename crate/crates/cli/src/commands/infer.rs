//! `celltrack infer`: track one sequence with trained checkpoints.

use std::fs;
use std::path::PathBuf;

use celltrack_core::checkpoint::Checkpoint;
use celltrack_core::dml::Embedder;
use celltrack_core::features::extract_instances;
use celltrack_core::gnn::{GnnModel, GraphInputs, TrainGraph};
use celltrack_core::infer::infer_lineage;
use celltrack_core::Result;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::gate_from_meta;
use crate::config::PipelineConfig;
use crate::dataset::read_dataset;
use crate::overlay::{render_overlay, save_overlay};
use crate::tables::{write_detections, write_embeddings, write_forest};

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Dataset directory to track.
    #[arg(long)]
    pub data: PathBuf,
    /// Trained embedder checkpoint.
    #[arg(long)]
    pub embedder: PathBuf,
    /// Trained tracker checkpoint.
    #[arg(long)]
    pub tracker: PathBuf,
    /// Output directory for tracks, instances, detections, embeddings.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a trajectory overlay PNG of the last frame.
    #[arg(long)]
    pub overlay: bool,
}

pub fn run(args: &InferArgs, cfg: &PipelineConfig) -> Result<()> {
    let ds = read_dataset(&args.data)?;
    let mut instances = Vec::new();
    for frame in &ds.frames {
        instances.extend(extract_instances(frame));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let embedder = Embedder::from_checkpoint(&Checkpoint::load(&args.embedder)?, &mut rng)?;
    let tracker_ckpt = Checkpoint::load(&args.tracker)?;
    let model = GnnModel::from_checkpoint(&tracker_ckpt, &mut rng)?;
    let rule = gate_from_meta(&tracker_ckpt)?;

    let tg = TrainGraph::prepare(&instances, &rule, None)?;
    let embeddings = embedder.embed(&tg.descriptors)?;
    let (probs, _) = model.forward_plain(&GraphInputs {
        v_dml: embeddings.clone(),
        v_st: tg.v_st.clone(),
        src: tg.graph.source_indices(),
        dst: tg.graph.target_indices(),
    })?;
    let probs: Vec<f64> = probs.data().to_vec();
    let forest = infer_lineage(&tg.graph, &probs, &rule)?;

    fs::create_dir_all(&args.out)?;
    write_forest(&args.out.join("tracks.txt"), &forest)?;
    write_detections(&args.out.join("detections.csv"), &tg.graph.instances)?;
    write_embeddings(&args.out.join("embeddings.csv"), &tg.graph.instances, &embeddings)?;
    if args.overlay {
        let img = render_overlay(&ds.frames, &tg.graph.instances, &forest)?;
        save_overlay(&args.out.join("overlay.png"), &img)?;
    }

    let divisions = forest.tracks.iter().filter(|t| t.parent != 0).count();
    println!(
        "tracked {} instances into {} tracks ({} daughter tracks) in {}",
        tg.graph.num_nodes(),
        forest.tracks.len(),
        divisions,
        args.out.display()
    );
    Ok(())
}
