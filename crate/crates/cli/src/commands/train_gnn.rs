//! `celltrack train-gnn`: fit the gate and train the edge classifier.

use std::fs;
use std::path::PathBuf;

use celltrack_core::checkpoint::Checkpoint;
use celltrack_core::dml::Embedder;
use celltrack_core::gnn::{prepare_training_graphs, train_gnn, GnnModel};
use celltrack_core::graph::{fit_neighborhood, TrainingSequence};
use celltrack_core::Result;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::{gate_meta, load_training_sequences};
use crate::config::PipelineConfig;
use crate::tables::write_gnn_history;

#[derive(Args, Debug)]
pub struct TrainGnnArgs {
    /// Training dataset directories (ground truth required).
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Trained embedder checkpoint.
    #[arg(long)]
    pub embedder: PathBuf,
    /// Output directory for `tracker.json` and `gnn_loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Fine-tune the embedder end to end as well.
    #[arg(long)]
    pub joint_dml: bool,
}

pub fn run(args: &TrainGnnArgs, cfg: &PipelineConfig) -> Result<()> {
    let mut tcfg = cfg.gnn.train();
    if let Some(v) = args.epochs {
        tcfg.epochs = v;
    }
    if let Some(v) = args.window {
        tcfg.window = v;
        tcfg.stride = v;
    }
    if args.joint_dml {
        tcfg.joint_dml = true;
    }
    if tcfg.epochs == 0 {
        return Err(celltrack_core::Error::config("epochs must be positive"));
    }

    let loaded = load_training_sequences(&args.data)?;
    let sequences: Vec<TrainingSequence> = loaded
        .iter()
        .map(|(instances, gt)| TrainingSequence { instances, gt })
        .collect();
    let fit = fit_neighborhood(&sequences, cfg.gate_alpha)?;
    if !fit.movement_measured {
        eprintln!(
            "warning: no frame-to-frame movement observed; the gate falls back to bbox extents"
        );
    }
    let graphs = prepare_training_graphs(&sequences, &fit.rule, tcfg.window, tcfg.stride)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.unwrap_or(cfg.seed));
    let mut embedder = Embedder::from_checkpoint(&Checkpoint::load(&args.embedder)?, &mut rng)?;
    let st_width = graphs[0].v_st.cols();
    let mut model = GnnModel::new(cfg.gnn.arch(st_width), &mut rng)?;
    let history = train_gnn(&mut model, &mut embedder, &graphs, &tcfg)?;

    fs::create_dir_all(&args.out)?;
    model
        .to_checkpoint(gate_meta(&fit.rule))?
        .save(&args.out.join("tracker.json"))?;
    write_gnn_history(&args.out.join("gnn_loss.csv"), &history)?;
    if tcfg.joint_dml {
        embedder.to_checkpoint()?.save(&args.out.join("embedder.json"))?;
    }

    let last = history.last().expect("epochs > 0");
    println!(
        "trained tracker on {} graphs: final loss {:.4}, edge precision {:.3}, recall {:.3}",
        graphs.len(),
        last.mean_loss,
        last.precision,
        last.recall
    );
    Ok(())
}
