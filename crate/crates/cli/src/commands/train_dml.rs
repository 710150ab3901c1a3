//! `celltrack train-dml`: learn the instance embedding.

use std::fs;
use std::path::PathBuf;

use celltrack_core::dml::{retrieval_metrics, train_dml, DmlDataset, Embedder};
use celltrack_core::Result;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::{load_training_sequences, pooled_dml_instances};
use crate::config::PipelineConfig;
use crate::tables::write_dml_history;

#[derive(Args, Debug)]
pub struct TrainDmlArgs {
    /// Training dataset directories (ground truth required).
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Output directory for `embedder.json` and `dml_loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

pub fn run(args: &TrainDmlArgs, cfg: &PipelineConfig) -> Result<()> {
    let mut dcfg = cfg.dml.to_config();
    if let Some(s) = args.steps {
        dcfg.steps = s;
    }
    if dcfg.steps == 0 {
        return Err(celltrack_core::Error::config("steps must be positive"));
    }
    let sequences = load_training_sequences(&args.data)?;
    let pooled = pooled_dml_instances(&sequences);
    let dataset = DmlDataset::from_instances(&pooled)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.unwrap_or(cfg.seed));
    let mut embedder = Embedder::new(&mut rng)?;
    let history = train_dml(&mut embedder, &dataset, &dcfg, &mut rng)?;

    fs::create_dir_all(&args.out)?;
    embedder.to_checkpoint()?.save(&args.out.join("embedder.json"))?;
    write_dml_history(&args.out.join("dml_loss.csv"), &history)?;

    let metrics = retrieval_metrics(&embedder.embed(&dataset.descriptors)?, &dataset.labels)?;
    let last = history.last().expect("steps > 0");
    println!(
        "trained embedder on {} instances: final loss {:.4}, hard pairs {}, P@1 {:.3}, RP {:.3}, MAP@R {:.3}",
        dataset.num_instances(),
        last.loss,
        last.hard_pairs,
        metrics.p_at_1,
        metrics.r_precision,
        metrics.map_at_r
    );
    Ok(())
}
