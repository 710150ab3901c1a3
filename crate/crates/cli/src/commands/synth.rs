//! `celltrack synth`: generate a synthetic dataset directory.

use std::path::PathBuf;

use celltrack_core::synth::generate_sequence;
use celltrack_core::Result;
use clap::Args;

use crate::config::{preset, PipelineConfig};
use crate::dataset::write_dataset;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene preset: `desk` or `high-motion`.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Cells present in the first frame.
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub division_prob: Option<f64>,
    /// Random-walk step deviation in pixels per frame.
    #[arg(long)]
    pub step_sigma: Option<f64>,
    #[arg(long)]
    pub drift_max: Option<f64>,
}

pub fn run(args: &SynthArgs, cfg: &PipelineConfig) -> Result<()> {
    let seed = args.seed.unwrap_or(cfg.seed);
    let mut scfg = preset(&args.preset, seed)?;
    cfg.synth.apply(&mut scfg);
    if let Some(v) = args.frames {
        scfg.frames = v;
    }
    if let Some(v) = args.cells {
        scfg.initial_cells = v;
    }
    if let Some(v) = args.division_prob {
        scfg.division_prob = v;
    }
    if let Some(v) = args.step_sigma {
        scfg.step_sigma = v;
    }
    if let Some(v) = args.drift_max {
        scfg.drift_max = v;
    }
    let data = generate_sequence(&scfg)?;
    for w in &data.warnings {
        eprintln!("warning: {}", w);
    }
    write_dataset(&args.out, &data)?;
    println!(
        "wrote {} frames, {} ground-truth tracks to {}",
        data.frames.len(),
        data.gt.tracks.len(),
        args.out.display()
    );
    Ok(())
}
