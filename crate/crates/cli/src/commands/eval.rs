//! `celltrack eval`: score a predicted lineage against ground truth.

use std::fs;
use std::path::PathBuf;

use celltrack_core::metrics::evaluate_forests;
use celltrack_core::{Error, Result};
use clap::Args;

use crate::tables::{metrics_json, read_forest};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted track table (`*tracks.txt`; its instance table must
    /// sit next to it).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth track table.
    #[arg(long)]
    pub gt: PathBuf,
    /// Metrics JSON output file; printed to stdout regardless.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &EvalArgs) -> Result<()> {
    for (what, path) in [("prediction", &args.pred), ("ground truth", &args.gt)] {
        if !path.exists() {
            return Err(Error::config(format!(
                "{} track table {} does not exist",
                what,
                path.display()
            )));
        }
    }
    let pred = read_forest(&args.pred)?;
    let gt = read_forest(&args.gt)?;
    let report = evaluate_forests(&pred, &gt)?;
    let json = metrics_json(&report)?;
    if let Some(out) = &args.out {
        fs::write(out, &json)?;
    }
    print!("{}", json);
    Ok(())
}
