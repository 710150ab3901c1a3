//! `celltrack gradcheck`: the full finite-difference suite over the
//! production models.  Exits nonzero when any parameter disagrees with
//! central differences.

use std::time::Instant;

use celltrack_core::gradsuite::full_suite;
use celltrack_core::Result;
use clap::Args;

use crate::config::PipelineConfig;

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &GradcheckArgs, cfg: &PipelineConfig) -> Result<i32> {
    let start = Instant::now();
    let reports = full_suite(args.seed.unwrap_or(cfg.seed))?;
    let mut all_pass = true;
    for (name, report) in &reports {
        println!("{}", report.summary(name));
        all_pass &= report.pass();
    }
    println!("gradcheck finished in {:.1}s", start.elapsed().as_secs_f64());
    Ok(if all_pass { 0 } else { 1 })
}
