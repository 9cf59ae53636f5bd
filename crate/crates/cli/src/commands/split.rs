//! Stratified fold assignment for a directory of cases.

use std::path::PathBuf;

use clap::Args as ClapArgs;
use voxelseg::data::{list_case_dirs, load_case};
use voxelseg::stats::{case_stats, kfold_split, stratify};
use voxelseg::{Error, Result};

#[derive(ClapArgs)]
pub struct Args {
    /// Directory holding one subdirectory per case
    #[arg(long)]
    pub data: PathBuf,
    /// Shuffle seed recorded inside the assignment
    #[arg(long)]
    pub seed: u64,
    /// Where to write the fold-assignment JSON
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &Args) -> Result<()> {
    let dirs = list_case_dirs(&args.data)?;
    let mut stats = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        stats.push(case_stats(&load_case(dir)?));
    }
    let strata = stratify(&stats)?;
    let assignment = kfold_split(&stats, &strata, args.seed)?;
    let text = serde_json::to_string_pretty(&assignment)
        .map_err(|e| Error::format(&args.out, format!("assignment serialization: {e}")))?;
    std::fs::write(&args.out, text + "\n").map_err(|e| Error::io(&args.out, e))?;
    println!(
        "assigned {} cases across {} folds -> {}",
        stats.len(),
        assignment.folds.len(),
        args.out.display()
    );
    Ok(())
}
