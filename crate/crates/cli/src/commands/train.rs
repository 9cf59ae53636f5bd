//! One fold of training: cases in, checkpoint directory and history out.

use std::path::PathBuf;

use clap::Args as ClapArgs;
use voxelseg::model::save_checkpoint;
use voxelseg::train::{train, TrainSample};
use voxelseg::{Error, Result};

use crate::commands::{load_assignment, load_split_cases, resolve_path};
use crate::config::RunConfig;

#[derive(ClapArgs)]
pub struct Args {
    /// Run-configuration JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Fold index to train on
    #[arg(long)]
    pub fold: usize,
    /// Checkpoint directory to write (created if absent)
    #[arg(long)]
    pub out: PathBuf,
    /// Case directory, overriding the config file
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fold-assignment JSON, overriding the config file
    #[arg(long)]
    pub folds: Option<PathBuf>,
    /// Seed override applied to both initialization and shuffling
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &Args) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.model.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    let data = resolve_path("--data", &args.data, &cfg.paths.data)?;
    let folds_path = resolve_path("--folds", &args.folds, &cfg.paths.folds)?;
    let assignment = load_assignment(&folds_path)?;
    let fold = assignment.fold(args.fold)?;

    let divisor = cfg.model.downsample_factor();
    let train_cases = load_split_cases(&data, &fold.train, divisor)?;
    let val_cases = load_split_cases(&data, &fold.val, divisor)?;
    let train_set: Vec<TrainSample> = train_cases.iter().map(TrainSample::from_case).collect();
    let val_set: Vec<TrainSample> = val_cases.iter().map(TrainSample::from_case).collect();

    let outcome = train(&cfg.model, &cfg.train, &train_set, &val_set)?;
    save_checkpoint(&args.out, &outcome.params)?;
    let history_path = args.out.join("history.csv");
    std::fs::write(&history_path, outcome.history.to_csv())
        .map_err(|e| Error::io(&history_path, e))?;
    println!(
        "fold {}: {} train / {} val cases, best epoch {} at mean val dice {:.6} -> {}",
        args.fold,
        train_set.len(),
        val_set.len(),
        outcome.best_epoch,
        outcome.best_val_dice,
        args.out.display()
    );
    Ok(())
}
