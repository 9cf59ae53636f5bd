//! Scores a checkpoint on one split of one fold and writes the metric
//! artifact (and optionally appends the fold's row to a summary table).

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args as ClapArgs, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use voxelseg::metrics::{
    aggregate, evaluate_case, fold_csv_row, AggregateReport, MetricReport, FOLD_CSV_HEADER,
};
use voxelseg::model::{load_checkpoint, model_forward};
use voxelseg::{Error, Result};

use crate::commands::{load_assignment, load_split_cases};

/// Threshold for turning class probabilities into masks (membership is
/// strictly above).
const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

#[derive(ClapArgs)]
pub struct Args {
    /// Checkpoint directory written by `train`
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Directory holding one subdirectory per case
    #[arg(long)]
    pub data: PathBuf,
    /// Fold-assignment JSON
    #[arg(long)]
    pub folds: PathBuf,
    /// Fold index to score
    #[arg(long)]
    pub fold: usize,
    /// Which subset of the fold to score
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Where to write the metrics JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Per-fold summary table to append this fold's row to
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalDocument {
    fold: usize,
    split: &'static str,
    threshold: f64,
    cases: Vec<MetricReport>,
    aggregate: AggregateReport,
}

fn append_fold_row(path: &Path, fold: usize, agg: &AggregateReport) -> Result<()> {
    let fresh = !path.exists()
        || std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len() == 0;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(FOLD_CSV_HEADER);
        text.push('\n');
    }
    text.push_str(&fold_csv_row(fold, agg));
    text.push('\n');
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn run(args: &Args) -> Result<()> {
    let params = load_checkpoint(&args.ckpt)?;
    let assignment = load_assignment(&args.folds)?;
    let fold = assignment.fold(args.fold)?;
    let mut ids = match args.split {
        SplitName::Train => fold.train.clone(),
        SplitName::Val => fold.val.clone(),
        SplitName::Test => fold.test.clone(),
    };
    ids.sort_unstable();
    let cases = load_split_cases(&args.data, &ids, params.config.downsample_factor())?;

    let reports: Result<Vec<MetricReport>> = cases
        .par_iter()
        .map(|case| {
            let (probs, _) = model_forward(&params, &case.input_tensor())?;
            evaluate_case(&probs, case, THRESHOLD)
        })
        .collect();
    let reports = reports?;
    let agg = aggregate(&reports);

    let doc = EvalDocument {
        fold: args.fold,
        split: args.split.as_str(),
        threshold: THRESHOLD,
        cases: reports,
        aggregate: agg,
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::format(&args.out, format!("metrics serialization: {e}")))?;
    std::fs::write(&args.out, text + "\n").map_err(|e| Error::io(&args.out, e))?;
    if let Some(csv_path) = &args.csv {
        append_fold_row(csv_path, args.fold, &doc.aggregate)?;
    }
    println!(
        "fold {} {}: {} cases, mean dice wt {:.6} -> {}",
        args.fold,
        doc.split,
        doc.cases.len(),
        doc.aggregate.dice.wt.mean,
        args.out.display()
    );
    Ok(())
}
