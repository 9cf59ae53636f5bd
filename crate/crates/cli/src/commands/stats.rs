//! Paired comparison of two per-fold metric tables, column by column.

use std::path::{Path, PathBuf};

use clap::Args as ClapArgs;
use serde::Serialize;
use voxelseg::metrics::FOLD_CSV_HEADER;
use voxelseg::stats::{cohens_d_interpret, paired_t_test};
use voxelseg::{Error, Result};

#[derive(ClapArgs)]
pub struct Args {
    /// First fold table; the report describes a − b
    #[arg(long)]
    pub a: PathBuf,
    /// Second fold table
    #[arg(long)]
    pub b: PathBuf,
    /// Where to write the comparison JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ColumnComparison {
    metric: String,
    n: usize,
    mean_diff: f64,
    sd_diff: f64,
    t: f64,
    p: f64,
    cohens_d: f64,
    interpretation: String,
}

#[derive(Serialize)]
struct ComparisonReport {
    a: String,
    b: String,
    folds: usize,
    comparisons: Vec<ColumnComparison>,
}

/// Reads a fold table into its twelve metric columns. The header must match
/// the pinned column order exactly; the fold index column is ignored.
fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let expected: Vec<&str> = FOLD_CSV_HEADER.split(',').collect();
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(
            path,
            format!("header must be exactly `{FOLD_CSV_HEADER}`"),
        ));
    }
    let mut columns = vec![Vec::new(); expected.len() - 1];
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if record.len() != expected.len() {
            return Err(Error::format(
                path,
                format!("row has {} cells, expected {}", record.len(), expected.len()),
            ));
        }
        for (c, cell) in record.iter().skip(1).enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::format(path, format!("cell `{cell}` in column {} is not a number", expected[c + 1]))
            })?;
            columns[c].push(value);
        }
    }
    Ok(columns)
}

pub fn run(args: &Args) -> Result<()> {
    let a_cols = read_table(&args.a)?;
    let b_cols = read_table(&args.b)?;
    if a_cols[0].len() != b_cols[0].len() {
        return Err(Error::Validation(format!(
            "tables pair by fold, but {} has {} rows and {} has {}",
            args.a.display(),
            a_cols[0].len(),
            args.b.display(),
            b_cols[0].len()
        )));
    }
    let names: Vec<&str> = FOLD_CSV_HEADER.split(',').skip(1).collect();
    let mut comparisons = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let r = paired_t_test(&a_cols[i], &b_cols[i])?;
        comparisons.push(ColumnComparison {
            metric: (*name).to_string(),
            n: r.n,
            mean_diff: r.mean_diff,
            sd_diff: r.sd_diff,
            t: r.t,
            p: r.p,
            cohens_d: r.cohens_d,
            interpretation: cohens_d_interpret(r.cohens_d).to_string(),
        });
    }
    let report = ComparisonReport {
        a: args.a.display().to_string(),
        b: args.b.display().to_string(),
        folds: a_cols[0].len(),
        comparisons,
    };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::format(&args.out, format!("report serialization: {e}")))?;
    std::fs::write(&args.out, text + "\n").map_err(|e| Error::io(&args.out, e))?;
    println!(
        "compared {} folds across {} columns -> {}",
        report.folds,
        report.comparisons.len(),
        args.out.display()
    );
    Ok(())
}
