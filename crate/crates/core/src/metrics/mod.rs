//! Segmentation quality metrics with brute-force-verifiable implementations.

pub mod hausdorff;
pub mod overlap;
pub mod report;

pub use hausdorff::{
    directed_sq_distances, directed_sq_distances_brute, hausdorff, hausdorff95, hausdorff_pair,
    squared_distance_field,
};
pub use overlap::{confusion, dice, sensitivity, specificity, ConfusionCounts};
pub use report::{
    aggregate, binarize, evaluate_case, fold_csv_row, Aggregate, AggregateReport, ClassTriple,
    MetricReport, FOLD_CSV_HEADER,
};
