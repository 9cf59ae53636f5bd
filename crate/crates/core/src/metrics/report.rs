//! Per-case metric reports and their aggregation.
//!
//! Metrics that are undefined for a particular case (distances or ratios
//! over an empty mask) are recorded as missing rather than aborting the
//! batch, and aggregation excludes them while counting the exclusions.

use serde::{Deserialize, Serialize};

use crate::data::cases::Case;
use crate::error::{Error, Result};
use crate::metrics::hausdorff::hausdorff_pair;
use crate::metrics::overlap::{confusion, dice, sensitivity, specificity};
use crate::tensor::Tensor;

/// One value per evaluation class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTriple<T> {
    pub wt: T,
    pub tc: T,
    pub et: T,
}

impl<T: Copy> ClassTriple<T> {
    pub fn as_array(&self) -> [T; 3] {
        [self.wt, self.tc, self.et]
    }

    fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        ClassTriple { wt: f(0), tc: f(1), et: f(2) }
    }
}

/// All metrics for one case. Distances and ratios are `None` where the
/// underlying masks make them undefined; Dice is always defined (two empty
/// masks count as perfect agreement).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub case_id: String,
    pub dice: ClassTriple<f64>,
    pub hd: ClassTriple<Option<f64>>,
    pub hd95: ClassTriple<Option<f64>>,
    pub sensitivity: ClassTriple<Option<f64>>,
    pub specificity: ClassTriple<Option<f64>>,
}

/// Thresholds class probabilities `[1, 3, D, H, W]` into three binary masks.
/// Membership is strict: a voxel exactly at the threshold stays outside.
pub fn binarize(probs: &Tensor<f32>, threshold: f64) -> Result<[Tensor<u8>; 3]> {
    let shape = probs.shape();
    if shape.len() != 5 || shape[0] != 1 || shape[1] != 3 {
        return Err(Error::Shape(format!(
            "expected probabilities [1, 3, D, H, W], got {shape:?}"
        )));
    }
    let extents = [shape[2], shape[3], shape[4]];
    let voxels: usize = extents.iter().product();
    let mut masks = Vec::with_capacity(3);
    for c in 0..3 {
        let slice = &probs.data()[c * voxels..(c + 1) * voxels];
        let data: Vec<u8> = slice.iter().map(|&p| u8::from(f64::from(p) > threshold)).collect();
        masks.push(Tensor::from_vec(&extents, data)?);
    }
    Ok(masks.try_into().expect("three masks"))
}

/// Scores one case: binarize each class channel, then compute every metric
/// against the case's nested reference masks.
pub fn evaluate_case(probs: &Tensor<f32>, case: &Case, threshold: f64) -> Result<MetricReport> {
    let pred = binarize(probs, threshold)?;
    if pred[0].shape() != case.extents() {
        return Err(Error::Shape(format!(
            "probability extents {:?} differ from case extents {:?}",
            pred[0].shape(),
            case.extents()
        )));
    }
    let truth = case.masks();

    let mut dice_v = [0.0; 3];
    let mut hd_v = [None; 3];
    let mut hd95_v = [None; 3];
    let mut sens_v = [None; 3];
    let mut spec_v = [None; 3];
    for c in 0..3 {
        dice_v[c] = dice(&pred[c], &truth[c])?;
        if let Ok((hd, hd95)) = hausdorff_pair(&pred[c], &truth[c]) {
            hd_v[c] = Some(hd);
            hd95_v[c] = Some(hd95);
        }
        let counts = confusion(&pred[c], &truth[c])?;
        sens_v[c] = sensitivity(&counts).ok();
        spec_v[c] = specificity(&counts).ok();
    }
    Ok(MetricReport {
        case_id: case.case_id.clone(),
        dice: ClassTriple::from_fn(|c| dice_v[c]),
        hd: ClassTriple::from_fn(|c| hd_v[c]),
        hd95: ClassTriple::from_fn(|c| hd95_v[c]),
        sensitivity: ClassTriple::from_fn(|c| sens_v[c]),
        specificity: ClassTriple::from_fn(|c| spec_v[c]),
    })
}

/// Mean and sample standard deviation of one metric across cases, with the
/// number of cases that had no defined value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub excluded: usize,
}

fn aggregate_values(values: &[Option<f64>]) -> Aggregate {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let n = present.len();
    let excluded = values.len() - n;
    if n == 0 {
        return Aggregate { mean: f64::NAN, sd: f64::NAN, n, excluded };
    }
    let mean = present.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Aggregate { mean, sd, n, excluded }
}

/// Summary over a set of per-case reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub cases: usize,
    pub dice: ClassTriple<Aggregate>,
    pub hd: ClassTriple<Aggregate>,
    pub hd95: ClassTriple<Aggregate>,
    pub sensitivity: ClassTriple<Aggregate>,
    pub specificity: ClassTriple<Aggregate>,
}

pub fn aggregate(reports: &[MetricReport]) -> AggregateReport {
    let collect = |pick: &dyn Fn(&MetricReport) -> ClassTriple<Option<f64>>| {
        ClassTriple::from_fn(|c| {
            let column: Vec<Option<f64>> =
                reports.iter().map(|r| pick(r).as_array()[c]).collect();
            aggregate_values(&column)
        })
    };
    AggregateReport {
        cases: reports.len(),
        dice: collect(&|r| ClassTriple::from_fn(|c| Some(r.dice.as_array()[c]))),
        hd: collect(&|r| r.hd),
        hd95: collect(&|r| r.hd95),
        sensitivity: collect(&|r| r.sensitivity),
        specificity: collect(&|r| r.specificity),
    }
}

/// Header of the per-fold summary table consumed by the comparison command.
pub const FOLD_CSV_HEADER: &str = "fold,dice_wt,dice_tc,dice_et,hd_wt,hd_tc,hd_et,sens_wt,sens_tc,sens_et,spec_wt,spec_tc,spec_et";

/// One fold-summary row: mean HD95 stands in for the distance column, and
/// every value is fixed to six decimals so identical runs emit identical
/// bytes.
pub fn fold_csv_row(fold: usize, agg: &AggregateReport) -> String {
    let cells: Vec<String> = [agg.dice, agg.hd95, agg.sensitivity, agg.specificity]
        .iter()
        .flat_map(|metric| metric.as_array())
        .map(|a| format!("{:.6}", a.mean))
        .collect();
    format!("{fold},{}", cells.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs_from_masks(masks: &[Tensor<u8>; 3], inside: f32, outside: f32) -> Tensor<f32> {
        let e = masks[0].shape();
        let mut data = Vec::with_capacity(3 * masks[0].numel());
        for m in masks {
            data.extend(m.data().iter().map(|&v| if v == 1 { inside } else { outside }));
        }
        Tensor::from_vec(&[1, 3, e[0], e[1], e[2]], data).unwrap()
    }

    fn tiny_case() -> Case {
        let mut labels = Tensor::full(&[4, 4, 4], 0u8);
        labels.set(&[1, 1, 1], 2);
        labels.set(&[1, 1, 2], 1);
        labels.set(&[1, 2, 1], 4);
        let modalities = core::array::from_fn(|_| Tensor::full(&[4, 4, 4], 1.0f32));
        Case::new("t".into(), modalities, labels).unwrap()
    }

    #[test]
    fn perfect_prediction_scores_perfectly() {
        let case = tiny_case();
        let probs = probs_from_masks(&case.masks(), 0.9, 0.1);
        let r = evaluate_case(&probs, &case, 0.5).unwrap();
        for c in 0..3 {
            assert_eq!(r.dice.as_array()[c], 1.0);
            assert_eq!(r.hd.as_array()[c], Some(0.0));
            assert_eq!(r.sensitivity.as_array()[c], Some(1.0));
        }
    }

    #[test]
    fn threshold_is_strict_and_empty_predictions_yield_sentinels() {
        let case = tiny_case();
        let below = probs_from_masks(&case.masks(), 0.5, 0.5);
        let r = evaluate_case(&below, &case, 0.5).unwrap();
        for c in 0..3 {
            assert_eq!(r.dice.as_array()[c], 0.0, "empty prediction vs nonempty truth");
            assert_eq!(r.hd.as_array()[c], None, "distance undefined, recorded as missing");
            assert_eq!(r.sensitivity.as_array()[c], Some(0.0));
        }
    }

    #[test]
    fn aggregation_matches_hand_arithmetic_and_counts_exclusions() {
        let mk = |id: &str, d: f64, hd: Option<f64>| MetricReport {
            case_id: id.into(),
            dice: ClassTriple { wt: d, tc: d, et: d },
            hd: ClassTriple { wt: hd, tc: hd, et: hd },
            hd95: ClassTriple { wt: hd, tc: hd, et: hd },
            sensitivity: ClassTriple { wt: Some(d), tc: Some(d), et: Some(d) },
            specificity: ClassTriple { wt: Some(d), tc: Some(d), et: Some(d) },
        };
        let reports =
            vec![mk("a", 0.8, Some(2.0)), mk("b", 0.6, None), mk("c", 1.0, Some(4.0))];
        let agg = aggregate(&reports);
        assert_eq!(agg.cases, 3);
        let dice_wt = agg.dice.wt;
        assert!((dice_wt.mean - 0.8).abs() < 1e-15);
        // sample SD of {0.8, 0.6, 1.0} is 0.2
        assert!((dice_wt.sd - 0.2).abs() < 1e-12);
        assert_eq!(dice_wt.excluded, 0);
        let hd_wt = agg.hd.wt;
        assert_eq!(hd_wt.n, 2);
        assert_eq!(hd_wt.excluded, 1);
        assert!((hd_wt.mean - 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_row_follows_the_pinned_column_order() {
        assert!(FOLD_CSV_HEADER.starts_with("fold,dice_wt"));
        assert!(FOLD_CSV_HEADER.ends_with("spec_et"));
        assert_eq!(FOLD_CSV_HEADER.split(',').count(), 13);
        let case = tiny_case();
        let probs = probs_from_masks(&case.masks(), 0.9, 0.1);
        let r = evaluate_case(&probs, &case, 0.5).unwrap();
        let row = fold_csv_row(2, &aggregate(&[r]));
        assert!(row.starts_with("2,1.000000,"));
        assert_eq!(row.split(',').count(), 13);
    }

    #[test]
    fn report_serializes_with_metric_major_keys() {
        let case = tiny_case();
        let probs = probs_from_masks(&case.masks(), 0.9, 0.1);
        let r = evaluate_case(&probs, &case, 0.5).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["case_id"], "t");
        assert_eq!(json["dice"]["wt"], 1.0);
        assert_eq!(json["hd95"]["et"], 0.0);
        assert!(json["sensitivity"]["tc"].is_number());
    }
}
