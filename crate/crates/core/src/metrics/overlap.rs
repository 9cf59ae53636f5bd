//! Voxel-overlap metrics: Dice coefficient and the confusion-count ratios.
//!
//! All counting is exact integer arithmetic over binary masks; ratios are
//! formed once at the end. Empty-denominator cases are errors here and
//! become sentinels at the report level.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Exact voxel counts of a binary prediction against a binary reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

fn check_binary_pair(pred: &Tensor<u8>, truth: &Tensor<u8>) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "mask extents differ: {:?} vs {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    for (name, t) in [("prediction", pred), ("truth", truth)] {
        if let Some(&v) = t.data().iter().find(|&&v| v > 1) {
            return Err(Error::Validation(format!(
                "{name} mask must be binary, found value {v}"
            )));
        }
    }
    Ok(())
}

/// Dice coefficient 2|X∩Y| / (|X|+|Y|); two empty masks agree perfectly and
/// score 1.0 (the ratio itself is 0/0 there).
pub fn dice(pred: &Tensor<u8>, truth: &Tensor<u8>) -> Result<f64> {
    check_binary_pair(pred, truth)?;
    let mut x = 0u64;
    let mut y = 0u64;
    let mut both = 0u64;
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        x += u64::from(p);
        y += u64::from(t);
        both += u64::from(p & t);
    }
    if x + y == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (x + y) as f64)
}

pub fn confusion(pred: &Tensor<u8>, truth: &Tensor<u8>) -> Result<ConfusionCounts> {
    check_binary_pair(pred, truth)?;
    let mut c = ConfusionCounts { true_pos: 0, false_pos: 0, true_neg: 0, false_neg: 0 };
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (1, 1) => c.true_pos += 1,
            (1, 0) => c.false_pos += 1,
            (0, 0) => c.true_neg += 1,
            _ => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// TP / (TP + FN): the fraction of reference-positive voxels recovered.
pub fn sensitivity(c: &ConfusionCounts) -> Result<f64> {
    let denom = c.true_pos + c.false_neg;
    if denom == 0 {
        return Err(Error::Numeric("sensitivity undefined: no positives in ground truth".into()));
    }
    Ok(c.true_pos as f64 / denom as f64)
}

/// TN / (TN + FP): the fraction of reference-negative voxels left alone.
pub fn specificity(c: &ConfusionCounts) -> Result<f64> {
    let denom = c.true_neg + c.false_pos;
    if denom == 0 {
        return Err(Error::Numeric("specificity undefined: no negatives in ground truth".into()));
    }
    Ok(c.true_neg as f64 / denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(values: &[u8]) -> Tensor<u8> {
        Tensor::from_vec(&[1, 1, values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn identical_nonempty_masks_score_one() {
        let m = mask(&[1, 0, 1, 1]);
        assert_eq!(dice(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_nonempty_masks_score_zero() {
        assert_eq!(dice(&mask(&[1, 1, 0, 0]), &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn dice_matches_the_defining_ratio() {
        // |X|=4, |Y|=6, |X∩Y|=3 → 2·3/10
        let pred = mask(&[1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
        let truth = mask(&[1, 1, 1, 0, 1, 1, 1, 0, 0, 0]);
        assert_eq!(dice(&pred, &truth).unwrap(), 0.6);
    }

    #[test]
    fn both_empty_masks_agree_perfectly() {
        let empty = mask(&[0, 0, 0]);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn non_binary_and_mismatched_inputs_are_rejected() {
        assert!(dice(&mask(&[2, 0]), &mask(&[1, 0])).is_err());
        assert!(dice(&mask(&[1, 0]), &mask(&[1, 0, 0])).is_err());
    }

    #[test]
    fn confusion_counts_partition_the_volume() {
        let pred = mask(&[1, 1, 0, 0, 1]);
        let truth = mask(&[1, 0, 1, 0, 1]);
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(c, ConfusionCounts { true_pos: 2, false_pos: 1, true_neg: 1, false_neg: 1 });
        assert_eq!(c.total(), 5);
    }

    #[test]
    fn sensitivity_follows_its_ratio_and_complement() {
        let c = ConfusionCounts { true_pos: 8, false_neg: 2, false_pos: 0, true_neg: 0 };
        assert_eq!(sensitivity(&c).unwrap(), 0.8);
        // TP/(TP+FN) + FN/(TP+FN) == 1 exactly on integer counts
        let miss = c.false_neg as f64 / (c.true_pos + c.false_neg) as f64;
        assert_eq!(sensitivity(&c).unwrap() + miss, 1.0);
    }

    #[test]
    fn all_positive_prediction_has_full_sensitivity() {
        let pred = mask(&[1, 1, 1, 1]);
        let truth = mask(&[0, 1, 0, 1]);
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(sensitivity(&c).unwrap(), 1.0);
        assert_eq!(specificity(&c).unwrap(), 0.0);
    }

    #[test]
    fn empty_denominators_are_reported_as_undefined() {
        let c = confusion(&mask(&[0, 0]), &mask(&[0, 0])).unwrap();
        assert!(sensitivity(&c).is_err());
        let c = confusion(&mask(&[1, 1]), &mask(&[1, 1])).unwrap();
        assert!(specificity(&c).is_err());
    }

    #[test]
    fn counts_match_a_per_voxel_tally_on_pseudo_random_masks() {
        let mut s = 5u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 62) & 1) as u8
        };
        let pred_v: Vec<u8> = (0..512).map(|_| next()).collect();
        let truth_v: Vec<u8> = (0..512).map(|_| next()).collect();
        let pred = Tensor::from_vec(&[8, 8, 8], pred_v.clone()).unwrap();
        let truth = Tensor::from_vec(&[8, 8, 8], truth_v.clone()).unwrap();
        let c = confusion(&pred, &truth).unwrap();
        let mut tally = [0usize; 4];
        for (p, t) in pred_v.iter().zip(&truth_v) {
            tally[(p * 2 + t) as usize] += 1;
        }
        assert_eq!(
            (c.true_neg, c.false_neg, c.false_pos, c.true_pos),
            (tally[0], tally[1], tally[2], tally[3])
        );
    }
}
