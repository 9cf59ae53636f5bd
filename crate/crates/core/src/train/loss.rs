//! Multi-label soft Dice loss with its analytic gradient.
//!
//! Per class c (summing predictions p and binary targets t over batch and
//! voxels): score_c = (2·Σpt + ε)/(Σp + Σt + ε), and the loss is
//! 1 − mean_c(score_c). The ε in both numerator and denominator keeps the
//! loss finite and the gradient smooth when a class is absent from a batch,
//! and makes perfect agreement score exactly zero loss.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Returns the scalar loss and its gradient with respect to `pred`.
///
/// `pred` holds class probabilities `[N, C, ...]`, `target` binary values of
/// the same shape. Accumulation runs in f64 regardless of the tensor
/// element type so f32 training and f64 gradient verification share one
/// code path.
pub fn soft_dice_loss<E: Scalar>(
    pred: &Tensor<E>,
    target: &Tensor<E>,
    epsilon: f64,
) -> Result<(f64, Tensor<E>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction shape {:?} differs from target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.shape().len() < 2 {
        return Err(Error::Shape(format!(
            "expected [N, C, ...] tensors, got {:?}",
            pred.shape()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Validation(format!("smooth term {epsilon} must be positive")));
    }
    let n = pred.shape()[0];
    let classes = pred.shape()[1];
    let spatial: usize = pred.shape()[2..].iter().product();
    if let Some(bad) = target.data().iter().find(|v| {
        let f = v.to_f64_lossy();
        f != 0.0 && f != 1.0
    }) {
        return Err(Error::Validation(format!(
            "target must be binary, found {}",
            bad.to_f64_lossy()
        )));
    }

    // per-class sums across the whole batch
    let mut inter = vec![0.0f64; classes];
    let mut p_sum = vec![0.0f64; classes];
    let mut t_sum = vec![0.0f64; classes];
    let pd = pred.data();
    let td = target.data();
    for b in 0..n {
        for c in 0..classes {
            let base = (b * classes + c) * spatial;
            for i in base..base + spatial {
                let p = pd[i].to_f64_lossy();
                let t = td[i].to_f64_lossy();
                inter[c] += p * t;
                p_sum[c] += p;
                t_sum[c] += t;
            }
        }
    }

    let mut loss = 1.0;
    let mut num = vec![0.0f64; classes]; // 2·Σpt + ε
    let mut den = vec![0.0f64; classes]; // Σp + Σt + ε
    for c in 0..classes {
        num[c] = 2.0 * inter[c] + epsilon;
        den[c] = p_sum[c] + t_sum[c] + epsilon;
        loss -= num[c] / den[c] / classes as f64;
    }

    // d(loss)/dp = −(1/C)·(2t·den − num)/den², from the quotient rule with
    // den depending on p through Σp
    let mut grad = pred.zeros_like();
    let gd = grad.data_mut();
    for b in 0..n {
        for c in 0..classes {
            let base = (b * classes + c) * spatial;
            let den_sq = den[c] * den[c];
            for i in base..base + spatial {
                let t = td[i].to_f64_lossy();
                let g = -(2.0 * t * den[c] - num[c]) / den_sq / classes as f64;
                gd[i] = E::from_f64_lossy(g);
            }
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(s: &mut u64) -> f64 {
        *s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*s >> 33) as f64 / (1u64 << 31) as f64
    }

    #[test]
    fn perfect_binary_agreement_has_zero_loss() {
        let t = Tensor::from_vec(&[1, 3, 4], vec![0.0f64, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let (loss, _) = soft_dice_loss(&t, &t, 1.0).unwrap();
        assert!(loss.abs() < 1e-15, "got {loss}");
    }

    #[test]
    fn complete_disagreement_approaches_the_maximum() {
        // pred = 1 − target on a half-filled mask: zero intersection, so each
        // class score collapses to ε/(Σp+Σt+ε)
        let target: Vec<f64> = (0..32).map(|i| f64::from(i % 2 == 0)).collect();
        let pred: Vec<f64> = target.iter().map(|t| 1.0 - t).collect();
        let t = Tensor::from_vec(&[1, 1, 32], target).unwrap();
        let p = Tensor::from_vec(&[1, 1, 32], pred).unwrap();
        let (loss, _) = soft_dice_loss(&p, &t, 1.0).unwrap();
        // score = 1/(16+16+1)
        assert!((loss - (1.0 - 1.0 / 33.0)).abs() < 1e-15, "got {loss}");
    }

    #[test]
    fn loss_stays_in_the_unit_interval_for_probabilities() {
        let mut s = 3u64;
        for round in 0..10 {
            let p: Vec<f64> = (0..48).map(|_| lcg(&mut s)).collect();
            let t: Vec<f64> = (0..48).map(|_| f64::from(lcg(&mut s) > 0.5)).collect();
            let p = Tensor::from_vec(&[2, 3, 8], p).unwrap();
            let t = Tensor::from_vec(&[2, 3, 8], t).unwrap();
            let (loss, _) = soft_dice_loss(&p, &t, 1.0).unwrap();
            assert!((0.0..1.0).contains(&loss), "round {round}: {loss}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut s = 17u64;
        let p: Vec<f64> = (0..24).map(|_| 0.05 + 0.9 * lcg(&mut s)).collect();
        let t: Vec<f64> = (0..24).map(|_| f64::from(lcg(&mut s) > 0.5)).collect();
        let pred = Tensor::from_vec(&[2, 3, 4], p.clone()).unwrap();
        let target = Tensor::from_vec(&[2, 3, 4], t).unwrap();
        let (_, grad) = soft_dice_loss(&pred, &target, 1.0).unwrap();
        let h = 1e-4;
        for i in 0..24 {
            let eval = |delta: f64| {
                let mut bumped = p.clone();
                bumped[i] += delta;
                let pb = Tensor::from_vec(&[2, 3, 4], bumped).unwrap();
                soft_dice_loss(&pb, &target, 1.0).unwrap().0
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = grad.data()[i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                ((analytic - numeric) / denom).abs() < 1e-6,
                "coord {i}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn rejects_bad_shapes_targets_and_epsilon() {
        let p = Tensor::full(&[1, 3, 4], 0.5f64);
        let t = Tensor::full(&[1, 3, 5], 1.0f64);
        assert!(soft_dice_loss(&p, &t, 1.0).is_err());
        let t = Tensor::full(&[1, 3, 4], 0.5f64);
        assert!(soft_dice_loss(&p, &t, 1.0).is_err(), "non-binary target");
        let t = Tensor::full(&[1, 3, 4], 1.0f64);
        assert!(soft_dice_loss(&p, &t, 0.0).is_err(), "epsilon must be positive");
    }
}
