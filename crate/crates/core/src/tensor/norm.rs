//! Group normalization over [N, C, D, H, W] tensors.
//!
//! Statistics (mean and biased variance) are taken per sample over each group
//! of adjacent channels and all voxels; the affine scale and shift are per
//! channel. The forward pass returns a cache of per-(sample, group) moments so
//! the backward pass can recompute normalized values without storing them.

use super::{dims5, Scalar, Tensor};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Per-(sample, group) moments saved by the forward pass.
#[derive(Clone, Debug)]
pub struct GroupNormCache<E> {
    pub mean: Vec<E>,
    pub inv_std: Vec<E>,
    pub groups: usize,
}

fn check_args<E: Scalar>(
    input: &Tensor<E>,
    gamma: &Tensor<E>,
    beta: &Tensor<E>,
    groups: usize,
    eps: f64,
) -> Result<[usize; 5]> {
    let dims = dims5("group_norm input", input.shape())?;
    let c = dims[1];
    if groups == 0 || c % groups != 0 {
        return Err(Error::Validation(format!(
            "group_norm: {c} channels not divisible into {groups} groups"
        )));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::Shape(format!(
            "group_norm: gamma {:?} / beta {:?} must both be [{c}]",
            gamma.shape(),
            beta.shape()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Validation(format!("group_norm: eps must be positive, got {eps}")));
    }
    Ok(dims)
}

/// y = gamma_c * (x - mean_g) / sqrt(var_g + eps) + beta_c
pub fn group_norm<E: Scalar>(
    input: &Tensor<E>,
    gamma: &Tensor<E>,
    beta: &Tensor<E>,
    groups: usize,
    eps: f64,
) -> Result<(Tensor<E>, GroupNormCache<E>)> {
    let [n, c, d, h, w] = check_args(input, gamma, beta, groups, eps)?;
    let spatial = d * h * w;
    let cpg = c / groups;
    let group_len = cpg * spatial;
    let eps_e = E::from_f64_lossy(eps);

    let mut out = Tensor::zeros(input.shape());
    let mut mean = vec![E::zero(); n * groups];
    let mut inv_std = vec![E::zero(); n * groups];
    let x = input.data();
    out.data_mut()
        .par_chunks_mut(group_len)
        .zip(mean.par_iter_mut())
        .zip(inv_std.par_iter_mut())
        .enumerate()
        .for_each(|(ng, ((y, mu_out), is_out))| {
            let g = ng % groups;
            let xs = &x[ng * group_len..(ng + 1) * group_len];
            let m = E::from_f64_lossy(group_len as f64);
            let mut sum = E::zero();
            for &v in xs {
                sum += v;
            }
            let mu = sum / m;
            let mut sq = E::zero();
            for &v in xs {
                let dv = v - mu;
                sq += dv * dv;
            }
            let var = sq / m;
            let is = E::one() / (var + eps_e).sqrt();
            *mu_out = mu;
            *is_out = is;
            for (cc, chunk) in y.chunks_mut(spatial).enumerate() {
                let ch = g * cpg + cc;
                let (ga, be) = (gamma.data()[ch], beta.data()[ch]);
                for (dst, &v) in chunk.iter_mut().zip(&xs[cc * spatial..(cc + 1) * spatial]) {
                    *dst = ga * (v - mu) * is + be;
                }
            }
        });
    Ok((out, GroupNormCache { mean, inv_std, groups }))
}

/// Adjoints of [`group_norm`]: (grad_input, grad_gamma, grad_beta).
///
/// With xhat the normalized value and dxhat = grad_y * gamma_c, each group of
/// m elements contributes
///   grad_x = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)).
pub fn group_norm_backward<E: Scalar>(
    grad_out: &Tensor<E>,
    input: &Tensor<E>,
    gamma: &Tensor<E>,
    cache: &GroupNormCache<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let [n, c, d, h, w] = dims5("group_norm backward input", input.shape())?;
    if grad_out.shape() != input.shape() {
        return Err(Error::Shape(format!(
            "group_norm backward: grad shape {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let groups = cache.groups;
    if groups == 0 || c % groups != 0 || cache.mean.len() != n * groups {
        return Err(Error::Validation(format!(
            "group_norm backward: cache built for {} (sample, group) pairs, input needs {}",
            cache.mean.len(),
            n * groups
        )));
    }
    let spatial = d * h * w;
    let cpg = c / groups;
    let group_len = cpg * spatial;
    let x = input.data();
    let go = grad_out.data();

    let mut grad_input = Tensor::zeros(input.shape());
    grad_input.data_mut().par_chunks_mut(group_len).enumerate().for_each(|(ng, gi)| {
        let g = ng % groups;
        let mu = cache.mean[ng];
        let is = cache.inv_std[ng];
        let xs = &x[ng * group_len..(ng + 1) * group_len];
        let gos = &go[ng * group_len..(ng + 1) * group_len];
        let m = E::from_f64_lossy(group_len as f64);
        let mut s1 = E::zero(); // sum of dxhat
        let mut s2 = E::zero(); // sum of dxhat * xhat
        for cc in 0..cpg {
            let ga = gamma.data()[g * cpg + cc];
            for i in cc * spatial..(cc + 1) * spatial {
                let dxh = gos[i] * ga;
                s1 += dxh;
                s2 += dxh * (xs[i] - mu) * is;
            }
        }
        let m1 = s1 / m;
        let m2 = s2 / m;
        for cc in 0..cpg {
            let ga = gamma.data()[g * cpg + cc];
            for i in cc * spatial..(cc + 1) * spatial {
                let xhat = (xs[i] - mu) * is;
                gi[i] = is * (gos[i] * ga - m1 - xhat * m2);
            }
        }
    });

    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    grad_gamma
        .data_mut()
        .par_iter_mut()
        .zip(grad_beta.data_mut().par_iter_mut())
        .enumerate()
        .for_each(|(ch, (gg, gb))| {
            let g = ch / cpg;
            let mut acc_g = E::zero();
            let mut acc_b = E::zero();
            for ni in 0..n {
                let ng = ni * groups + g;
                let mu = cache.mean[ng];
                let is = cache.inv_std[ng];
                let base = (ni * c + ch) * spatial;
                for i in base..base + spatial {
                    acc_g += go[i] * (x[i] - mu) * is;
                    acc_b += go[i];
                }
            }
            *gg = acc_g;
            *gb = acc_b;
        });

    Ok((grad_input, grad_gamma, grad_beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut s = seed;
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) as f64 / (1u64 << 30) as f64) - 1.0
            })
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    fn unit_affine(c: usize) -> (Tensor<f64>, Tensor<f64>) {
        (Tensor::full(&[c], 1.0), Tensor::zeros(&[c]))
    }

    #[test]
    fn output_has_zero_mean_unit_variance_per_group() {
        let x = rand_tensor(&[2, 4, 2, 2, 2], 7);
        let (g, b) = unit_affine(4);
        let (y, _) = group_norm(&x, &g, &b, 2, 1e-12).unwrap();
        let group_len = 2 * 8;
        for ng in 0..4 {
            let ys = &y.data()[ng * group_len..(ng + 1) * group_len];
            let mean: f64 = ys.iter().sum::<f64>() / group_len as f64;
            let var: f64 = ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / group_len as f64;
            assert!(mean.abs() < 1e-9, "group {ng} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "group {ng} var {var}");
        }
    }

    #[test]
    fn constant_input_maps_to_beta() {
        let x = Tensor::full(&[1, 2, 2, 2, 2], 5.0f64);
        let gamma = Tensor::full(&[2], 3.0);
        let beta = Tensor::from_vec(&[2], vec![0.25, -0.75]).unwrap();
        let (y, _) = group_norm(&x, &gamma, &beta, 2, 1e-5).unwrap();
        for ch in 0..2 {
            for i in 0..8 {
                assert_eq!(y.data()[ch * 8 + i], beta.data()[ch]);
            }
        }
    }

    #[test]
    fn two_element_group_by_hand() {
        let x = Tensor::from_vec(&[1, 1, 1, 1, 2], vec![1.0f64, 3.0]).unwrap();
        let gamma = Tensor::full(&[1], 2.0);
        let beta = Tensor::full(&[1], 0.5);
        let (y, cache) = group_norm(&x, &gamma, &beta, 1, 1e-12).unwrap();
        // mean 2, biased variance 1 -> xhat = [-1, 1]
        assert!((y.data()[0] - -1.5).abs() < 1e-6);
        assert!((y.data()[1] - 2.5).abs() < 1e-6);
        assert!((cache.mean[0] - 2.0).abs() < 1e-15);
        assert!((cache.inv_std[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn groups_equal_channels_is_per_channel_norm() {
        let x = rand_tensor(&[1, 3, 2, 2, 2], 13);
        let (g, b) = unit_affine(3);
        let (y, _) = group_norm(&x, &g, &b, 3, 1e-12).unwrap();
        for ch in 0..3 {
            let xs = &x.data()[ch * 8..(ch + 1) * 8];
            let mu: f64 = xs.iter().sum::<f64>() / 8.0;
            let var: f64 = xs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 8.0;
            let is = 1.0 / (var + 1e-12).sqrt();
            for i in 0..8 {
                assert!((y.data()[ch * 8 + i] - (xs[i] - mu) * is).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shift_and_scale_invariance_per_group() {
        let x = rand_tensor(&[1, 2, 2, 2, 2], 17);
        let (g, b) = unit_affine(2);
        let (y0, _) = group_norm(&x, &g, &b, 1, 1e-12).unwrap();
        let shifted = x.map(|v| v * 3.0 + 7.0);
        let (y1, _) = group_norm(&shifted, &g, &b, 1, 1e-12).unwrap();
        for (a, c) in y0.data().iter().zip(y1.data()) {
            assert!((a - c).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_bad_group_counts_and_eps() {
        let x = Tensor::<f64>::zeros(&[1, 3, 2, 2, 2]);
        let (g, b) = unit_affine(3);
        assert!(group_norm(&x, &g, &b, 2, 1e-5).is_err());
        assert!(group_norm(&x, &g, &b, 0, 1e-5).is_err());
        assert!(group_norm(&x, &g, &b, 3, 0.0).is_err());
        assert!(group_norm(&x, &g, &b, 3, -1.0).is_err());
    }

    #[test]
    fn grad_beta_is_plain_sum() {
        let x = rand_tensor(&[2, 2, 2, 2, 2], 19);
        let (g, b) = unit_affine(2);
        let (_, cache) = group_norm(&x, &g, &b, 2, 1e-5).unwrap();
        let go = rand_tensor(&[2, 2, 2, 2, 2], 23);
        let (_, _, gb) = group_norm_backward(&go, &x, &g, &cache).unwrap();
        for ch in 0..2 {
            let mut expect = 0.0;
            for ni in 0..2 {
                for i in 0..8 {
                    expect += go.data()[(ni * 2 + ch) * 8 + i];
                }
            }
            assert!((gb.data()[ch] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_input_sums_to_zero_per_group() {
        // The normalization subtracts the group mean, so gradients within a
        // group must sum to zero when gamma is constant over the group.
        let x = rand_tensor(&[1, 4, 2, 2, 2], 29);
        let (g, b) = unit_affine(4);
        let (_, cache) = group_norm(&x, &g, &b, 2, 1e-5).unwrap();
        let go = rand_tensor(&[1, 4, 2, 2, 2], 31);
        let (gi, _, _) = group_norm_backward(&go, &x, &g, &cache).unwrap();
        for grp in 0..2 {
            let s: f64 = gi.data()[grp * 16..(grp + 1) * 16].iter().sum();
            assert!(s.abs() < 1e-9, "group {grp} gradient sum {s}");
        }
    }
}
