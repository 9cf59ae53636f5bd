//! 2x2x2 max-pooling with stride 2 and its gradient routing.

use super::{dims5, Scalar, Tensor};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Halves every spatial extent by taking the maximum of each 2x2x2 window.
/// Returns the pooled tensor plus, per output element, the linear index of
/// the winning input voxel (ties go to the lowest index, i.e. the first voxel
/// in C order), which the backward pass uses to route gradients.
pub fn maxpool3d<E: Scalar>(input: &Tensor<E>) -> Result<(Tensor<E>, Vec<usize>)> {
    let [n, c, d, h, w] = dims5("maxpool3d input", input.shape())?;
    if d % 2 != 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "maxpool3d requires even spatial extents, got {d}x{h}x{w}"
        )));
    }
    let (od, oh, ow) = (d / 2, h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, od, oh, ow]);
    let mut argmax = vec![0usize; out.numel()];
    let data = input.data();
    out.data_mut()
        .par_chunks_mut(ow)
        .zip(argmax.par_chunks_mut(ow))
        .enumerate()
        .for_each(|(row, (vals, idxs))| {
            let y = row % oh;
            let z = (row / oh) % od;
            let nc = row / (oh * od); // fused (n, c) index
            let base = nc * d * h * w;
            for x in 0..ow {
                let mut best = E::neg_infinity();
                let mut best_idx = 0usize;
                for kz in 0..2 {
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let idx =
                                base + ((2 * z + kz) * h + 2 * y + ky) * w + 2 * x + kx;
                            let v = data[idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                }
                vals[x] = best;
                idxs[x] = best_idx;
            }
        });
    Ok((out, argmax))
}

/// Scatters each output gradient back to the voxel that won the forward max.
pub fn maxpool3d_backward<E: Scalar>(
    grad_out: &Tensor<E>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<E>> {
    if grad_out.numel() != argmax.len() {
        return Err(Error::Shape(format!(
            "maxpool3d backward: grad has {} elements but argmax has {}",
            grad_out.numel(),
            argmax.len()
        )));
    }
    let mut grad_input = Tensor::zeros(input_shape);
    let gi = grad_input.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gi[idx] += g;
    }
    Ok(grad_input)
}
