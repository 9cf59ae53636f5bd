//! Direct 3D convolution and the stride-2 transposed convolution, with exact
//! hand-written adjoints.
//!
//! Contributions to any output element accumulate in (ci, kz, ky, kx)
//! ascending order; parallel workers own disjoint output rows, so results are
//! bitwise reproducible at any thread count. Zero-padding taps are skipped by
//! clamping loop ranges, which leaves the order of the remaining terms intact.

use super::{dims5, Scalar, Tensor};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Geometry of one cubic-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        ConvSpec { in_channels, out_channels, kernel, stride, padding }
    }

    /// Shape-preserving 3x3x3 (or 5/7 with matching padding).
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        debug_assert!(kernel % 2 == 1);
        ConvSpec { in_channels, out_channels, kernel, stride: 1, padding: kernel / 2 }
    }

    /// Output spatial extent: floor((in + 2*padding - k)/stride) + 1, which must be >= 1.
    pub fn out_extent(&self, input: usize) -> Result<usize> {
        if self.stride == 0 {
            return Err(Error::Validation("conv stride must be >= 1".into()));
        }
        let padded = input + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::Shape(format!(
                "conv: extent {input} + 2*{} padding is smaller than kernel {}",
                self.padding, self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    fn check_forward<E: Scalar>(
        &self,
        input: &Tensor<E>,
        weight: &Tensor<E>,
        bias: &Tensor<E>,
    ) -> Result<([usize; 5], [usize; 3])> {
        let [n, c, d, h, w] = dims5("conv3d input", input.shape())?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv3d: input has {c} channels on axis 1, spec expects {}",
                self.in_channels
            )));
        }
        let k = self.kernel;
        let expect_w = [self.out_channels, self.in_channels, k, k, k];
        if weight.shape() != expect_w {
            return Err(Error::Shape(format!(
                "conv3d: weight shape {:?}, expected {expect_w:?}",
                weight.shape()
            )));
        }
        if bias.shape() != [self.out_channels] {
            return Err(Error::Shape(format!(
                "conv3d: bias shape {:?}, expected [{}]",
                bias.shape(),
                self.out_channels
            )));
        }
        let od = self.out_extent(d)?;
        let oh = self.out_extent(h)?;
        let ow = self.out_extent(w)?;
        Ok(([n, c, d, h, w], [od, oh, ow]))
    }
}

/// Valid kernel tap range along one axis for output position `o`:
/// taps `t` with `0 <= o*stride + t - padding < extent`.
#[inline]
fn tap_range(o: usize, stride: usize, padding: usize, kernel: usize, extent: usize) -> (usize, usize) {
    let base = (o * stride) as isize - padding as isize;
    let lo = (-base).max(0) as usize;
    let hi = ((extent as isize - base).min(kernel as isize)).max(0) as usize;
    (lo, hi.max(lo))
}

/// out[n,co,p] = bias[co] + sum over (ci, kz, ky, kx) of weight * input at the
/// strided, zero-padded position.
pub fn conv3d<E: Scalar>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: &Tensor<E>,
    spec: &ConvSpec,
) -> Result<Tensor<E>> {
    let ([n, cin, d, h, w], [od, oh, ow]) = spec.check_forward(input, weight, bias)?;
    let (cout, k, s, p) = (spec.out_channels, spec.kernel, spec.stride, spec.padding);
    let mut out = Tensor::zeros(&[n, cout, od, oh, ow]);
    let in_data = input.data();
    let w_data = weight.data();
    let b_data = bias.data();

    // One parallel unit = one output row (n, co, z, y) of `ow` elements.
    out.data_mut().par_chunks_mut(ow).enumerate().for_each(|(row, acc)| {
        let y = row % oh;
        let z = (row / oh) % od;
        let co = (row / (oh * od)) % cout;
        let ni = row / (oh * od * cout);
        acc.fill(b_data[co]);
        let (kz_lo, kz_hi) = tap_range(z, s, p, k, d);
        let (ky_lo, ky_hi) = tap_range(y, s, p, k, h);
        for ci in 0..cin {
            let in_ch = &in_data[((ni * cin + ci) * d) * h * w..((ni * cin + ci) * d + d) * h * w];
            for kz in kz_lo..kz_hi {
                let id = z * s + kz - p;
                for ky in ky_lo..ky_hi {
                    let ih = y * s + ky - p;
                    let in_row = &in_ch[(id * h + ih) * w..(id * h + ih + 1) * w];
                    let w_row = &w_data[(((co * cin + ci) * k + kz) * k + ky) * k..][..k];
                    for (kx, &wv) in w_row.iter().enumerate() {
                        let (x_lo, x_hi) = out_range(kx, s, p, w, ow);
                        if x_lo >= x_hi {
                            continue;
                        }
                        if s == 1 {
                            let off = kx as isize - p as isize;
                            let src = &in_row[(x_lo as isize + off) as usize
                                ..(x_hi as isize - 1 + off) as usize + 1];
                            for (a, &v) in acc[x_lo..x_hi].iter_mut().zip(src) {
                                *a += wv * v;
                            }
                        } else {
                            for x in x_lo..x_hi {
                                let iw = x * s + kx - p;
                                acc[x] += wv * in_row[iw];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Output positions `o` whose tap `kx` lands inside the input:
/// `0 <= o*stride + kx - padding < extent`, clamped to `[0, out_extent)`.
#[inline]
fn out_range(kx: usize, stride: usize, padding: usize, extent: usize, out_extent: usize) -> (usize, usize) {
    let off = kx as isize - padding as isize;
    let lo = if off >= 0 { 0 } else { ((-off) as usize).div_ceil(stride) };
    let hi_isize = (extent as isize - 1 - off).div_euclid(stride as isize) + 1;
    let hi = hi_isize.clamp(0, out_extent as isize) as usize;
    (lo.min(hi), hi)
}

/// Exact adjoints of [`conv3d`]: returns (grad_input, grad_weight, grad_bias).
pub fn conv3d_backward<E: Scalar>(
    grad_out: &Tensor<E>,
    input: &Tensor<E>,
    weight: &Tensor<E>,
    spec: &ConvSpec,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let bias_probe = Tensor::zeros(&[spec.out_channels]);
    let ([n, cin, d, h, w], [od, oh, ow]) = spec.check_forward(input, weight, &bias_probe)?;
    let expect_go = [n, spec.out_channels, od, oh, ow];
    if grad_out.shape() != expect_go {
        return Err(Error::Shape(format!(
            "conv3d backward: grad_out shape {:?}, forward produced {expect_go:?}",
            grad_out.shape()
        )));
    }
    let (cout, k, s, p) = (spec.out_channels, spec.kernel, spec.stride, spec.padding);
    let go = grad_out.data();
    let in_data = input.data();
    let w_data = weight.data();

    let mut grad_bias = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let mut acc = E::zero();
        for ni in 0..n {
            let row = &go[((ni * cout + co) * od) * oh * ow..][..od * oh * ow];
            for &v in row {
                acc += v;
            }
        }
        grad_bias.data_mut()[co] = acc;
    }

    // grad_weight[co,ci,kz,ky,kx] = sum over (n, z, y, x) of grad_out * input.
    let mut grad_weight = Tensor::zeros(weight.shape());
    grad_weight.data_mut().par_chunks_mut(cin * k * k * k).enumerate().for_each(|(co, gw)| {
        for ni in 0..n {
            for z in 0..od {
                let (kz_lo, kz_hi) = tap_range(z, s, p, k, d);
                for y in 0..oh {
                    let (ky_lo, ky_hi) = tap_range(y, s, p, k, h);
                    let go_row = &go[(((ni * cout + co) * od + z) * oh + y) * ow..][..ow];
                    for ci in 0..cin {
                        for kz in kz_lo..kz_hi {
                            let id = z * s + kz - p;
                            for ky in ky_lo..ky_hi {
                                let ih = y * s + ky - p;
                                let in_row =
                                    &in_data[(((ni * cin + ci) * d + id) * h + ih) * w..][..w];
                                for kx in 0..k {
                                    let (x_lo, x_hi) = out_range(kx, s, p, w, ow);
                                    let mut acc = E::zero();
                                    for x in x_lo..x_hi {
                                        acc += go_row[x] * in_row[x * s + kx - p];
                                    }
                                    gw[((ci * k + kz) * k + ky) * k + kx] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    });

    // grad_input[n,ci,id,ih,iw] = sum over (co, kz, ky, kx) with the matching
    // output position in range; order co -> kz -> ky -> kx ascending.
    let mut grad_input = Tensor::zeros(input.shape());
    grad_input.data_mut().par_chunks_mut(w).enumerate().for_each(|(row, acc)| {
        let ih = row % h;
        let id = (row / h) % d;
        let ci = (row / (h * d)) % cin;
        let ni = row / (h * d * cin);
        for co in 0..cout {
            for kz in 0..k {
                // z*s = id + p - kz must be a multiple of s within [0, od)
                let zn = id as isize + p as isize - kz as isize;
                if zn < 0 || zn % s as isize != 0 {
                    continue;
                }
                let z = (zn / s as isize) as usize;
                if z >= od {
                    continue;
                }
                for ky in 0..k {
                    let yn = ih as isize + p as isize - ky as isize;
                    if yn < 0 || yn % s as isize != 0 {
                        continue;
                    }
                    let y = (yn / s as isize) as usize;
                    if y >= oh {
                        continue;
                    }
                    let go_row = &go[(((ni * cout + co) * od + z) * oh + y) * ow..][..ow];
                    let w_row = &w_data[(((co * cin + ci) * k + kz) * k + ky) * k..][..k];
                    for (kx, &wv) in w_row.iter().enumerate() {
                        if s == 1 {
                            // x = iw + p - kx, valid iw range mirrors out_range
                            let off = p as isize - kx as isize;
                            let iw_lo = (-off).max(0) as usize;
                            let iw_hi = ((ow as isize - off).min(w as isize)).max(0) as usize;
                            if iw_lo >= iw_hi {
                                continue;
                            }
                            let src = &go_row[(iw_lo as isize + off) as usize
                                ..(iw_hi as isize - 1 + off) as usize + 1];
                            for (a, &g) in acc[iw_lo..iw_hi].iter_mut().zip(src) {
                                *a += wv * g;
                            }
                        } else {
                            for (iw, a) in acc.iter_mut().enumerate() {
                                let xn = iw as isize + p as isize - kx as isize;
                                if xn < 0 || xn % s as isize != 0 {
                                    continue;
                                }
                                let x = (xn / s as isize) as usize;
                                if x < ow {
                                    *a += wv * go_row[x];
                                }
                            }
                        }
                    }
                }
            }
        }
    });

    Ok((grad_input, grad_weight, grad_bias))
}

fn check_transpose_spec(stride: usize, kernel: usize) -> Result<()> {
    if stride != 2 || kernel != 2 {
        return Err(Error::Validation(format!(
            "conv_transpose3d supports only kernel=2, stride=2 (got kernel={kernel}, stride={stride})"
        )));
    }
    Ok(())
}

/// Transposed convolution with kernel 2, stride 2, no padding: doubles every
/// spatial extent. Weight layout is [Cin, Cout, 2, 2, 2]. Each output voxel
/// receives exactly one tap per input channel.
pub fn conv_transpose3d<E: Scalar>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: &Tensor<E>,
    stride: usize,
    kernel: usize,
) -> Result<Tensor<E>> {
    check_transpose_spec(stride, kernel)?;
    let [n, cin, d, h, w] = dims5("conv_transpose3d input", input.shape())?;
    let wdims = weight.shape();
    if wdims.len() != 5 || wdims[0] != cin || wdims[2] != 2 || wdims[3] != 2 || wdims[4] != 2 {
        return Err(Error::Shape(format!(
            "conv_transpose3d: weight shape {wdims:?}, expected [{cin}, Cout, 2, 2, 2]"
        )));
    }
    let cout = wdims[1];
    if bias.shape() != [cout] {
        return Err(Error::Shape(format!(
            "conv_transpose3d: bias shape {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    let mut out = Tensor::zeros(&[n, cout, od, oh, ow]);
    let in_data = input.data();
    let w_data = weight.data();
    let b_data = bias.data();
    out.data_mut().par_chunks_mut(ow).enumerate().for_each(|(row, acc)| {
        let y = row % oh;
        let z = (row / oh) % od;
        let co = (row / (oh * od)) % cout;
        let ni = row / (oh * od * cout);
        let (id, kz) = (z / 2, z % 2);
        let (ih, ky) = (y / 2, y % 2);
        acc.fill(b_data[co]);
        for ci in 0..cin {
            let in_row = &in_data[(((ni * cin + ci) * d + id) * h + ih) * w..][..w];
            let wk = &w_data[(((ci * cout + co) * 2 + kz) * 2 + ky) * 2..][..2];
            for (x, a) in acc.iter_mut().enumerate() {
                *a += wk[x % 2] * in_row[x / 2];
            }
        }
    });
    Ok(out)
}

/// Adjoints of [`conv_transpose3d`]: (grad_input, grad_weight, grad_bias).
pub fn conv_transpose3d_backward<E: Scalar>(
    grad_out: &Tensor<E>,
    input: &Tensor<E>,
    weight: &Tensor<E>,
    stride: usize,
    kernel: usize,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    check_transpose_spec(stride, kernel)?;
    let [n, cin, d, h, w] = dims5("conv_transpose3d input", input.shape())?;
    let cout = weight.shape()[1];
    let expect_go = [n, cout, 2 * d, 2 * h, 2 * w];
    if grad_out.shape() != expect_go {
        return Err(Error::Shape(format!(
            "conv_transpose3d backward: grad_out shape {:?}, expected {expect_go:?}",
            grad_out.shape()
        )));
    }
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    let go = grad_out.data();
    let in_data = input.data();
    let w_data = weight.data();

    let mut grad_bias = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let mut acc = E::zero();
        for ni in 0..n {
            for &v in &go[((ni * cout + co) * od) * oh * ow..][..od * oh * ow] {
                acc += v;
            }
        }
        grad_bias.data_mut()[co] = acc;
    }

    let mut grad_input = Tensor::zeros(input.shape());
    grad_input.data_mut().par_chunks_mut(w).enumerate().for_each(|(row, acc)| {
        let ih = row % h;
        let id = (row / h) % d;
        let ci = (row / (h * d)) % cin;
        let ni = row / (h * d * cin);
        for co in 0..cout {
            for kz in 0..2 {
                for ky in 0..2 {
                    let go_row =
                        &go[(((ni * cout + co) * od + 2 * id + kz) * oh + 2 * ih + ky) * ow..][..ow];
                    let wk = &w_data[(((ci * cout + co) * 2 + kz) * 2 + ky) * 2..][..2];
                    for kx in 0..2 {
                        let wv = wk[kx];
                        for (iw, a) in acc.iter_mut().enumerate() {
                            *a += wv * go_row[2 * iw + kx];
                        }
                    }
                }
            }
        }
    });

    let mut grad_weight = Tensor::zeros(weight.shape());
    grad_weight.data_mut().par_chunks_mut(cout * 8).enumerate().for_each(|(ci, gw)| {
        for co in 0..cout {
            for kz in 0..2 {
                for ky in 0..2 {
                    for kx in 0..2 {
                        let mut acc = E::zero();
                        for ni in 0..n {
                            for id in 0..d {
                                for ih in 0..h {
                                    let in_row =
                                        &in_data[(((ni * cin + ci) * d + id) * h + ih) * w..][..w];
                                    let go_row = &go[(((ni * cout + co) * od + 2 * id + kz) * oh
                                        + 2 * ih
                                        + ky)
                                        * ow..][..ow];
                                    for iw in 0..w {
                                        acc += in_row[iw] * go_row[2 * iw + kx];
                                    }
                                }
                            }
                        }
                        gw[((co * 2 + kz) * 2 + ky) * 2 + kx] = acc;
                    }
                }
            }
        }
    });

    Ok((grad_input, grad_weight, grad_bias))
}
