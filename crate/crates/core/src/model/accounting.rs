//! Capacity accounting: trainable-parameter counts and a forward-pass FLOP
//! estimate.
//!
//! The FLOP estimate counts convolution work only (multiply-add = 2 FLOPs,
//! plus one add per bias application); normalization, activations, pooling,
//! and elementwise products are linear in voxels and contribute well under a
//! percent next to the 3x3x3-and-larger convolutions.

use super::blocks::{AttentionGateParams, MsaParams, ParamSet, ResBlockParams};
use super::config::ModelConfig;
use super::network::ModelParams;
use crate::error::Result;
use crate::tensor::ConvSpec;

/// Number of trainable scalars in `params`.
pub fn param_count<E: crate::tensor::Scalar>(params: &ModelParams<E>) -> u64 {
    params.tensors("").iter().map(|(_, t)| t.numel() as u64).sum()
}

/// Parameter count implied by a config, without training state.
pub fn param_count_for(config: &ModelConfig) -> Result<u64> {
    Ok(param_count(&ModelParams::<f32>::zeros(config)?))
}

fn conv_flops(spec: &ConvSpec, extent: [usize; 3]) -> Result<u64> {
    let out: Vec<usize> =
        extent.iter().map(|&e| spec.out_extent(e)).collect::<Result<_>>()?;
    let vox = out.iter().product::<usize>() as u64;
    let k3 = (spec.kernel * spec.kernel * spec.kernel) as u64;
    Ok(vox * spec.out_channels as u64 * (2 * k3 * spec.in_channels as u64 + 1))
}

fn resblock_flops<E: crate::tensor::Scalar>(
    rb: &ResBlockParams<E>,
    extent: [usize; 3],
) -> Result<u64> {
    let mut total = conv_flops(&rb.conv1.spec, extent)? + conv_flops(&rb.conv2.spec, extent)?;
    if let Some((proj, _)) = &rb.projection {
        total += conv_flops(&proj.spec, extent)?;
    }
    Ok(total)
}

fn gate_flops<E: crate::tensor::Scalar>(
    gate: &AttentionGateParams<E>,
    extent: [usize; 3],
) -> Result<u64> {
    Ok(conv_flops(&gate.g_conv.spec, extent)?
        + conv_flops(&gate.x_conv.spec, extent)?
        + conv_flops(&gate.psi.spec, extent)?)
}

fn msa_flops<E: crate::tensor::Scalar>(msa: &MsaParams<E>, extent: [usize; 3]) -> Result<u64> {
    Ok(conv_flops(&msa.conv3.spec, extent)?
        + conv_flops(&msa.conv5.spec, extent)?
        + conv_flops(&msa.conv7.spec, extent)?)
}

/// Forward-pass FLOPs for one sample with the given spatial extents.
pub fn flops_estimate(config: &ModelConfig, extent: [usize; 3]) -> Result<u64> {
    let params = ModelParams::<f32>::zeros(config)?;
    // extent validation mirrors the forward pass
    let factor = config.downsample_factor();
    for &e in &extent {
        if e % factor != 0 || e / factor == 0 {
            return Err(crate::error::Error::Validation(format!(
                "extent {e} is not a positive multiple of {factor}"
            )));
        }
    }
    let at = |level: usize| -> [usize; 3] {
        [extent[0] >> level, extent[1] >> level, extent[2] >> level]
    };
    let mut total: u64 = 0;
    for (i, lvl) in params.encoder.iter().enumerate() {
        total += resblock_flops(&lvl.rb1, at(i))?;
        total += resblock_flops(&lvl.rb2, at(i))?;
    }
    let deepest = at(config.levels);
    total += resblock_flops(&params.bottleneck.0, deepest)?;
    total += resblock_flops(&params.bottleneck.1, deepest)?;
    for (i, lvl) in params.decoder.iter().enumerate() {
        let e = at(i);
        let vox = (e[0] * e[1] * e[2]) as u64;
        // stride-2 transposed conv: one tap per input channel per output voxel
        let c_below = lvl.up_weight.shape()[0] as u64;
        let w = lvl.up_weight.shape()[1] as u64;
        total += vox * w * (2 * c_below + 1);
        total += gate_flops(&lvl.gate, e)?;
        total += msa_flops(&lvl.msa, e)?;
        total += resblock_flops(&lvl.rb1, e)?;
        total += resblock_flops(&lvl.rb2, e)?;
    }
    total += conv_flops(&params.head.spec, at(0))?;
    Ok(total)
}
