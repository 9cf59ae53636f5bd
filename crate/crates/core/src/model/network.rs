//! The full encoder–bottleneck–decoder network.
//!
//! Each encoder stage runs two residual blocks and then halves the spatial
//! extents by max-pooling; the bottleneck runs two more without pooling. Each
//! decoder stage upsamples with a stride-2 transposed convolution, gates the
//! upsampled feature against the matching encoder skip, refines it with
//! multiscale spatial attention, concatenates the skip back in, and runs two
//! residual blocks. A 1x1x1 head maps to per-class probabilities through a
//! sigmoid — classes are nested regions, so multi-label is intentional.

use super::blocks::{
    AttentionGateCache, AttentionGateParams, Conv3dParams, MsaCache, MsaParams, ParamSet,
    ResBlockCache, ResBlockParams,
};
use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{
    activation, activation_backward, concat_channels, conv_transpose3d, conv_transpose3d_backward,
    maxpool3d, maxpool3d_backward, split_channels, Activation, ConvSpec, Scalar, Tensor,
};

#[derive(Clone, Debug)]
pub struct EncoderLevel<E> {
    pub rb1: ResBlockParams<E>,
    pub rb2: ResBlockParams<E>,
}

#[derive(Clone, Debug)]
pub struct DecoderLevel<E> {
    /// Transposed-conv weight [C_below, W, 2, 2, 2] and bias [W].
    pub up_weight: Tensor<E>,
    pub up_bias: Tensor<E>,
    pub gate: AttentionGateParams<E>,
    pub msa: MsaParams<E>,
    pub rb1: ResBlockParams<E>,
    pub rb2: ResBlockParams<E>,
}

#[derive(Clone, Debug)]
pub struct ModelParams<E> {
    pub config: ModelConfig,
    pub encoder: Vec<EncoderLevel<E>>,
    pub bottleneck: (ResBlockParams<E>, ResBlockParams<E>),
    /// decoder[i] produces the stage-i feature; they run deepest-first.
    pub decoder: Vec<DecoderLevel<E>>,
    pub head: Conv3dParams<E>,
}

impl<E: Scalar> ModelParams<E> {
    /// Builds the full parameter set, zero-filled, from a validated config.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let levels = config.levels;
        let mut encoder = Vec::with_capacity(levels);
        for i in 0..levels {
            let cin = if i == 0 { config.in_channels } else { config.width(i - 1) };
            let w = config.width(i);
            encoder.push(EncoderLevel {
                rb1: ResBlockParams::zeros(cin, w),
                rb2: ResBlockParams::zeros(w, w),
            });
        }
        let deepest = config.width(levels - 1);
        let bf = config.bottleneck_filters;
        let bottleneck = (ResBlockParams::zeros(deepest, bf), ResBlockParams::zeros(bf, bf));
        let mut decoder = Vec::with_capacity(levels);
        for i in 0..levels {
            let w = config.width(i);
            let c_below = if i == levels - 1 { bf } else { config.width(i + 1) };
            decoder.push(DecoderLevel {
                up_weight: Tensor::zeros(&[c_below, w, 2, 2, 2]),
                up_bias: Tensor::zeros(&[w]),
                gate: AttentionGateParams::zeros(w),
                msa: MsaParams::zeros(w),
                rb1: ResBlockParams::zeros(2 * w, w),
                rb2: ResBlockParams::zeros(w, w),
            });
        }
        let head = Conv3dParams::zeros(ConvSpec::same(config.width(0), config.out_classes, 1));
        Ok(ModelParams { config: config.clone(), encoder, bottleneck, decoder, head })
    }

    /// Same-structured parameter set with every tensor zeroed — the shape of
    /// a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(&self.config).expect("config was validated at construction");
        debug_assert_eq!(
            z.tensors("").iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            self.tensors("").iter().map(|(n, _)| n.clone()).collect::<Vec<_>>()
        );
        for (_, t) in z.tensors_mut("") {
            for v in t.data_mut() {
                *v = E::zero();
            }
        }
        z
    }

    /// Accumulates another same-shaped parameter set (used for gradients).
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        let mut mine = self.tensors_mut("");
        let theirs = other.tensors("");
        if mine.len() != theirs.len() {
            return Err(Error::Shape("parameter sets differ in structure".into()));
        }
        for ((na, a), (nb, b)) in mine.iter_mut().zip(theirs.iter()) {
            if na != nb {
                return Err(Error::Shape(format!("parameter mismatch: {na} vs {nb}")));
            }
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn cast<F: Scalar>(&self) -> ModelParams<F> {
        let mut out = ModelParams::<F>::zeros(&self.config).expect("validated config");
        let src = self.tensors("");
        for ((_, dst), (_, s)) in out.tensors_mut("").into_iter().zip(src) {
            *dst = s.cast();
        }
        out
    }
}

impl<E: Scalar> ParamSet<E> for ModelParams<E> {
    fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<E>)> {
        let mut out = Vec::new();
        for (i, lvl) in self.encoder.iter().enumerate() {
            out.extend(lvl.rb1.tensors(&format!("{prefix}enc{i}.rb1")));
            out.extend(lvl.rb2.tensors(&format!("{prefix}enc{i}.rb2")));
        }
        out.extend(self.bottleneck.0.tensors(&format!("{prefix}bottleneck.rb1")));
        out.extend(self.bottleneck.1.tensors(&format!("{prefix}bottleneck.rb2")));
        for (i, lvl) in self.decoder.iter().enumerate() {
            let p = format!("{prefix}dec{i}");
            out.push((format!("{p}.up.weight"), &lvl.up_weight));
            out.push((format!("{p}.up.bias"), &lvl.up_bias));
            out.extend(lvl.gate.tensors(&format!("{p}.gate")));
            out.extend(lvl.msa.tensors(&format!("{p}.msa")));
            out.extend(lvl.rb1.tensors(&format!("{p}.rb1")));
            out.extend(lvl.rb2.tensors(&format!("{p}.rb2")));
        }
        out.extend(self.head.tensors(&format!("{prefix}head")));
        out
    }

    fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<E>)> {
        let mut out = Vec::new();
        for (i, lvl) in self.encoder.iter_mut().enumerate() {
            out.extend(lvl.rb1.tensors_mut(&format!("{prefix}enc{i}.rb1")));
            out.extend(lvl.rb2.tensors_mut(&format!("{prefix}enc{i}.rb2")));
        }
        out.extend(self.bottleneck.0.tensors_mut(&format!("{prefix}bottleneck.rb1")));
        out.extend(self.bottleneck.1.tensors_mut(&format!("{prefix}bottleneck.rb2")));
        for (i, lvl) in self.decoder.iter_mut().enumerate() {
            let p = format!("{prefix}dec{i}");
            out.push((format!("{p}.up.weight"), &mut lvl.up_weight));
            out.push((format!("{p}.up.bias"), &mut lvl.up_bias));
            out.extend(lvl.gate.tensors_mut(&format!("{p}.gate")));
            out.extend(lvl.msa.tensors_mut(&format!("{p}.msa")));
            out.extend(lvl.rb1.tensors_mut(&format!("{p}.rb1")));
            out.extend(lvl.rb2.tensors_mut(&format!("{p}.rb2")));
        }
        out.extend(self.head.tensors_mut(&format!("{prefix}head")));
        out
    }
}

struct EncLevelCache<E> {
    rb1: ResBlockCache<E>,
    rb2: ResBlockCache<E>,
    skip_shape: Vec<usize>,
    argmax: Vec<usize>,
}

struct DecLevelCache<E> {
    below: Tensor<E>,
    gate: AttentionGateCache<E>,
    msa: MsaCache<E>,
    rb1: ResBlockCache<E>,
    rb2: ResBlockCache<E>,
}

/// Everything the backward pass needs, produced alongside the forward output.
pub struct ModelCache<E> {
    enc: Vec<EncLevelCache<E>>,
    bn1: ResBlockCache<E>,
    bn2: ResBlockCache<E>,
    dec: Vec<DecLevelCache<E>>,
    head_in: Tensor<E>,
    probs: Tensor<E>,
}

impl<E> ModelCache<E> {
    /// Per-decoder-level attention maps, deepest level first: the gate
    /// coefficients (each in (0, 1)) and the summed multiscale map (each in
    /// (0, 3)). Kept accessible for inspection and visualization.
    pub fn attention_maps(&self) -> Vec<(&Tensor<E>, &Tensor<E>)> {
        self.dec.iter().map(|d| (d.gate.coefficients(), d.msa.attention_sum())).collect()
    }
}

fn check_input_extents<E: Scalar>(config: &ModelConfig, x: &Tensor<E>) -> Result<()> {
    let shape = x.shape();
    if shape.len() != 5 {
        return Err(Error::Shape(format!("model input must be [N,C,D,H,W], got {shape:?}")));
    }
    if shape[1] != config.in_channels {
        return Err(Error::Shape(format!(
            "model input has {} channels, config expects {}",
            shape[1], config.in_channels
        )));
    }
    let factor = config.downsample_factor();
    for (axis, &ext) in shape[2..].iter().enumerate() {
        if ext % factor != 0 || ext / factor == 0 {
            return Err(Error::Shape(format!(
                "spatial axis {axis} extent {ext} must be a positive multiple of {factor} \
                 ({} pooling stages)",
                config.levels
            )));
        }
    }
    Ok(())
}

/// Full forward pass: per-class probabilities in (0, 1) plus the cache for
/// [`model_backward`].
pub fn model_forward<E: Scalar>(
    params: &ModelParams<E>,
    x: &Tensor<E>,
) -> Result<(Tensor<E>, ModelCache<E>)> {
    check_input_extents(&params.config, x)?;
    let levels = params.config.levels;
    let mut enc_caches = Vec::with_capacity(levels);
    let mut skips: Vec<Tensor<E>> = Vec::with_capacity(levels);
    let mut cur = x.clone();
    for lvl in &params.encoder {
        let (h1, rb1) = lvl.rb1.forward(&cur)?;
        let (skip, rb2) = lvl.rb2.forward(&h1)?;
        let (pooled, argmax) = maxpool3d(&skip)?;
        enc_caches.push(EncLevelCache {
            rb1,
            rb2,
            skip_shape: skip.shape().to_vec(),
            argmax,
        });
        skips.push(skip);
        cur = pooled;
    }
    let (b1, bn1) = params.bottleneck.0.forward(&cur)?;
    let (mut feat, bn2) = params.bottleneck.1.forward(&b1)?;

    let mut dec_tmp: Vec<Option<DecLevelCache<E>>> = (0..levels).map(|_| None).collect();
    for i in (0..levels).rev() {
        let lvl = &params.decoder[i];
        let below = feat;
        let up_out = conv_transpose3d(&below, &lvl.up_weight, &lvl.up_bias, 2, 2)?;
        let (attn, gate) = lvl.gate.forward(&skips[i], &up_out)?;
        let (refined, msa) = lvl.msa.forward(&attn)?;
        let fused = concat_channels(&refined, &skips[i])?;
        let (h1, rb1) = lvl.rb1.forward(&fused)?;
        let (out, rb2) = lvl.rb2.forward(&h1)?;
        dec_tmp[i] = Some(DecLevelCache { below, gate, msa, rb1, rb2 });
        feat = out;
    }
    let dec: Vec<DecLevelCache<E>> =
        dec_tmp.into_iter().map(|c| c.expect("every decoder level ran")).collect();

    let logits = params.head.forward(&feat)?;
    let probs = activation(&logits, Activation::Sigmoid);
    let cache = ModelCache { enc: enc_caches, bn1, bn2, dec, head_in: feat, probs: probs.clone() };
    Ok((probs, cache))
}

/// Full backward pass from d(loss)/d(probabilities). Returns parameter
/// gradients in a same-structured [`ModelParams`] plus the gradient with
/// respect to the input volume.
pub fn model_backward<E: Scalar>(
    params: &ModelParams<E>,
    cache: &ModelCache<E>,
    grad_probs: &Tensor<E>,
) -> Result<(ModelParams<E>, Tensor<E>)> {
    let levels = params.config.levels;
    let mut grads = params.zeros_like();

    let g_logits = activation_backward(grad_probs, &cache.probs, Activation::Sigmoid)?;
    let (mut g_feat, g_head) = params.head.backward(&g_logits, &cache.head_in)?;
    grads.head = g_head;

    // decoder stages unwind shallow-to-deep, leaving per-stage skip gradients
    let mut skip_grads: Vec<Option<Tensor<E>>> = (0..levels).map(|_| None).collect();
    for i in 0..levels {
        let lvl = &params.decoder[i];
        let c = &cache.dec[i];
        let (g_h1, g_rb2) = lvl.rb2.backward(&g_feat, &c.rb2)?;
        let (g_fused, g_rb1) = lvl.rb1.backward(&g_h1, &c.rb1)?;
        let width = params.config.width(i);
        let (g_refined, g_skip_cat) = split_channels(&g_fused, width)?;
        let (g_attn, g_msa) = lvl.msa.backward(&g_refined, &c.msa)?;
        let (g_skip_gate, g_up, g_gate) = lvl.gate.backward(&g_attn, &c.gate)?;
        let (g_below, g_upw, g_upb) =
            conv_transpose3d_backward(&g_up, &c.below, &lvl.up_weight, 2, 2)?;

        let mut g_skip = g_skip_cat;
        g_skip.add_assign(&g_skip_gate)?;
        skip_grads[i] = Some(g_skip);

        let gd = &mut grads.decoder[i];
        gd.rb2 = g_rb2;
        gd.rb1 = g_rb1;
        gd.msa = g_msa;
        gd.gate = g_gate;
        gd.up_weight = g_upw;
        gd.up_bias = g_upb;
        g_feat = g_below;
    }

    let (g_b1, g_bn2) = params.bottleneck.1.backward(&g_feat, &cache.bn2)?;
    let (mut g_pooled, g_bn1) = params.bottleneck.0.backward(&g_b1, &cache.bn1)?;
    grads.bottleneck = (g_bn1, g_bn2);

    for i in (0..levels).rev() {
        let lvl = &params.encoder[i];
        let c = &cache.enc[i];
        let mut g_skip = maxpool3d_backward(&g_pooled, &c.argmax, &c.skip_shape)?;
        g_skip.add_assign(skip_grads[i].as_ref().expect("decoder stage ran"))?;
        let (g_h1, g_rb2) = lvl.rb2.backward(&g_skip, &c.rb2)?;
        let (g_in, g_rb1) = lvl.rb1.backward(&g_h1, &c.rb1)?;
        grads.encoder[i].rb2 = g_rb2;
        grads.encoder[i].rb1 = g_rb1;
        g_pooled = g_in;
    }

    Ok((grads, g_pooled))
}
