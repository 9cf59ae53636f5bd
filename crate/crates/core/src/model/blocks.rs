//! Network building blocks: residual blocks, attention gates, and multiscale
//! spatial attention, each with an explicit forward cache and a hand-written
//! backward pass.
//!
//! Every block's gradient comes back in a struct of the block's own type, so
//! the optimizer and checkpoints walk parameters and gradients with the same
//! name-indexed traversal ([`ParamSet`]).

use super::config::{gate_intermediate, norm_groups};
use crate::error::Result;
use crate::tensor::{
    activation, activation_backward, conv3d, conv3d_backward, elementwise, elementwise_backward,
    group_norm, group_norm_backward, Activation, ConvSpec, ElemOp, GroupNormCache, Scalar, Tensor,
};

pub const NORM_EPS: f64 = 1e-5;

/// Uniform, name-indexed access to every tensor a component owns. Parameter
/// and gradient structs share types, so walking two instances yields aligned
/// name sequences.
pub trait ParamSet<E: Scalar> {
    fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<E>)>;
    fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<E>)>;
}

// ---------------------------------------------------------------------------
// Convolution layer

#[derive(Clone, Debug)]
pub struct Conv3dParams<E> {
    pub spec: ConvSpec,
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Scalar> Conv3dParams<E> {
    /// Zero-filled parameters shaped for `spec`.
    pub fn zeros(spec: ConvSpec) -> Self {
        let k = spec.kernel;
        Conv3dParams {
            spec,
            weight: Tensor::zeros(&[spec.out_channels, spec.in_channels, k, k, k]),
            bias: Tensor::zeros(&[spec.out_channels]),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        conv3d(x, &self.weight, &self.bias, &self.spec)
    }

    /// Returns (grad_input, parameter gradients).
    pub fn backward(&self, grad_out: &Tensor<E>, x: &Tensor<E>) -> Result<(Tensor<E>, Self)> {
        let (gx, gw, gb) = conv3d_backward(grad_out, x, &self.weight, &self.spec)?;
        Ok((gx, Conv3dParams { spec: self.spec, weight: gw, bias: gb }))
    }
}

impl<E: Scalar> ParamSet<E> for Conv3dParams<E> {
    fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<E>)> {
        vec![(format!("{prefix}.weight"), &self.weight), (format!("{prefix}.bias"), &self.bias)]
    }

    fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<E>)> {
        vec![
            (format!("{prefix}.weight"), &mut self.weight),
            (format!("{prefix}.bias"), &mut self.bias),
        ]
    }
}

// ---------------------------------------------------------------------------
// Group-norm layer

#[derive(Clone, Debug)]
pub struct GroupNormParams<E> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    pub groups: usize,
}

impl<E: Scalar> GroupNormParams<E> {
    /// Identity affine (gamma 1, beta 0) with the standard group-count rule.
    pub fn identity(channels: usize) -> Self {
        GroupNormParams {
            gamma: Tensor::full(&[channels], E::one()),
            beta: Tensor::zeros(&[channels]),
            groups: norm_groups(channels),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<(Tensor<E>, GroupNormCache<E>)> {
        group_norm(x, &self.gamma, &self.beta, self.groups, NORM_EPS)
    }

    pub fn backward(
        &self,
        grad_out: &Tensor<E>,
        x: &Tensor<E>,
        cache: &GroupNormCache<E>,
    ) -> Result<(Tensor<E>, Self)> {
        let (gx, gg, gb) = group_norm_backward(grad_out, x, &self.gamma, cache)?;
        Ok((gx, GroupNormParams { gamma: gg, beta: gb, groups: self.groups }))
    }
}

impl<E: Scalar> ParamSet<E> for GroupNormParams<E> {
    fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<E>)> {
        vec![(format!("{prefix}.gamma"), &self.gamma), (format!("{prefix}.beta"), &self.beta)]
    }

    fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<E>)> {
        vec![
            (format!("{prefix}.gamma"), &mut self.gamma),
            (format!("{prefix}.beta"), &mut self.beta),
        ]
    }
}

// ---------------------------------------------------------------------------
// Residual block

/// Two 3x3x3 conv+norm stages with a shortcut: identity when the channel
/// count is unchanged, otherwise a 1x1x1 conv+norm projection. The projection
/// exists exactly when `cin != cout` — construction enforces it.
#[derive(Clone, Debug)]
pub struct ResBlockParams<E> {
    pub conv1: Conv3dParams<E>,
    pub norm1: GroupNormParams<E>,
    pub conv2: Conv3dParams<E>,
    pub norm2: GroupNormParams<E>,
    pub projection: Option<(Conv3dParams<E>, GroupNormParams<E>)>,
}

pub struct ResBlockCache<E> {
    x: Tensor<E>,
    a1: Tensor<E>,
    n1: GroupNormCache<E>,
    r1: Tensor<E>,
    a2: Tensor<E>,
    n2: GroupNormCache<E>,
    proj_a: Option<Tensor<E>>,
    proj_n: Option<GroupNormCache<E>>,
    y: Tensor<E>,
}

impl<E: Scalar> ResBlockParams<E> {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        let projection = (cin != cout).then(|| {
            (Conv3dParams::zeros(ConvSpec::same(cin, cout, 1)), GroupNormParams::identity(cout))
        });
        ResBlockParams {
            conv1: Conv3dParams::zeros(ConvSpec::same(cin, cout, 3)),
            norm1: GroupNormParams::identity(cout),
            conv2: Conv3dParams::zeros(ConvSpec::same(cout, cout, 3)),
            norm2: GroupNormParams::identity(cout),
            projection,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.spec.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv1.spec.out_channels
    }

    /// relu(norm2(conv2(relu(norm1(conv1(x))))) + shortcut(x))
    pub fn forward(&self, x: &Tensor<E>) -> Result<(Tensor<E>, ResBlockCache<E>)> {
        let a1 = self.conv1.forward(x)?;
        let (n1_out, n1) = self.norm1.forward(&a1)?;
        let r1 = activation(&n1_out, Activation::Relu);
        let a2 = self.conv2.forward(&r1)?;
        let (f1, n2) = self.norm2.forward(&a2)?;
        let (shortcut, proj_a, proj_n) = match &self.projection {
            Some((conv, norm)) => {
                let pa = conv.forward(x)?;
                let (py, pn) = norm.forward(&pa)?;
                (py, Some(pa), Some(pn))
            }
            None => (x.clone(), None, None),
        };
        let sum = elementwise(&f1, &shortcut, ElemOp::Add)?;
        let y = activation(&sum, Activation::Relu);
        let cache =
            ResBlockCache { x: x.clone(), a1, n1, r1, a2, n2, proj_a, proj_n, y: y.clone() };
        Ok((y, cache))
    }

    /// Returns (grad_input, parameter gradients).
    pub fn backward(
        &self,
        grad_out: &Tensor<E>,
        cache: &ResBlockCache<E>,
    ) -> Result<(Tensor<E>, Self)> {
        // through the final relu: same gradient feeds both branches of the sum
        let g_sum = activation_backward(grad_out, &cache.y, Activation::Relu)?;

        // main branch
        let (g_a2, g_norm2) = self.norm2.backward(&g_sum, &cache.a2, &cache.n2)?;
        let (g_r1, g_conv2) = self.conv2.backward(&g_a2, &cache.r1)?;
        let g_n1out = activation_backward(&g_r1, &cache.r1, Activation::Relu)?;
        let (g_a1, g_norm1) = self.norm1.backward(&g_n1out, &cache.a1, &cache.n1)?;
        let (mut g_x, g_conv1) = self.conv1.backward(&g_a1, &cache.x)?;

        // shortcut branch
        let g_projection = match &self.projection {
            Some((conv, norm)) => {
                let pa = cache.proj_a.as_ref().expect("projection cache");
                let pn = cache.proj_n.as_ref().expect("projection cache");
                let (g_pa, g_pnorm) = norm.backward(&g_sum, pa, pn)?;
                let (g_px, g_pconv) = conv.backward(&g_pa, &cache.x)?;
                g_x.add_assign(&g_px)?;
                Some((g_pconv, g_pnorm))
            }
            None => {
                g_x.add_assign(&g_sum)?;
                None
            }
        };

        let grads = ResBlockParams {
            conv1: g_conv1,
            norm1: g_norm1,
            conv2: g_conv2,
            norm2: g_norm2,
            projection: g_projection,
        };
        Ok((g_x, grads))
    }
}

impl<E: Scalar> ParamSet<E> for ResBlockParams<E> {
    fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<E>)> {
        let mut out = self.conv1.tensors(&format!("{prefix}.conv1"));
        out.extend(self.norm1.tensors(&format!("{prefix}.norm1")));
        out.extend(self.conv2.tensors(&format!("{prefix}.conv2")));
        out.extend(self.norm2.tensors(&format!("{prefix}.norm2")));
        if let Some((conv, norm)) = &self.projection {
            out.extend(conv.tensors(&format!("{prefix}.proj_conv")));
            out.extend(norm.tensors(&format!("{prefix}.proj_norm")));
        }
        out
    }

    fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<E>)> {
        let mut out = self.conv1.tensors_mut(&format!("{prefix}.conv1"));
        out.extend(self.norm1.tensors_mut(&format!("{prefix}.norm1")));
        out.extend(self.conv2.tensors_mut(&format!("{prefix}.conv2")));
        out.extend(self.norm2.tensors_mut(&format!("{prefix}.norm2")));
        if let Some((conv, norm)) = &mut self.projection {
            out.extend(conv.tensors_mut(&format!("{prefix}.proj_conv")));
            out.extend(norm.tensors_mut(&format!("{prefix}.proj_norm")));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Attention gate

/// Additive attention over a decoder feature. The gating signal `g` is the
/// encoder skip; both inputs are projected to an intermediate width, summed,
/// and squashed to a single-channel coefficient map that scales the decoder
/// feature `x`. (Conventional attention U-Nets scale the skip instead; here
/// the coefficients multiply the upsampled decoder path.)
#[derive(Clone, Debug)]
pub struct AttentionGateParams<E> {
    pub g_conv: Conv3dParams<E>,
    pub g_norm: GroupNormParams<E>,
    pub x_conv: Conv3dParams<E>,
    pub x_norm: GroupNormParams<E>,
    pub psi: Conv3dParams<E>,
}

pub struct AttentionGateCache<E> {
    g: Tensor<E>,
    x: Tensor<E>,
    g_a: Tensor<E>,
    g_n: GroupNormCache<E>,
    g_t: Tensor<E>,
    x_a: Tensor<E>,
    x_n: GroupNormCache<E>,
    x_t: Tensor<E>,
    sum: Tensor<E>,
    coeff: Tensor<E>,
}

impl<E> AttentionGateCache<E> {
    /// The gating coefficients `[N, 1, D, H, W]`, each in (0, 1) — the map
    /// that was multiplied into the skip feature. Kept accessible for
    /// inspection and visualization.
    pub fn coefficients(&self) -> &Tensor<E> {
        &self.coeff
    }
}

impl<E: Scalar> AttentionGateParams<E> {
    pub fn zeros(width: usize) -> Self {
        let inter = gate_intermediate(width);
        AttentionGateParams {
            g_conv: Conv3dParams::zeros(ConvSpec::same(width, inter, 1)),
            g_norm: GroupNormParams::identity(inter),
            x_conv: Conv3dParams::zeros(ConvSpec::same(width, inter, 1)),
            x_norm: GroupNormParams::identity(inter),
            psi: Conv3dParams::zeros(ConvSpec::same(inter, 1, 1)),
        }
    }

    /// coeff = sigmoid(psi(relu(gn(conv(g))) + relu(gn(conv(x))))); out = x * coeff
    pub fn forward(
        &self,
        g: &Tensor<E>,
        x: &Tensor<E>,
    ) -> Result<(Tensor<E>, AttentionGateCache<E>)> {
        let g_a = self.g_conv.forward(g)?;
        let (g_nout, g_n) = self.g_norm.forward(&g_a)?;
        let g_t = activation(&g_nout, Activation::Relu);
        let x_a = self.x_conv.forward(x)?;
        let (x_nout, x_n) = self.x_norm.forward(&x_a)?;
        let x_t = activation(&x_nout, Activation::Relu);
        let sum = elementwise(&g_t, &x_t, ElemOp::Add)?;
        let logits = self.psi.forward(&sum)?;
        let coeff = activation(&logits, Activation::Sigmoid);
        let out = elementwise(x, &coeff, ElemOp::Mul)?;
        let cache = AttentionGateCache {
            g: g.clone(),
            x: x.clone(),
            g_a,
            g_n,
            g_t,
            x_a,
            x_n,
            x_t,
            sum,
            coeff,
        };
        Ok((out, cache))
    }

    /// Returns (grad_g, grad_x, parameter gradients).
    pub fn backward(
        &self,
        grad_out: &Tensor<E>,
        cache: &AttentionGateCache<E>,
    ) -> Result<(Tensor<E>, Tensor<E>, Self)> {
        let (mut g_x, g_coeff) =
            elementwise_backward(grad_out, &cache.x, &cache.coeff, ElemOp::Mul)?;
        let g_logits = activation_backward(&g_coeff, &cache.coeff, Activation::Sigmoid)?;
        let (g_sum, g_psi) = self.psi.backward(&g_logits, &cache.sum)?;

        // the sum node feeds the same gradient to both transformed branches
        let g_gt = activation_backward(&g_sum, &cache.g_t, Activation::Relu)?;
        let (g_ga, g_gnorm) = self.g_norm.backward(&g_gt, &cache.g_a, &cache.g_n)?;
        let (g_g, g_gconv) = self.g_conv.backward(&g_ga, &cache.g)?;

        let g_xt = activation_backward(&g_sum, &cache.x_t, Activation::Relu)?;
        let (g_xa, g_xnorm) = self.x_norm.backward(&g_xt, &cache.x_a, &cache.x_n)?;
        let (g_x_branch, g_xconv) = self.x_conv.backward(&g_xa, &cache.x)?;
        g_x.add_assign(&g_x_branch)?;

        let grads = AttentionGateParams {
            g_conv: g_gconv,
            g_norm: g_gnorm,
            x_conv: g_xconv,
            x_norm: g_xnorm,
            psi: g_psi,
        };
        Ok((g_g, g_x, grads))
    }
}

impl<E: Scalar> ParamSet<E> for AttentionGateParams<E> {
    fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<E>)> {
        let mut out = self.g_conv.tensors(&format!("{prefix}.g_conv"));
        out.extend(self.g_norm.tensors(&format!("{prefix}.g_norm")));
        out.extend(self.x_conv.tensors(&format!("{prefix}.x_conv")));
        out.extend(self.x_norm.tensors(&format!("{prefix}.x_norm")));
        out.extend(self.psi.tensors(&format!("{prefix}.psi")));
        out
    }

    fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<E>)> {
        let mut out = self.g_conv.tensors_mut(&format!("{prefix}.g_conv"));
        out.extend(self.g_norm.tensors_mut(&format!("{prefix}.g_norm")));
        out.extend(self.x_conv.tensors_mut(&format!("{prefix}.x_conv")));
        out.extend(self.x_norm.tensors_mut(&format!("{prefix}.x_norm")));
        out.extend(self.psi.tensors_mut(&format!("{prefix}.psi")));
        out
    }
}

// ---------------------------------------------------------------------------
// Multiscale spatial attention

/// Three parallel single-channel attention maps at kernel sizes 3, 5, 7
/// (padding keeps extents), each squashed by a sigmoid, summed into one map
/// in (0, 3), which rescales the input elementwise.
#[derive(Clone, Debug)]
pub struct MsaParams<E> {
    pub conv3: Conv3dParams<E>,
    pub conv5: Conv3dParams<E>,
    pub conv7: Conv3dParams<E>,
}

pub struct MsaCache<E> {
    x: Tensor<E>,
    maps: [Tensor<E>; 3],
    combined: Tensor<E>,
}

impl<E> MsaCache<E> {
    /// The summed attention map `[N, 1, D, H, W]`, each value in (0, 3) —
    /// three sigmoids added together. Kept accessible for inspection and
    /// visualization.
    pub fn attention_sum(&self) -> &Tensor<E> {
        &self.combined
    }
}

impl<E: Scalar> MsaParams<E> {
    pub fn zeros(channels: usize) -> Self {
        MsaParams {
            conv3: Conv3dParams::zeros(ConvSpec::same(channels, 1, 3)),
            conv5: Conv3dParams::zeros(ConvSpec::same(channels, 1, 5)),
            conv7: Conv3dParams::zeros(ConvSpec::same(channels, 1, 7)),
        }
    }

    fn branches(&self) -> [&Conv3dParams<E>; 3] {
        [&self.conv3, &self.conv5, &self.conv7]
    }

    /// out = x * (sigmoid(conv3(x)) + sigmoid(conv5(x)) + sigmoid(conv7(x)))
    pub fn forward(&self, x: &Tensor<E>) -> Result<(Tensor<E>, MsaCache<E>)> {
        let mut maps: Vec<Tensor<E>> = Vec::with_capacity(3);
        for conv in self.branches() {
            maps.push(activation(&conv.forward(x)?, Activation::Sigmoid));
        }
        let mut combined = maps[0].clone();
        combined.add_assign(&maps[1])?;
        combined.add_assign(&maps[2])?;
        let out = elementwise(x, &combined, ElemOp::Mul)?;
        let cache = MsaCache {
            x: x.clone(),
            maps: [maps[0].clone(), maps[1].clone(), maps[2].clone()],
            combined,
        };
        Ok((out, cache))
    }

    /// Returns (grad_input, parameter gradients).
    pub fn backward(&self, grad_out: &Tensor<E>, cache: &MsaCache<E>) -> Result<(Tensor<E>, Self)> {
        let (mut g_x, g_combined) =
            elementwise_backward(grad_out, &cache.x, &cache.combined, ElemOp::Mul)?;
        let mut branch_grads: Vec<Conv3dParams<E>> = Vec::with_capacity(3);
        for (conv, map) in self.branches().into_iter().zip(&cache.maps) {
            let g_logits = activation_backward(&g_combined, map, Activation::Sigmoid)?;
            let (g_xb, g_conv) = conv.backward(&g_logits, &cache.x)?;
            g_x.add_assign(&g_xb)?;
            branch_grads.push(g_conv);
        }
        let g7 = branch_grads.pop().expect("three branches");
        let g5 = branch_grads.pop().expect("three branches");
        let g3 = branch_grads.pop().expect("three branches");
        Ok((g_x, MsaParams { conv3: g3, conv5: g5, conv7: g7 }))
    }
}

impl<E: Scalar> ParamSet<E> for MsaParams<E> {
    fn tensors(&self, prefix: &str) -> Vec<(String, &Tensor<E>)> {
        let mut out = self.conv3.tensors(&format!("{prefix}.conv3"));
        out.extend(self.conv5.tensors(&format!("{prefix}.conv5")));
        out.extend(self.conv7.tensors(&format!("{prefix}.conv7")));
        out
    }

    fn tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<E>)> {
        let mut out = self.conv3.tensors_mut(&format!("{prefix}.conv3"));
        out.extend(self.conv5.tensors_mut(&format!("{prefix}.conv5")));
        out.extend(self.conv7.tensors_mut(&format!("{prefix}.conv7")));
        out
    }
}
