//! Architecture definition: configuration, blocks, the assembled network,
//! capacity accounting, and checkpoint I/O.

mod accounting;
mod blocks;
mod checkpoint;
mod config;
mod network;

pub use accounting::{flops_estimate, param_count, param_count_for};
pub use blocks::{
    AttentionGateCache, AttentionGateParams, Conv3dParams, GroupNormParams, MsaCache, MsaParams,
    ParamSet, ResBlockCache, ResBlockParams, NORM_EPS,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, MANIFEST_NAME};
pub use config::{gate_intermediate, norm_groups, ModelConfig};
pub use network::{
    model_backward, model_forward, DecoderLevel, EncoderLevel, ModelCache, ModelParams,
};
