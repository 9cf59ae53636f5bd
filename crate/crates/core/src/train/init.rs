//! Seeded parameter initialization.

use crate::error::Result;
use crate::model::{ModelConfig, ModelParams, ParamSet};
use crate::tensor::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds a fresh parameter set: convolution kernels drawn uniformly from
/// ±√(6 / ((c_a + c_b)·k³)) where c_a, c_b are the two leading kernel axes
/// (the fan channels — the bound is symmetric, so regular and transposed
/// layouts need no special-casing), biases and shift terms zero, scale terms
/// one. Draws happen in f64 in traversal order, then cast, so the same seed
/// produces the same network at any element precision.
pub fn init_params<E: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<E>> {
    let mut params = ModelParams::<E>::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in params.tensors_mut("") {
        if name.ends_with(".weight") && t.shape().len() == 5 {
            let fan: usize = (t.shape()[0] + t.shape()[1]) * t.shape()[2..].iter().product::<usize>();
            let bound = (6.0 / fan as f64).sqrt();
            for v in t.data_mut() {
                *v = E::from_f64_lossy(rng.random_range(-bound..bound));
            }
        } else if name.ends_with(".gamma") {
            // normalization scale: identity, no randomness consumed
            for v in t.data_mut() {
                *v = E::from_f64_lossy(1.0);
            }
        }
        // biases and normalization shifts stay zero from the template
    }
    Ok(params)
}
