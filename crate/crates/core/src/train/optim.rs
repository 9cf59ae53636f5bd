//! Adam optimizer and a reduce-on-plateau learning-rate schedule.

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamSet};
use crate::tensor::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates plus the step counter. Moments reuse the
/// parameter container so they traverse in the same name order as the
/// parameters they track.
pub struct AdamState<E: Scalar> {
    m: ModelParams<E>,
    v: ModelParams<E>,
    step: u64,
}

impl<E: Scalar> AdamState<E> {
    pub fn new(params: &ModelParams<E>) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update over a flat slice: the per-element rule, exposed so tests
/// can drive a scalar problem against a hand-written reference.
pub fn adam_update_slice(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
) {
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    for i in 0..w.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        w[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Applies one optimizer step in place. Parameters, gradients, and moments
/// are zipped by name; element arithmetic runs in f64 so f32 parameters see
/// the same update rule the scalar reference implements.
pub fn adam_step<E: Scalar>(
    params: &mut ModelParams<E>,
    grads: &ModelParams<E>,
    state: &mut AdamState<E>,
    lr: f64,
) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(Error::Validation(format!("learning rate {lr} must be non-negative")));
    }
    state.step += 1;
    let step = state.step;
    let mut ps = params.tensors_mut("");
    let gs = grads.tensors("");
    let mut ms = state.m.tensors_mut("");
    let mut vs = state.v.tensors_mut("");
    for (((p, g), m), v) in ps.iter_mut().zip(&gs).zip(ms.iter_mut()).zip(vs.iter_mut()) {
        debug_assert_eq!(p.0, g.0);
        let pt = p.1.data_mut();
        let gt = g.1.data();
        let mt = m.1.data_mut();
        let vt = v.1.data_mut();
        let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
        for i in 0..pt.len() {
            let gi = gt[i].to_f64_lossy();
            let mi = ADAM_BETA1 * mt[i].to_f64_lossy() + (1.0 - ADAM_BETA1) * gi;
            let vi = ADAM_BETA2 * vt[i].to_f64_lossy() + (1.0 - ADAM_BETA2) * gi * gi;
            mt[i] = E::from_f64_lossy(mi);
            vt[i] = E::from_f64_lossy(vi);
            let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + ADAM_EPS);
            let wi = pt[i].to_f64_lossy() - update;
            pt[i] = E::from_f64_lossy(wi);
        }
    }
    Ok(())
}

/// Halves (by `factor`) the learning rate after `patience` epochs without a
/// relative improvement of at least `threshold` over the best loss seen.
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: u32,
    threshold: f64,
    best: Option<f64>,
    stagnant: u32,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: u32) -> Self {
        PlateauScheduler { lr, factor, patience, threshold: 1e-4, best: None, stagnant: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's validation loss; returns the rate to use next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        match self.best {
            None => {
                self.best = Some(loss);
                self.stagnant = 1;
            }
            Some(best) if loss < best - self.threshold * best.abs() => {
                self.best = Some(loss);
                self.stagnant = 1;
            }
            Some(_) => {
                self.stagnant += 1;
                // patience epochs elapsed since the last improvement
                if self.stagnant == self.patience + 1 {
                    self.lr *= self.factor;
                    self.stagnant = 0;
                }
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    /// Minimize w² from w=1: gradient 2w, the textbook single-variable run.
    fn scalar_reference(steps: usize, lr: f64) -> f64 {
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=steps {
            let g = 2.0 * w;
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g;
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m / (1.0 - ADAM_BETA1.powi(t as i32));
            let v_hat = v / (1.0 - ADAM_BETA2.powi(t as i32));
            w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        w
    }

    #[test]
    fn slice_update_matches_the_scalar_reference() {
        let mut w = [1.0f64];
        let (mut m, mut v) = ([0.0f64], [0.0f64]);
        for t in 1..=10 {
            let g = [2.0 * w[0]];
            adam_update_slice(&mut w, &g, &mut m, &mut v, t, 0.1);
        }
        let expect = scalar_reference(10, 0.1);
        assert!((w[0] - expect).abs() < 1e-12, "{} vs {expect}", w[0]);
    }

    #[test]
    fn first_step_moves_by_roughly_lr_against_the_gradient() {
        // with zero moments, m_hat/ (sqrt(v_hat)+eps) ≈ sign(g) on step one
        let mut w = [5.0f64, -3.0];
        let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        adam_update_slice(&mut w, &[0.4, -0.7], &mut m, &mut v, 1, 0.01);
        assert!((w[0] - (5.0 - 0.01)).abs() < 1e-6);
        assert!((w[1] - (-3.0 + 0.01)).abs() < 1e-6);
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            in_channels: 1,
            out_classes: 2,
            base_filters: 2,
            levels: 1,
            bottleneck_filters: 4,
            seed: 0,
        }
    }

    #[test]
    fn model_step_agrees_with_the_slice_rule() {
        let cfg = tiny_config();
        let mut params = ModelParams::<f64>::zeros(&cfg).unwrap();
        for (_, t) in params.tensors_mut("") {
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                *v = 0.5 + 0.01 * i as f64;
            }
        }
        let mut grads = params.zeros_like();
        for (_, t) in grads.tensors_mut("") {
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                *v = 0.1 * (i as f64 - 2.0);
            }
        }
        // flatten a copy of every tensor and run the slice rule beside it
        let mut flat_w: Vec<f64> = params.tensors("").iter().flat_map(|(_, t)| t.data().to_vec()).collect();
        let flat_g: Vec<f64> = grads.tensors("").iter().flat_map(|(_, t)| t.data().to_vec()).collect();
        let mut flat_m = vec![0.0; flat_w.len()];
        let mut flat_v = vec![0.0; flat_w.len()];

        let mut state = AdamState::new(&params);
        for step in 1..=3 {
            adam_step(&mut params, &grads, &mut state, 0.05).unwrap();
            adam_update_slice(&mut flat_w, &flat_g, &mut flat_m, &mut flat_v, step, 0.05);
        }
        let after: Vec<f64> = params.tensors("").iter().flat_map(|(_, t)| t.data().to_vec()).collect();
        for (a, b) in after.iter().zip(&flat_w) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(state.step(), 3);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let cfg = tiny_config();
        let mut params = ModelParams::<f64>::zeros(&cfg).unwrap();
        for (_, t) in params.tensors_mut("") {
            t.data_mut().fill(1.25);
        }
        let grads = params.zeros_like();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.1).unwrap();
        for (name, t) in params.tensors("") {
            assert!(t.data().iter().all(|v| *v == 1.25), "{name} drifted");
        }
    }

    #[test]
    fn constant_loss_decays_exactly_once_per_patience_window() {
        let mut sched = PlateauScheduler::new(1.0, 0.5, 4);
        let mut decays = vec![];
        for epoch in 0..5 {
            let before = sched.lr();
            let after = sched.observe(0.7);
            if after < before {
                decays.push(epoch);
            }
        }
        // first observation sets the baseline; four stagnant epochs follow
        assert_eq!(decays, vec![4]);
        assert!((sched.lr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn steady_improvement_never_decays() {
        let mut sched = PlateauScheduler::new(1.0, 0.5, 2);
        let mut loss = 1.0;
        for _ in 0..20 {
            loss *= 0.9; // well past the relative threshold each epoch
            assert_eq!(sched.observe(loss), 1.0);
        }
    }

    #[test]
    fn improvement_every_third_epoch_resets_the_counter() {
        // patience 3: two stagnant epochs then an improvement never reaches
        // the decay point
        let mut sched = PlateauScheduler::new(1.0, 0.5, 3);
        let mut best = 1.0;
        for cycle in 0..6 {
            sched.observe(best);
            sched.observe(best);
            best *= 0.8;
            let lr = sched.observe(best);
            assert_eq!(lr, 1.0, "cycle {cycle}");
        }
    }

    #[test]
    fn rate_is_non_increasing() {
        let mut sched = PlateauScheduler::new(1.0, 0.5, 1);
        let mut s = 11u64;
        let mut prev = sched.lr();
        for _ in 0..50 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let loss = (s >> 33) as f64 / (1u64 << 33) as f64;
            let lr = sched.observe(loss);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn tiny_improvements_below_threshold_count_as_stagnation() {
        let mut sched = PlateauScheduler::new(1.0, 0.5, 2);
        sched.observe(1.0);
        // improvements of 1e-6 relative are inside the 1e-4 threshold
        sched.observe(1.0 - 1e-6);
        let lr = sched.observe(1.0 - 2e-6);
        assert!((lr - 0.5).abs() < 1e-15, "expected decay, lr={lr}");
    }
}
