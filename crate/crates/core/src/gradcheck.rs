//! Central finite-difference verification of every hand-written backward
//! pass, from single kernels up to the assembled network.
//!
//! Each check builds small randomized inputs, takes the analytic gradient of
//! a scalar objective (a fixed random weighting of the op's output), then
//! re-derives that gradient numerically with central differences in double
//! precision. The battery is what `voxelseg gradcheck` runs and what the
//! integration suite pins.

use crate::error::Result;
use crate::model::{
    model_backward, model_forward, AttentionGateParams, ModelConfig, MsaParams, ParamSet,
    ResBlockParams,
};
use crate::tensor::{
    activation, activation_backward, concat_channels, conv3d, conv3d_backward, conv_transpose3d,
    conv_transpose3d_backward, elementwise, elementwise_backward, group_norm, group_norm_backward,
    maxpool3d, maxpool3d_backward, split_channels, Activation, ConvSpec, ElemOp, Tensor,
};
use crate::train::{init_params, soft_dice_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step. Double precision keeps truncation (~h²) and
/// roundoff (~eps/h) error both far below the tolerances used here.
pub const FD_STEP: f64 = 1e-4;

/// Relative error uses max(|analytic|, |numeric|, FLOOR) as denominator so
/// near-zero gradients are judged on absolute error instead of blowing up.
const REL_FLOOR: f64 = 1e-3;

/// A coordinate counts as differentiable only if finite differences at h and
/// h/2 agree this closely. Bumping a parameter deep in the network shifts
/// every downstream preactivation, and when one lands within the step of a
/// ReLU kink or a pool tie, the difference quotient measures a blend of two
/// subgradients — a property of the measurement, not of the backward pass —
/// so those coordinates are skipped (with a cap, see SMOOTH_SKIP_CAP).
const SMOOTH_TOL: f64 = 1e-5;

/// A backward-pass bug shows up at smooth coordinates too, so skipping a few
/// non-smooth ones cannot hide it; skipping most of them could. More skips
/// than this fraction fails the check outright.
const SMOOTH_SKIP_CAP: f64 = 0.25;

#[derive(Clone, Debug)]
pub struct CheckRow {
    pub label: String,
    pub max_rel: f64,
    pub tol: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel <= self.tol
    }
}

#[derive(Clone, Debug, Default)]
pub struct BatteryReport {
    pub rows: Vec<CheckRow>,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }

    /// Fixed-width text table, one row per check.
    pub fn table(&self) -> String {
        let mut out = format!("{:<28} {:>12} {:>10} {:>8}\n", "check", "max rel err", "tol", "result");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<28} {:>12.3e} {:>10.0e} {:>8}\n",
                r.label,
                r.max_rel,
                r.tol,
                if r.passed() { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Draws kept away from zero so ReLU checks never straddle the kink.
fn uniform_off_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-1.0..1.0);
            v.signum() * (0.05 + 0.95 * v.abs())
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Objective weights with magnitude in [0.5, 1.5] and random sign, so no
/// output coordinate is accidentally ignored and sums do not cancel to zero.
fn probe(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.5..1.5);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape")
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn rel(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Worst relative error over `coords` of `x` (all coordinates when empty),
/// comparing `analytic` against a central difference of `eval`.
fn fd_tensor(
    x: &mut Tensor<f64>,
    analytic: &Tensor<f64>,
    coords: &[usize],
    mut eval: impl FnMut(&Tensor<f64>) -> Result<f64>,
) -> Result<f64> {
    let all: Vec<usize>;
    let idxs = if coords.is_empty() {
        all = (0..x.numel()).collect();
        &all
    } else {
        coords
    };
    let mut worst = 0.0f64;
    for &i in idxs {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + FD_STEP;
        let lp = eval(x)?;
        x.data_mut()[i] = orig - FD_STEP;
        let lm = eval(x)?;
        x.data_mut()[i] = orig;
        worst = worst.max(rel(analytic.data()[i], (lp - lm) / (2.0 * FD_STEP)));
    }
    Ok(worst)
}

#[derive(Default)]
struct FilteredOutcome {
    max_rel: f64,
    checked: usize,
    skipped: usize,
}

impl FilteredOutcome {
    /// Two central differences per coordinate: h for the primary estimate,
    /// h/2 as a consistency witness. Disagreement marks a non-smooth point.
    fn measure(
        &mut self,
        analytic: f64,
        mut eval_at: impl FnMut(f64) -> Result<f64>,
    ) -> Result<()> {
        let n1 = (eval_at(FD_STEP)? - eval_at(-FD_STEP)?) / (2.0 * FD_STEP);
        let n2 = (eval_at(FD_STEP / 2.0)? - eval_at(-FD_STEP / 2.0)?) / FD_STEP;
        if rel(n1, n2) > SMOOTH_TOL {
            self.skipped += 1;
        } else {
            self.checked += 1;
            self.max_rel = self.max_rel.max(rel(analytic, n2));
        }
        Ok(())
    }

    /// The verdict: worst error over checked coordinates, or outright failure
    /// when too few coordinates were measurable.
    fn verdict(&self) -> f64 {
        let total = self.checked + self.skipped;
        if total == 0 || (self.skipped as f64) > SMOOTH_SKIP_CAP * total as f64 {
            return f64::INFINITY;
        }
        self.max_rel
    }
}

/// Same comparison over every coordinate of every tensor in a parameter set
/// (or a random sample of `per_tensor` coordinates when nonzero).
fn fd_params<P: ParamSet<f64> + Clone>(
    params: &P,
    grads: &P,
    per_tensor: usize,
    rng: &mut ChaCha8Rng,
    mut eval: impl FnMut(&P) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let n_tensors = params.tensors("").len();
    for ti in 0..n_tensors {
        let numel = params.tensors("")[ti].1.numel();
        let coords: Vec<usize> = if per_tensor == 0 || per_tensor >= numel {
            (0..numel).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..numel)).collect()
        };
        for ci in coords {
            let mut bumped = params.clone();
            let orig = bumped.tensors("")[ti].1.data()[ci];
            bumped.tensors_mut("")[ti].1.data_mut()[ci] = orig + FD_STEP;
            let lp = eval(&bumped)?;
            bumped.tensors_mut("")[ti].1.data_mut()[ci] = orig - FD_STEP;
            let lm = eval(&bumped)?;
            let analytic = grads.tensors("")[ti].1.data()[ci];
            worst = worst.max(rel(analytic, (lp - lm) / (2.0 * FD_STEP)));
        }
    }
    Ok(worst)
}

/// Gamma near one and beta/bias near zero keep normalized activations in a
/// healthy range; plain centered draws for everything else.
fn randomize<P: ParamSet<f64>>(params: &mut P, rng: &mut ChaCha8Rng) {
    for (name, t) in params.tensors_mut("") {
        let (scale, center) = if name.ends_with(".gamma") {
            (0.1, 1.0)
        } else if name.ends_with(".beta") || name.ends_with(".bias") {
            (0.1, 0.0)
        } else {
            (0.35, 0.0)
        };
        for v in t.data_mut() {
            *v = center + scale * rng.random_range(-1.0..1.0);
        }
    }
}

const SHAPE: [usize; 5] = [1, 2, 4, 4, 4];

fn check_relu(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut x = uniform_off_zero(&SHAPE, rng);
    let w = probe(&SHAPE, rng);
    let y = activation(&x, Activation::Relu);
    let analytic = activation_backward(&w, &y, Activation::Relu)?;
    let max_rel =
        fd_tensor(&mut x, &analytic, &[], |x| Ok(dot(&activation(x, Activation::Relu), &w)))?;
    Ok(CheckRow { label: "relu".into(), max_rel, tol: 1e-6 })
}

fn check_sigmoid(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut x = uniform(&SHAPE, rng, -3.0, 3.0);
    let w = probe(&SHAPE, rng);
    let y = activation(&x, Activation::Sigmoid);
    let analytic = activation_backward(&w, &y, Activation::Sigmoid)?;
    let max_rel =
        fd_tensor(&mut x, &analytic, &[], |x| Ok(dot(&activation(x, Activation::Sigmoid), &w)))?;
    Ok(CheckRow { label: "sigmoid".into(), max_rel, tol: 1e-6 })
}

fn check_elementwise(op: ElemOp, label: &str, rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut a = uniform(&SHAPE, rng, -1.0, 1.0);
    let mut b = uniform(&SHAPE, rng, -1.0, 1.0);
    let w = probe(&SHAPE, rng);
    let (ga, gb) = elementwise_backward(&w, &a, &b, op)?;
    let mut max_rel = {
        let b = &b;
        fd_tensor(&mut a, &ga, &[], |a| Ok(dot(&elementwise(a, b, op)?, &w)))?
    };
    {
        let a = &a;
        max_rel = max_rel.max(fd_tensor(&mut b, &gb, &[], |b| {
            Ok(dot(&elementwise(a, b, op)?, &w))
        })?);
    }
    Ok(CheckRow { label: label.into(), max_rel, tol: 1e-6 })
}

fn check_mul_broadcast(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut a = uniform(&[1, 3, 4, 4, 4], rng, -1.0, 1.0);
    let mut b = uniform(&[1, 1, 4, 4, 4], rng, -1.0, 1.0);
    let w = probe(&[1, 3, 4, 4, 4], rng);
    let (ga, gb) = elementwise_backward(&w, &a, &b, ElemOp::Mul)?;
    let mut max_rel = {
        let b = &b;
        fd_tensor(&mut a, &ga, &[], |a| Ok(dot(&elementwise(a, b, ElemOp::Mul)?, &w)))?
    };
    {
        let a = &a;
        max_rel = max_rel.max(fd_tensor(&mut b, &gb, &[], |b| {
            Ok(dot(&elementwise(a, b, ElemOp::Mul)?, &w))
        })?);
    }
    Ok(CheckRow { label: "mul_broadcast".into(), max_rel, tol: 1e-6 })
}

fn check_soft_dice(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let shape = [2, 3, 4, 4, 4];
    let mut pred = uniform(&shape, rng, 0.05, 0.95);
    let n: usize = shape.iter().product();
    let target = Tensor::from_vec(
        &shape,
        (0..n).map(|_| f64::from(rng.random::<bool>())).collect::<Vec<f64>>(),
    )?;
    let (_, analytic) = soft_dice_loss(&pred, &target, 1.0)?;
    let max_rel = fd_tensor(&mut pred, &analytic, &[], |p| {
        Ok(soft_dice_loss(p, &target, 1.0)?.0)
    })?;
    Ok(CheckRow { label: "soft_dice_loss".into(), max_rel, tol: 1e-6 })
}

fn check_conv3d(label: &str, spec: ConvSpec, rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut x = uniform(&[1, spec.in_channels, 4, 4, 4], rng, -1.0, 1.0);
    let k = spec.kernel;
    let mut wt =
        uniform(&[spec.out_channels, spec.in_channels, k, k, k], rng, -0.5, 0.5);
    let mut b = uniform(&[spec.out_channels], rng, -0.5, 0.5);
    let out = conv3d(&x, &wt, &b, &spec)?;
    let w = probe(out.shape(), rng);
    let (gx, gw, gb) = conv3d_backward(&w, &x, &wt, &spec)?;
    let mut max_rel = {
        let (wt, b) = (&wt, &b);
        fd_tensor(&mut x, &gx, &[], |x| Ok(dot(&conv3d(x, wt, b, &spec)?, &w)))?
    };
    {
        let (x, b) = (&x, &b);
        max_rel =
            max_rel.max(fd_tensor(&mut wt, &gw, &[], |wt| Ok(dot(&conv3d(x, wt, b, &spec)?, &w)))?);
    }
    {
        let (x, wt) = (&x, &wt);
        max_rel =
            max_rel.max(fd_tensor(&mut b, &gb, &[], |b| Ok(dot(&conv3d(x, wt, b, &spec)?, &w)))?);
    }
    Ok(CheckRow { label: label.into(), max_rel, tol: 1e-5 })
}

fn check_conv_transpose(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let (cin, cout) = (3, 2);
    let mut x = uniform(&[1, cin, 3, 3, 3], rng, -1.0, 1.0);
    let mut wt = uniform(&[cin, cout, 2, 2, 2], rng, -0.5, 0.5);
    let mut b = uniform(&[cout], rng, -0.5, 0.5);
    let out = conv_transpose3d(&x, &wt, &b, 2, 2)?;
    let w = probe(out.shape(), rng);
    let (gx, gw, gb) = conv_transpose3d_backward(&w, &x, &wt, 2, 2)?;
    let mut max_rel = {
        let (wt, b) = (&wt, &b);
        fd_tensor(&mut x, &gx, &[], |x| Ok(dot(&conv_transpose3d(x, wt, b, 2, 2)?, &w)))?
    };
    {
        let (x, b) = (&x, &b);
        max_rel = max_rel.max(fd_tensor(&mut wt, &gw, &[], |wt| {
            Ok(dot(&conv_transpose3d(x, wt, b, 2, 2)?, &w))
        })?);
    }
    {
        let (x, wt) = (&x, &wt);
        max_rel = max_rel.max(fd_tensor(&mut b, &gb, &[], |b| {
            Ok(dot(&conv_transpose3d(x, wt, b, 2, 2)?, &w))
        })?);
    }
    Ok(CheckRow { label: "conv_transpose3d".into(), max_rel, tol: 1e-5 })
}

fn check_maxpool(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    // a shuffled ramp: every pair of values differs by at least 0.01, so an
    // FD bump of 1e-4 can never change which voxel wins a window
    let n: usize = SHAPE.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    let mut x = Tensor::from_vec(&SHAPE, vals)?;
    let (out, argmax) = maxpool3d(&x)?;
    let w = probe(out.shape(), rng);
    let analytic = maxpool3d_backward(&w, &argmax, x.shape())?;
    let max_rel = fd_tensor(&mut x, &analytic, &[], |x| Ok(dot(&maxpool3d(x)?.0, &w)))?;
    Ok(CheckRow { label: "maxpool3d".into(), max_rel, tol: 1e-5 })
}

fn check_group_norm(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let shape = [1, 4, 3, 3, 3];
    let mut x = uniform(&shape, rng, -1.0, 1.0);
    let mut gamma = uniform(&[4], rng, 0.8, 1.2);
    let mut beta = uniform(&[4], rng, -0.2, 0.2);
    let (out, cache) = group_norm(&x, &gamma, &beta, 2, 1e-5)?;
    let w = probe(out.shape(), rng);
    let (gx, gg, gb) = group_norm_backward(&w, &x, &gamma, &cache)?;
    let mut max_rel = {
        let (gamma, beta) = (&gamma, &beta);
        fd_tensor(&mut x, &gx, &[], |x| Ok(dot(&group_norm(x, gamma, beta, 2, 1e-5)?.0, &w)))?
    };
    {
        let (x, beta) = (&x, &beta);
        max_rel = max_rel.max(fd_tensor(&mut gamma, &gg, &[], |g| {
            Ok(dot(&group_norm(x, g, beta, 2, 1e-5)?.0, &w))
        })?);
    }
    {
        let (x, gamma) = (&x, &gamma);
        max_rel = max_rel.max(fd_tensor(&mut beta, &gb, &[], |b| {
            Ok(dot(&group_norm(x, gamma, b, 2, 1e-5)?.0, &w))
        })?);
    }
    Ok(CheckRow { label: "group_norm".into(), max_rel, tol: 1e-5 })
}

fn check_concat(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut a = uniform(&[1, 2, 4, 4, 4], rng, -1.0, 1.0);
    let mut b = uniform(&[1, 3, 4, 4, 4], rng, -1.0, 1.0);
    let out = concat_channels(&a, &b)?;
    let w = probe(out.shape(), rng);
    let (ga, gb) = split_channels(&w, 2)?;
    let mut max_rel = {
        let b = &b;
        fd_tensor(&mut a, &ga, &[], |a| Ok(dot(&concat_channels(a, b)?, &w)))?
    };
    {
        let a = &a;
        max_rel = max_rel.max(fd_tensor(&mut b, &gb, &[], |b| Ok(dot(&concat_channels(a, b)?, &w)))?);
    }
    Ok(CheckRow { label: "concat_channels".into(), max_rel, tol: 1e-5 })
}

fn check_resblock(label: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut block = ResBlockParams::<f64>::zeros(cin, cout);
    randomize(&mut block, rng);
    let mut x = uniform(&[1, cin, 4, 4, 4], rng, -1.0, 1.0);
    let (out, cache) = block.forward(&x)?;
    let w = probe(out.shape(), rng);
    let (gx, gparams) = block.backward(&w, &cache)?;
    let mut max_rel = {
        let block = &block;
        fd_tensor(&mut x, &gx, &[], |x| Ok(dot(&block.forward(x)?.0, &w)))?
    };
    max_rel = max_rel.max(fd_params(&block, &gparams, 0, rng, |p| Ok(dot(&p.forward(&x)?.0, &w)))?);
    Ok(CheckRow { label: label.into(), max_rel, tol: 1e-5 })
}

fn check_attention_gate(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let width = 2;
    let mut gate = AttentionGateParams::<f64>::zeros(width);
    randomize(&mut gate, rng);
    let mut g = uniform(&[1, width, 4, 4, 4], rng, -1.0, 1.0);
    let mut x = uniform(&[1, width, 4, 4, 4], rng, -1.0, 1.0);
    let (out, cache) = gate.forward(&g, &x)?;
    let w = probe(out.shape(), rng);
    let (gg, gx, gparams) = gate.backward(&w, &cache)?;
    let mut max_rel = {
        let (gate, x) = (&gate, &x);
        fd_tensor(&mut g, &gg, &[], |g| Ok(dot(&gate.forward(g, x)?.0, &w)))?
    };
    {
        let (gate, g) = (&gate, &g);
        max_rel = max_rel.max(fd_tensor(&mut x, &gx, &[], |x| Ok(dot(&gate.forward(g, x)?.0, &w)))?);
    }
    max_rel =
        max_rel.max(fd_params(&gate, &gparams, 0, rng, |p| Ok(dot(&p.forward(&g, &x)?.0, &w)))?);
    Ok(CheckRow { label: "attention_gate".into(), max_rel, tol: 1e-5 })
}

fn check_msa(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let channels = 2;
    let mut msa = MsaParams::<f64>::zeros(channels);
    randomize(&mut msa, rng);
    let mut x = uniform(&[1, channels, 4, 4, 4], rng, -1.0, 1.0);
    let (out, cache) = msa.forward(&x)?;
    let w = probe(out.shape(), rng);
    let (gx, gparams) = msa.backward(&w, &cache)?;
    let mut max_rel = {
        let msa = &msa;
        fd_tensor(&mut x, &gx, &[], |x| Ok(dot(&msa.forward(x)?.0, &w)))?
    };
    max_rel = max_rel.max(fd_params(&msa, &gparams, 0, rng, |p| Ok(dot(&p.forward(&x)?.0, &w)))?);
    Ok(CheckRow { label: "multiscale_attention".into(), max_rel, tol: 1e-5 })
}

fn check_full_model(seed: u64, rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let config = ModelConfig {
        in_channels: 2,
        out_classes: 3,
        base_filters: 2,
        levels: 2,
        bottleneck_filters: 8,
        seed,
    };
    let params = init_params::<f64>(&config, seed)?;
    let mut x = uniform(&[1, 2, 8, 8, 8], rng, -1.0, 1.0);
    let (probs, cache) = model_forward(&params, &x)?;
    let w = probe(probs.shape(), rng);
    let (gparams, gx) = model_backward(&params, &cache, &w)?;
    let mut outcome = FilteredOutcome::default();

    for _ in 0..12 {
        let i = rng.random_range(0..x.numel());
        let orig = x.data()[i];
        let analytic = gx.data()[i];
        outcome.measure(analytic, |delta| {
            x.data_mut()[i] = orig + delta;
            let l = dot(&model_forward(&params, &x)?.0, &w);
            x.data_mut()[i] = orig;
            Ok(l)
        })?;
    }

    let n_tensors = params.tensors("").len();
    for ti in 0..n_tensors {
        let numel = params.tensors("")[ti].1.numel();
        for _ in 0..2.min(numel) {
            let ci = rng.random_range(0..numel);
            let analytic = gparams.tensors("")[ti].1.data()[ci];
            let mut bumped = params.clone();
            let orig = bumped.tensors("")[ti].1.data()[ci];
            outcome.measure(analytic, |delta| {
                bumped.tensors_mut("")[ti].1.data_mut()[ci] = orig + delta;
                Ok(dot(&model_forward(&bumped, &x)?.0, &w))
            })?;
        }
    }
    Ok(CheckRow { label: "full_model_sampled".into(), max_rel: outcome.verdict(), tol: 1e-4 })
}

/// Runs every check with derived per-check random streams.
pub fn run_battery(seed: u64) -> Result<BatteryReport> {
    let mut rows = Vec::new();
    let mut stream = 1u64..;
    let rng = |s: &mut std::ops::RangeFrom<u64>| stream_rng(seed, s.next().expect("stream"));

    rows.push(check_relu(&mut rng(&mut stream))?);
    rows.push(check_sigmoid(&mut rng(&mut stream))?);
    rows.push(check_elementwise(ElemOp::Add, "add", &mut rng(&mut stream))?);
    rows.push(check_elementwise(ElemOp::Mul, "mul", &mut rng(&mut stream))?);
    rows.push(check_mul_broadcast(&mut rng(&mut stream))?);
    rows.push(check_soft_dice(&mut rng(&mut stream))?);
    rows.push(check_conv3d("conv3d_k3_same", ConvSpec::same(2, 3, 3), &mut rng(&mut stream))?);
    rows.push(check_conv3d("conv3d_k1", ConvSpec::same(3, 2, 1), &mut rng(&mut stream))?);
    rows.push(check_conv3d(
        "conv3d_k3_stride2",
        ConvSpec::new(2, 2, 3, 2, 1),
        &mut rng(&mut stream),
    )?);
    rows.push(check_conv_transpose(&mut rng(&mut stream))?);
    rows.push(check_maxpool(&mut rng(&mut stream))?);
    rows.push(check_group_norm(&mut rng(&mut stream))?);
    rows.push(check_concat(&mut rng(&mut stream))?);
    rows.push(check_resblock("resblock_identity", 2, 2, &mut rng(&mut stream))?);
    rows.push(check_resblock("resblock_projection", 2, 4, &mut rng(&mut stream))?);
    rows.push(check_attention_gate(&mut rng(&mut stream))?);
    rows.push(check_msa(&mut rng(&mut stream))?);
    rows.push(check_full_model(seed, &mut rng(&mut stream))?);
    Ok(BatteryReport { rows })
}
