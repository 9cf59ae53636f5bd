//! Dense row-major tensors and the differentiable kernels built on them.
//!
//! Every kernel fixes its reduction order (channel, then kz, ky, kx ascending),
//! so outputs are bitwise identical across runs and thread counts; parallelism
//! only ever splits work across independent output elements.

mod activation;
mod conv;
mod norm;
mod pool;

pub use activation::{activation, activation_backward, Activation};
pub use conv::{
    conv3d, conv3d_backward, conv_transpose3d, conv_transpose3d_backward, ConvSpec,
};
pub use norm::{group_norm, group_norm_backward, GroupNormCache};
pub use pool::{maxpool3d, maxpool3d_backward};

use crate::error::{Error, Result};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar element type for numeric tensors. Training uses `f32`; gradient
/// verification runs the same code paths in `f64`.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + ToPrimitive + Sum + Send + Sync + Debug + Display + 'static
{
    const DTYPE_NAME: &'static str;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap()
    }

    fn to_f64_lossy(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap()
    }
}

impl Scalar for f32 {
    const DTYPE_NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const DTYPE_NAME: &'static str = "f64";
}

/// Dense N-dimensional array, contiguous and C-ordered (last axis fastest).
#[derive(Clone, PartialEq)]
pub struct Tensor<E> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Debug> Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<E: Copy> Tensor<E> {
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} implies {numel} elements, buffer holds {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero extent in shape {shape:?}");
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Linear offset of a multi-index (C-order).
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.shape[i], "index {index:?} out of shape {:?}", self.shape);
            off = off * self.shape[i] + ix;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> E {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: E) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn map<F: Copy, M: Fn(E) -> F>(&self, f: M) -> Tensor<F> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor<E>> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {shape:?}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data.clone() })
    }
}

impl<E: Scalar> Tensor<E> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, E::zero())
    }

    pub fn zeros_like(&self) -> Self {
        Self::full(&self.shape, E::zero())
    }

    pub fn scale(&self, s: E) -> Self {
        self.map(|v| v * s)
    }

    pub fn cast<F: Scalar>(&self) -> Tensor<F> {
        self.map(|v| F::from_f64_lossy(v.to_f64_lossy()))
    }

    /// Accumulates `other` into `self` elementwise. Shapes must match.
    pub fn add_assign(&mut self, other: &Tensor<E>) -> Result<()> {
        check_same_shape("add_assign", &self.shape, &other.shape)?;
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
        Ok(())
    }
}

pub(crate) fn check_same_shape(op: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        let axis = a
            .iter()
            .zip(b.iter())
            .position(|(x, y)| x != y)
            .map(|i| format!(" (first differing axis {i})"))
            .unwrap_or_else(|| " (rank mismatch)".to_string());
        return Err(Error::Shape(format!("{op}: {a:?} vs {b:?}{axis}")));
    }
    Ok(())
}

/// Splits [N, C, D, H, W] and errors with the axis name when the rank is wrong.
pub(crate) fn dims5(op: &str, shape: &[usize]) -> Result<[usize; 5]> {
    match shape {
        [n, c, d, h, w] => Ok([*n, *c, *d, *h, *w]),
        _ => Err(Error::Shape(format!("{op}: expected rank-5 [N,C,D,H,W], got {shape:?}"))),
    }
}

/// A value tensor paired with its gradient, shapes always matching.
#[derive(Clone, Debug)]
pub struct GradPair<E> {
    pub value: Tensor<E>,
    pub grad: Option<Tensor<E>>,
}

impl<E: Scalar> GradPair<E> {
    pub fn new(value: Tensor<E>) -> Self {
        GradPair { value, grad: None }
    }

    /// Adds a gradient contribution, allocating zeros on first touch.
    pub fn accumulate(&mut self, g: &Tensor<E>) -> Result<()> {
        check_same_shape("grad accumulate", self.value.shape(), g.shape())?;
        match &mut self.grad {
            Some(grad) => grad.add_assign(g),
            None => {
                self.grad = Some(g.clone());
                Ok(())
            }
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn cast<F: Scalar>(&self) -> GradPair<F> {
        GradPair { value: self.value.cast(), grad: self.grad.as_ref().map(|g| g.cast()) }
    }
}

/// Elementwise binary op kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Mul,
}

/// Elementwise `a op b`. `b` may be single-channel ([N,1,D,H,W]) against a
/// multi-channel `a`, in which case it broadcasts over the channel axis.
pub fn elementwise<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>, op: ElemOp) -> Result<Tensor<E>> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(&x, &y)| match op {
                ElemOp::Add => x + y,
                ElemOp::Mul => x * y,
            })
            .collect();
        return Ok(Tensor { shape: a.shape.clone(), data });
    }
    let [n, c, d, h, w] = dims5("elementwise lhs", a.shape())?;
    let [bn, bc, bd, bh, bw] = dims5("elementwise rhs", b.shape())?;
    if bn != n || bc != 1 || bd != d || bh != h || bw != w {
        return Err(Error::Shape(format!(
            "elementwise: {:?} vs {:?} is not broadcastable (rhs must match with C=1)",
            a.shape(),
            b.shape()
        )));
    }
    let vox = d * h * w;
    let mut out = a.clone();
    for ni in 0..n {
        let brow = &b.data()[ni * vox..(ni + 1) * vox];
        for ci in 0..c {
            let row = &mut out.data_mut()[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
            match op {
                ElemOp::Add => row.iter_mut().zip(brow).for_each(|(x, &y)| *x += y),
                ElemOp::Mul => row.iter_mut().zip(brow).for_each(|(x, &y)| *x *= y),
            }
        }
    }
    Ok(out)
}

/// Backward of [`elementwise`]: returns (grad_a, grad_b). For a broadcast `b`,
/// grad_b is reduced by summing over the channel axis in ascending order.
pub fn elementwise_backward<E: Scalar>(
    grad_out: &Tensor<E>,
    a: &Tensor<E>,
    b: &Tensor<E>,
    op: ElemOp,
) -> Result<(Tensor<E>, Tensor<E>)> {
    check_same_shape("elementwise backward", grad_out.shape(), a.shape())?;
    let broadcast = a.shape() != b.shape();
    let grad_a = match op {
        ElemOp::Add => grad_out.clone(),
        ElemOp::Mul => elementwise(grad_out, b, ElemOp::Mul)?,
    };
    let grad_b_full = match op {
        ElemOp::Add => grad_out.clone(),
        ElemOp::Mul => {
            let mut g = grad_out.clone();
            for (x, y) in g.data.iter_mut().zip(a.data().iter()) {
                *x *= *y;
            }
            g
        }
    };
    let grad_b = if broadcast {
        let [n, c, d, h, w] = dims5("elementwise lhs", a.shape())?;
        let vox = d * h * w;
        let mut reduced = Tensor::zeros(b.shape());
        for ni in 0..n {
            for ci in 0..c {
                let src = &grad_b_full.data()[(ni * c + ci) * vox..(ni * c + ci + 1) * vox];
                let dst = &mut reduced.data_mut()[ni * vox..(ni + 1) * vox];
                dst.iter_mut().zip(src).for_each(|(x, &y)| *x += y);
            }
        }
        reduced
    } else {
        grad_b_full
    };
    Ok((grad_a, grad_b))
}

/// Concatenates along the channel axis: [N,Ca,...] ++ [N,Cb,...] -> [N,Ca+Cb,...].
pub fn concat_channels<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let [n, ca, d, h, w] = dims5("concat lhs", a.shape())?;
    let [bn, cb, bd, bh, bw] = dims5("concat rhs", b.shape())?;
    if bn != n || bd != d || bh != h || bw != w {
        return Err(Error::Shape(format!(
            "concat_channels: batch/spatial mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let vox = d * h * w;
    let mut data = Vec::with_capacity((ca + cb) * n * vox);
    for ni in 0..n {
        data.extend_from_slice(&a.data()[ni * ca * vox..(ni + 1) * ca * vox]);
        data.extend_from_slice(&b.data()[ni * cb * vox..(ni + 1) * cb * vox]);
    }
    Tensor::from_vec(&[n, ca + cb, d, h, w], data)
}

/// Backward of [`concat_channels`]: splits grad_out back into the two parts.
pub fn split_channels<E: Scalar>(
    grad_out: &Tensor<E>,
    ca: usize,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let [n, c, d, h, w] = dims5("split", grad_out.shape())?;
    if ca == 0 || ca >= c {
        return Err(Error::Shape(format!("split_channels: ca={ca} out of range for C={c}")));
    }
    let cb = c - ca;
    let vox = d * h * w;
    let mut da = Vec::with_capacity(n * ca * vox);
    let mut db = Vec::with_capacity(n * cb * vox);
    for ni in 0..n {
        let base = ni * c * vox;
        da.extend_from_slice(&grad_out.data()[base..base + ca * vox]);
        db.extend_from_slice(&grad_out.data()[base + ca * vox..base + c * vox]);
    }
    Ok((Tensor::from_vec(&[n, ca, d, h, w], da)?, Tensor::from_vec(&[n, cb, d, h, w], db)?))
}
