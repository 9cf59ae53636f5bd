//! Pointwise nonlinearities and their adjoints.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Applies the nonlinearity elementwise.
pub fn activation<E: Scalar>(input: &Tensor<E>, act: Activation) -> Tensor<E> {
    match act {
        // NaN passes through rather than comparing false and clamping to
        // zero: silently absorbing corrupted values would let a diverged
        // run keep training on garbage.
        Activation::Relu => {
            input.map(|v| if v > E::zero() || v.is_nan() { v } else { E::zero() })
        }
        Activation::Sigmoid => input.map(sigmoid_scalar),
    }
}

#[inline]
fn sigmoid_scalar<E: Scalar>(v: E) -> E {
    // Evaluate through exp of a non-positive argument so neither branch overflows.
    if v >= E::zero() {
        let e = (-v).exp();
        E::one() / (E::one() + e)
    } else {
        let e = v.exp();
        e / (E::one() + e)
    }
}

/// Chain rule through the nonlinearity. `output` must be the forward result
/// for the same input: ReLU uses d/dx = [output > 0], sigmoid uses
/// d/dx = output * (1 - output).
pub fn activation_backward<E: Scalar>(
    grad_out: &Tensor<E>,
    output: &Tensor<E>,
    act: Activation,
) -> Result<Tensor<E>> {
    if grad_out.shape() != output.shape() {
        return Err(Error::Shape(format!(
            "activation backward: grad shape {:?} does not match output shape {:?}",
            grad_out.shape(),
            output.shape()
        )));
    }
    let mut grad = Tensor::zeros(grad_out.shape());
    let g = grad.data_mut();
    match act {
        Activation::Relu => {
            for ((dst, &go), &y) in g.iter_mut().zip(grad_out.data()).zip(output.data()) {
                *dst = if y > E::zero() {
                    go
                } else if y.is_nan() {
                    y
                } else {
                    E::zero()
                };
            }
        }
        Activation::Sigmoid => {
            for ((dst, &go), &y) in g.iter_mut().zip(grad_out.data()).zip(output.data()) {
                *dst = go * y * (E::one() - y);
            }
        }
    }
    Ok(grad)
}
