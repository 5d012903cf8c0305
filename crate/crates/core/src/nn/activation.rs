use crate::error::Result;

use super::{Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let slope = T::cast(LEAKY_SLOPE);
    x.map(|v| if v >= T::zero() { v } else { slope * v })
}

/// Gradient through LeakyReLU given the forward input `x`.
pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let slope = T::cast(LEAKY_SLOPE);
    x.zip_map(grad_out, |v, g| if v >= T::zero() { g } else { slope * g })
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Gradient through the sigmoid given its forward output `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad_out, |s, g| g * s * (T::one() - s))
}
