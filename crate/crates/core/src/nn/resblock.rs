use crate::error::Result;

use super::{leaky_relu, leaky_relu_backward, Conv2d, Initializer, Scalar, Tensor};

pub const RESIDUAL_INIT_SCALE: f64 = 0.1;

/// `x + conv2(leaky_relu(conv1(x)))`, 3x3 convolutions, no normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<T: Scalar> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
}

/// Activations the backward pass needs.
#[derive(Debug, Clone)]
pub struct ResBlockCache<T: Scalar> {
    pre_act: Tensor<T>,
    act: Tensor<T>,
}

impl<T: Scalar> ResBlock<T> {
    /// The second conv starts scaled by [`RESIDUAL_INIT_SCALE`] so a fresh
    /// block stays close to the identity.
    pub fn new(init: &mut Initializer, channels: usize) -> Self {
        let conv1 = Conv2d::new(init, channels, channels, 3, 1);
        let mut conv2 = Conv2d::new(init, channels, channels, 3, 1);
        for w in conv2.weight.data_mut() {
            *w *= T::cast(RESIDUAL_INIT_SCALE);
        }
        Self { conv1, conv2 }
    }

    pub fn zeroed(channels: usize) -> Self {
        Self {
            conv1: Conv2d::zeroed(channels, channels, 3, 1),
            conv2: Conv2d::zeroed(channels, channels, 3, 1),
        }
    }

    /// Residual branch only.
    pub fn branch(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.conv2.forward(&leaky_relu(&self.conv1.forward(x)?))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ResBlockCache<T>)> {
        let pre_act = self.conv1.forward(x)?;
        let act = leaky_relu(&pre_act);
        let out = self.conv2.forward(&act)?.add(x)?;
        Ok((out, ResBlockCache { pre_act, act }))
    }

    pub fn backward(&mut self, x: &Tensor<T>, cache: &ResBlockCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g_act = self.conv2.backward(&cache.act, grad_out)?;
        let g_pre = leaky_relu_backward(&cache.pre_act, &g_act)?;
        let mut g_x = self.conv1.backward(x, &g_pre)?;
        g_x.add_assign(grad_out)?;
        Ok(g_x)
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 4] {
        let [a, b] = self.conv1.params_mut();
        let [c, d] = self.conv2.params_mut();
        [a, b, c, d]
    }

    pub fn params(&self) -> [&Tensor<T>; 4] {
        let [a, b] = self.conv1.params();
        let [c, d] = self.conv2.params();
        [a, b, c, d]
    }
}
