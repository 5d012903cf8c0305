//! Minimal tensor library with explicit forward and backward passes for the
//! fixed layer set the fusion network needs.
//!
//! Layers are plain structs owning their parameters. `forward` takes `&self`
//! so a trained model can be shared across threads; `backward` takes the
//! forward input again (callers keep their own activations) and accumulates
//! parameter gradients into each parameter's gradient buffer.

mod activation;
mod adam;
mod conv;
mod deform;
mod gemm;
mod init;
mod loss;
mod resblock;
mod scalar;
mod shuffle;
mod tensor;

pub use activation::{leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward, LEAKY_SLOPE};
pub use adam::{adam_step, AdamConfig, AdamState, LrSchedule};
pub use conv::{Conv2d, ConvTranspose2d};
pub use deform::{bilinear_sample, DeformConv2d, DEFORM_KERNEL, DEFORM_OFFSET_CHANNELS};
pub use init::Initializer;
pub use loss::{l1_loss, l1_loss_backward};
pub use resblock::{ResBlock, ResBlockCache};
pub use scalar::Scalar;
pub use shuffle::{pixel_shuffle, pixel_unshuffle, upsample_bilinear2x, upsample_bilinear2x_backward};
pub use tensor::Tensor;
