//! Long/short exposure raw fusion for low-light imaging: data synthesis,
//! a fixed ISP, a small CPU autograd-free network toolkit, and LSFNet itself.

pub mod degrade;
pub mod error;
pub mod harness;
pub mod io;
pub mod isp;
pub mod lsfnet;
pub mod nn;
pub mod raw;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};
pub use isp::{IspConfig, ToneMode};
pub use raw::{IrradianceImage, PackedRaw, RawImage, RgbImage};
