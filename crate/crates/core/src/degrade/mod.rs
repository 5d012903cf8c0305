//! Long/short exposure synthesis: camera-shake blur, heteroscedastic noise,
//! colour distortion, and their composition into raw frames.

mod blur;
mod exposure;
mod noise;
mod trajectory;

pub use blur::{synth_blur, warp_bilinear};
pub use exposure::{make_long_exposure, make_short_exposure, match_input_brightness, scale_short_for_input};
pub use noise::{
    add_noise, apply_color_distortion, Branch, ColorDistortion, NoiseParams, COLOR_RANGE, EXPOSURE_RATIO, SIGMA_R_GRID,
    SIGMA_S_GRID,
};
pub use trajectory::{gen_trajectory, trajectory_to_flows, FlowStack, Intrinsics, Trajectory};
