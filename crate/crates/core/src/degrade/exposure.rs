use crate::error::{Error, Result};
use crate::isp::ToneMode;
use crate::raw::{bayer_sample, clip_unit, IrradianceImage, RawImage};

use super::{add_noise, apply_color_distortion, synth_blur, Branch, ColorDistortion, FlowStack, NoiseParams};

/// `clip(bayer(blur(sIr)) + n)` with long-branch noise.
pub fn make_long_exposure(
    s_ir: &IrradianceImage,
    flows: &FlowStack,
    skip_k: usize,
    np: &NoiseParams,
    seed: u64,
) -> Result<RawImage> {
    let blurred = synth_blur(s_ir, flows, skip_k)?;
    let raw = bayer_sample(&blurred)?;
    Ok(clip_unit(&add_noise(&raw, np, Branch::Long, seed)))
}

/// `clip(bayer(color(sIr / r)) + n)` with short-branch noise. Samples that
/// were saturated before the division stay at 1.
pub fn make_short_exposure(
    s_ir: &IrradianceImage,
    r: f64,
    cd: &ColorDistortion,
    np: &NoiseParams,
    seed: u64,
) -> Result<RawImage> {
    if !(r > 1.0) {
        return Err(Error::InvalidParameter(format!("exposure ratio must be > 1, got {r}")));
    }
    let dimmed = s_ir.map(|v| if v >= 1.0 { 1.0 } else { v / r });
    let raw = bayer_sample(&apply_color_distortion(&dimmed, cd))?;
    Ok(clip_unit(&add_noise(&raw, np, Branch::Short, seed)))
}

/// Multiply the short raw by `r` so its brightness matches the long raw.
/// Values above 1 are kept.
pub fn scale_short_for_input(short: &RawImage, r: f64) -> Result<RawImage> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("exposure ratio must be > 0, got {r}")));
    }
    Ok(short.map(|v| v * r))
}

/// Network inputs `(long, short)` for the given output mode.
///
/// Gamma mode feeds the long raw as is and the short raw times `r`. Mu-law
/// mode targets the unscaled scene, so both are further divided by `s`.
pub fn match_input_brightness(
    long: &RawImage,
    short: &RawImage,
    r: f64,
    scale_s: f64,
    mode: ToneMode,
) -> Result<(RawImage, RawImage)> {
    let short = scale_short_for_input(short, r)?;
    match mode {
        ToneMode::Gamma => Ok((long.clone(), short)),
        ToneMode::MuLaw => {
            if !(scale_s > 0.0) {
                return Err(Error::InvalidParameter(format!("scale must be > 0, got {scale_s}")));
            }
            Ok((long.map(|v| v / scale_s), short.map(|v| v / scale_s)))
        }
    }
}
