//! Clean irradiance scenes: loading, procedural generation, exposure scaling
//! and ground-truth rendering.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{read_rgb16, read_tensor};
use crate::isp::{post_process, IspConfig};
use crate::raw::{clip_unit, IrradianceImage, RgbImage};
use crate::rng::rng_from_seed;

/// Range the exposure scale factor is drawn from.
pub const SCALE_RANGE: (f64, f64) = (1.3, 3.0);
/// Upper bound of the procedural background texture. Kept below 1/1.3 so only
/// light sources saturate at the smallest scale factor.
pub const TEXTURE_MAX: f64 = 0.75;
/// Luma is drawn in a display-like encoding and linearised with this
/// exponent, so most of a scene is dark as in linear photographs.
pub const TEXTURE_GAMMA: f64 = 2.2;
/// Peak amplitude range of a light source before scaling.
pub const LIGHT_PEAK_RANGE: (f64, f64) = (1.2, 2.5);
const LIGHT_TINT: [f64; 3] = [1.0, 0.95, 0.85];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub scale_s: f64,
    pub seed: u64,
    pub light_source_count: usize,
    pub light_source_radius: f64,
}

impl SceneParams {
    /// Draw `scale_s` uniformly from [`SCALE_RANGE`] using a stream seeded by `seed`.
    pub fn sample(seed: u64, light_source_count: usize, light_source_radius: f64) -> Self {
        let mut rng = rng_from_seed(seed ^ 0x5CA1_E5EE_D000_0001);
        Self {
            scale_s: rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1),
            seed,
            light_source_count,
            light_source_radius,
        }
    }
}

/// Load a linear 3-channel image: a 16-bit PNG/PNM, or a tensor file of
/// shape (H, W, 3). Odd dimensions are cropped by one row/column.
pub fn load_irradiance(path: &Path) -> Result<IrradianceImage> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let (h, w, data) = match ext.as_str() {
        "lsft" | "bin" | "tensor" => {
            let t = read_tensor(path)?;
            if t.dims.len() != 3 || t.dims[2] != 3 {
                return Err(Error::UnsupportedFormat(format!(
                    "{}: tensor must be (H, W, 3), got {:?}",
                    path.display(),
                    t.dims
                )));
            }
            (t.dims[0], t.dims[1], t.data)
        }
        "png" | "ppm" | "pnm" | "pam" => {
            let img = read_rgb16(path)?;
            (img.height(), img.width(), img.into_data())
        }
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unknown extension {ext:?}",
                path.display()
            )))
        }
    };
    if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: "irradiance values must be finite and non-negative".into(),
        });
    }
    let (eh, ew) = (h & !1, w & !1);
    IrradianceImage::from_fn(eh, ew, |y, x, c| data[(y * w + x) * 3 + c])
}

/// Smooth value noise on a `cells x cells` lattice with smoothstep blending.
fn value_noise(rng: &mut ChaCha8Rng, cells: usize, h: usize, w: usize) -> Vec<f64> {
    let n = cells + 1;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f64 / h as f64 * cells as f64;
        let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for x in 0..w {
            let fx = x as f64 / w as f64 * cells as f64;
            let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let at = |a: usize, b: usize| lattice[a * n + b];
            let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
            let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn normalise(v: &mut [f64]) {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = (hi - lo).max(1e-12);
    v.iter_mut().for_each(|x| *x = (*x - lo) / span);
}

/// Seeded synthetic scene: a smooth coloured texture in [0, TEXTURE_MAX]
/// plus `light_source_count` Gaussian light sources whose peaks exceed 1.
///
/// Light sources are combined with the texture by a per-pixel maximum and
/// placed at least four radii apart when the image allows it, so each one
/// forms its own saturated region once scaled.
pub fn procedural_scene(params: &SceneParams, height: usize, width: usize) -> Result<IrradianceImage> {
    if !height.is_multiple_of(2) || !width.is_multiple_of(2) || height == 0 || width == 0 {
        return Err(Error::Dimension(format!(
            "scene must have non-zero even size, got {height}x{width}"
        )));
    }
    let mut rng = rng_from_seed(params.seed);

    let mut luma = vec![0.0; height * width];
    for (octave, cells) in [2usize, 4, 8, 16].into_iter().enumerate() {
        let amp = 0.5f64.powi(octave as i32);
        for (l, v) in luma.iter_mut().zip(value_noise(&mut rng, cells, height, width)) {
            *l += amp * v;
        }
    }
    normalise(&mut luma);
    let chroma: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let mut c = value_noise(&mut rng, 3, height, width);
            normalise(&mut c);
            c
        })
        .collect();

    let sigma = params.light_source_radius.max(0.5);
    let min_dist = 4.0 * sigma;
    let mut lights: Vec<(f64, f64, f64)> = Vec::with_capacity(params.light_source_count);
    for _ in 0..params.light_source_count {
        let peak = rng.random_range(LIGHT_PEAK_RANGE.0..=LIGHT_PEAK_RANGE.1);
        let mut centre = (0.0, 0.0);
        for _attempt in 0..1000 {
            centre = (
                rng.random_range(0.0..height as f64),
                rng.random_range(0.0..width as f64),
            );
            let clear = lights
                .iter()
                .all(|&(cy, cx, _)| ((cy - centre.0).powi(2) + (cx - centre.1).powi(2)).sqrt() >= min_dist);
            if clear {
                break;
            }
        }
        lights.push((centre.0, centre.1, peak));
    }

    IrradianceImage::from_fn(height, width, |y, x, c| {
        let i = y * width + x;
        let texture = TEXTURE_MAX * (0.05 + 0.95 * luma[i].powf(TEXTURE_GAMMA)) * (0.6 + 0.4 * chroma[c][i]);
        let light = lights
            .iter()
            .map(|&(cy, cx, peak)| {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                peak * LIGHT_TINT[c] * (-d2 / (2.0 * sigma * sigma)).exp()
            })
            .fold(0.0, f64::max);
        texture.max(light)
    })
}

/// Multiply every sample by the exposure scale `s`; no clipping.
pub fn apply_scale(img: &IrradianceImage, s: f64) -> Result<IrradianceImage> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be > 0, got {s}")));
    }
    Ok(img.map(|v| v * s))
}

/// Clip to [0, 1] then run the ISP output stage in `cfg.mode`.
///
/// Callers pass the scaled scene in gamma mode and the unscaled scene in
/// mu-law mode; see [`ground_truth_for_mode`].
pub fn make_ground_truth(img: &IrradianceImage, cfg: &IspConfig) -> Result<RgbImage> {
    post_process(&clip_unit(img).to_rgb(), cfg)
}

/// Ground truth from the unscaled scene `ir` and its scale factor.
pub fn ground_truth_for_mode(ir: &IrradianceImage, scale_s: f64, cfg: &IspConfig) -> Result<RgbImage> {
    match cfg.mode {
        crate::isp::ToneMode::Gamma => make_ground_truth(&apply_scale(ir, scale_s)?, cfg),
        crate::isp::ToneMode::MuLaw => make_ground_truth(ir, cfg),
    }
}
