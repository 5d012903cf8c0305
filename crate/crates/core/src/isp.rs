//! Minimal ISP: white balance, Malvar-He-Cutler demosaicing, colour
//! correction, and the two output curves (gamma and mu-law).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Scalar;
use crate::raw::{rggb_channel, PackedRaw, RawImage, RgbImage, Samples};

/// Gamma exponent of the display curve.
pub const GAMMA: f64 = 2.22;

/// Output curve used for loss computation and display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ToneMode {
    #[default]
    Gamma,
    MuLaw,
}

impl fmt::Display for ToneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToneMode::Gamma => "gamma",
            ToneMode::MuLaw => "mulaw",
        })
    }
}

impl FromStr for ToneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gamma" => Ok(ToneMode::Gamma),
            "mulaw" | "mu-law" | "mu_law" => Ok(ToneMode::MuLaw),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

pub type Ccm = [[f64; 3]; 3];

/// Default colour correction matrix. Rows sum to one so grey is preserved.
pub const DEFAULT_CCM: Ccm = [[1.20, -0.15, -0.05], [-0.10, 1.15, -0.05], [-0.02, -0.18, 1.20]];

pub const IDENTITY_CCM: Ccm = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IspConfig {
    pub wb_gains: [f64; 3],
    pub ccm: Ccm,
    pub mode: ToneMode,
    pub mu: f64,
    pub epsilon: f64,
}

impl Default for IspConfig {
    fn default() -> Self {
        Self {
            wb_gains: [2.0, 1.0, 1.6],
            ccm: DEFAULT_CCM,
            mode: ToneMode::Gamma,
            mu: 100.0,
            epsilon: 1e-8,
        }
    }
}

impl IspConfig {
    pub fn with_mode(mode: ToneMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_gains(self.wb_gains)?;
        check_ccm(&self.ccm)?;
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

fn check_gains(gains: [f64; 3]) -> Result<()> {
    if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "white balance gains must be finite and positive, got {gains:?}"
        )));
    }
    Ok(())
}

fn check_ccm(ccm: &Ccm) -> Result<()> {
    for (i, row) in ccm.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("ccm row {i} not finite")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "ccm row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Per-channel gains for each container type.
pub trait WhiteBalance: Sized {
    fn white_balance(&self, gains: [f64; 3]) -> Result<Self>;
}

impl WhiteBalance for RgbImage {
    fn white_balance(&self, gains: [f64; 3]) -> Result<Self> {
        check_gains(gains)?;
        let mut out = self.clone();
        for px in out.samples_mut().chunks_exact_mut(3) {
            for c in 0..3 {
                px[c] *= gains[c];
            }
        }
        Ok(out)
    }
}

impl WhiteBalance for RawImage {
    fn white_balance(&self, gains: [f64; 3]) -> Result<Self> {
        check_gains(gains)?;
        let w = self.width();
        let mut out = self.clone();
        for (i, v) in out.samples_mut().iter_mut().enumerate() {
            *v *= gains[rggb_channel(i / w, i % w)];
        }
        Ok(out)
    }
}

impl WhiteBalance for PackedRaw {
    fn white_balance(&self, gains: [f64; 3]) -> Result<Self> {
        check_gains(gains)?;
        let per_channel = [gains[0], gains[1], gains[1], gains[2]];
        let mut out = self.clone();
        for px in out.samples_mut().chunks_exact_mut(4) {
            for c in 0..4 {
                px[c] *= per_channel[c];
            }
        }
        Ok(out)
    }
}

pub fn white_balance<I: WhiteBalance>(img: &I, gains: [f64; 3]) -> Result<I> {
    img.white_balance(gains)
}

/// Malvar-He-Cutler gradient-corrected bilinear demosaicing of an RGGB mosaic.
///
/// Borders are handled by mirroring about the edge sample, which keeps the
/// CFA phase intact. Output is clipped to [0, 1].
pub fn demosaic_malvar(raw: &RawImage) -> Result<RgbImage> {
    let (h, w) = (raw.height(), raw.width());
    if h < 5 || w < 5 {
        return Err(Error::Dimension(format!(
            "demosaicing needs at least 5x5 samples, got {h}x{w}"
        )));
    }
    let at = |y: isize, x: isize| -> f64 {
        let reflect = |i: isize, n: usize| -> usize {
            let n = n as isize;
            let i = if i < 0 { -i } else { i };
            (if i >= n { 2 * (n - 1) - i } else { i }) as usize
        };
        raw.get(reflect(y, h), reflect(x, w))
    };

    let mut out = RgbImage::filled(h, w, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            let p = |dy: isize, dx: isize| at(yi + dy, xi + dx);
            let c = p(0, 0);
            // Axis neighbours at distance 1 and 2, and the four diagonals.
            let n1 = p(-1, 0) + p(1, 0) + p(0, -1) + p(0, 1);
            let n2 = p(-2, 0) + p(2, 0) + p(0, -2) + p(0, 2);
            let diag = p(-1, -1) + p(-1, 1) + p(1, -1) + p(1, 1);
            let horiz1 = p(0, -1) + p(0, 1);
            let vert1 = p(-1, 0) + p(1, 0);
            let horiz2 = p(0, -2) + p(0, 2);
            let vert2 = p(-2, 0) + p(2, 0);

            // Green at a red or blue site.
            let green_at_rb = (4.0 * c + 2.0 * n1 - n2) / 8.0;
            // Opposite chroma at a red or blue site.
            let rb_at_br = (6.0 * c + 2.0 * diag - 1.5 * n2) / 8.0;
            // Chroma whose samples lie left/right of a green site.
            let rb_at_g_horiz = (5.0 * c + 4.0 * horiz1 - diag - horiz2 + 0.5 * vert2) / 8.0;
            // Chroma whose samples lie above/below a green site.
            let rb_at_g_vert = (5.0 * c + 4.0 * vert1 - diag - vert2 + 0.5 * horiz2) / 8.0;

            let rgb = match (y & 1, x & 1) {
                (0, 0) => [c, green_at_rb, rb_at_br],
                (1, 1) => [rb_at_br, green_at_rb, c],
                // Green in a red row: red horizontal, blue vertical.
                (0, 1) => [rb_at_g_horiz, c, rb_at_g_vert],
                // Green in a blue row: blue horizontal, red vertical.
                _ => [rb_at_g_vert, c, rb_at_g_horiz],
            };
            for (ch, v) in rgb.into_iter().enumerate() {
                out.set(y, x, ch, v.clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

pub fn apply_ccm(rgb: &RgbImage, ccm: &Ccm) -> Result<RgbImage> {
    check_ccm(ccm)?;
    let mut out = rgb.clone();
    for px in out.samples_mut().chunks_exact_mut(3) {
        let v = [px[0], px[1], px[2]];
        for (o, row) in px.iter_mut().zip(ccm) {
            *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        }
    }
    Ok(out)
}

#[inline]
pub fn gamma_value(v: f64, epsilon: f64) -> f64 {
    v.max(epsilon).powf(1.0 / GAMMA)
}

#[inline]
pub fn mu_law_value(v: f64, mu: f64) -> f64 {
    (mu * v.max(0.0)).ln_1p() / mu.ln_1p()
}

pub fn gamma_correct(rgb: &RgbImage, epsilon: f64) -> RgbImage {
    rgb.map(|v| gamma_value(v, epsilon))
}

/// Mu-law compression. Negative inputs are floored at zero.
pub fn mu_law(rgb: &RgbImage, mu: f64) -> RgbImage {
    rgb.map(|v| mu_law_value(v, mu))
}

pub fn post_process(rgb: &RgbImage, cfg: &IspConfig) -> Result<RgbImage> {
    let corrected = apply_ccm(rgb, &cfg.ccm)?;
    Ok(match cfg.mode {
        ToneMode::Gamma => gamma_correct(&corrected, cfg.epsilon),
        ToneMode::MuLaw => mu_law(&corrected, cfg.mu),
    })
}

/// Curve value and derivative for a scalar in the network's precision.
#[inline]
fn curve<T: Scalar>(v: T, cfg: &IspConfig) -> (T, T) {
    match cfg.mode {
        ToneMode::Gamma => {
            let eps = T::cast(cfg.epsilon);
            let inv = T::cast(1.0 / GAMMA);
            if v > eps {
                let y = v.powf(inv);
                (y, inv * y / v)
            } else {
                (eps.powf(inv), T::zero())
            }
        }
        ToneMode::MuLaw => {
            let mu = T::cast(cfg.mu);
            let norm = T::cast(cfg.mu.ln_1p());
            if v > T::zero() {
                ((mu * v).ln_1p() / norm, mu / ((T::one() + mu * v) * norm))
            } else {
                (T::zero(), T::zero())
            }
        }
    }
}

/// `post_process` over a channel-planar batch `(N, 3, H, W)`.
///
/// Returns the processed values and the per-element curve derivative, which
/// [`post_process_planar_backward`] needs.
pub fn post_process_planar<T: Scalar>(data: &[T], plane: usize, cfg: &IspConfig) -> (Vec<T>, Vec<T>) {
    assert_eq!(data.len() % (3 * plane), 0, "planar data is not (N, 3, H, W)");
    let ccm: Vec<T> = cfg.ccm.iter().flatten().map(|&v| T::cast(v)).collect();
    let mut out = vec![T::zero(); data.len()];
    let mut slope = vec![T::zero(); data.len()];
    for (src, (dst, dsl)) in data
        .chunks_exact(3 * plane)
        .zip(out.chunks_exact_mut(3 * plane).zip(slope.chunks_exact_mut(3 * plane)))
    {
        for i in 0..plane {
            let v = [src[i], src[plane + i], src[2 * plane + i]];
            for c in 0..3 {
                let lin = ccm[3 * c] * v[0] + ccm[3 * c + 1] * v[1] + ccm[3 * c + 2] * v[2];
                let (y, d) = curve(lin, cfg);
                dst[c * plane + i] = y;
                dsl[c * plane + i] = d;
            }
        }
    }
    (out, slope)
}

/// Vector-Jacobian product of [`post_process_planar`].
pub fn post_process_planar_backward<T: Scalar>(grad_out: &[T], slope: &[T], plane: usize, cfg: &IspConfig) -> Vec<T> {
    let ccm: Vec<T> = cfg.ccm.iter().flatten().map(|&v| T::cast(v)).collect();
    let mut grad_in = vec![T::zero(); grad_out.len()];
    for ((g, s), gi) in grad_out
        .chunks_exact(3 * plane)
        .zip(slope.chunks_exact(3 * plane))
        .zip(grad_in.chunks_exact_mut(3 * plane))
    {
        for i in 0..plane {
            let gl = [
                g[i] * s[i],
                g[plane + i] * s[plane + i],
                g[2 * plane + i] * s[2 * plane + i],
            ];
            for c in 0..3 {
                gi[c * plane + i] = ccm[c] * gl[0] + ccm[3 + c] * gl[1] + ccm[6 + c] * gl[2];
            }
        }
    }
    grad_in
}
