//! Image containers and Bayer (RGGB) sampling, packing and channel alignment.
//!
//! All containers store row-major `f64` samples. Multi-channel images are
//! interleaved (`(y * width + x) * channels + c`).

use crate::error::{Error, Result};

/// Bayer site colour for the fixed RGGB layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfaColor {
    Red,
    Green,
    Blue,
}

/// Colour sampled at raw position `(y, x)` of an RGGB mosaic.
#[inline]
pub fn rggb_color(y: usize, x: usize) -> CfaColor {
    match (y & 1, x & 1) {
        (0, 0) => CfaColor::Red,
        (1, 1) => CfaColor::Blue,
        _ => CfaColor::Green,
    }
}

/// RGB channel index sampled at raw position `(y, x)`.
#[inline]
pub fn rggb_channel(y: usize, x: usize) -> usize {
    match rggb_color(y, x) {
        CfaColor::Red => 0,
        CfaColor::Green => 1,
        CfaColor::Blue => 2,
    }
}

/// Packed channel order and the (dy, dx) offset of each channel inside a 2x2 cell.
pub const PACK_OFFSETS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Mutable access to the raw sample buffer of any image container.
pub trait Samples {
    fn samples(&self) -> &[f64];
    fn samples_mut(&mut self) -> &mut [f64];
}

fn check_even(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || !height.is_multiple_of(2) || !width.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "expected non-zero even dimensions, got {height}x{width}"
        )));
    }
    Ok(())
}

fn check_len(len: usize, expected: usize) -> Result<()> {
    if len != expected {
        return Err(Error::Shape(format!("buffer holds {len} samples, expected {expected}")));
    }
    Ok(())
}

/// Linear 3-channel scene radiance. Values are non-negative and unbounded above.
#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl IrradianceImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_even(height, width)?;
        check_len(data.len(), height * width * 3)?;
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        check_even(height, width)?;
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_even(height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(y, x, c));
                }
            }
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Elementwise map producing a new image of the same size.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Crop a `height x width` window with top-left corner `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::Dimension(format!(
                "crop {height}x{width}@({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Self::from_fn(height, width, |y, x, c| self.get(y0 + y, x0 + x, c))
    }

    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            height: self.height,
            width: self.width,
            data: self.data.clone(),
        }
    }
}

impl Samples for IrradianceImage {
    fn samples(&self) -> &[f64] {
        &self.data
    }
    fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Single-channel RGGB mosaic. After clipping every value lies in [0, 1];
/// intermediate (pre-clip) values are allowed outside that range.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_even(height, width)?;
        check_len(data.len(), height * width)?;
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_even(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Samples for RawImage {
    fn samples(&self) -> &[f64] {
        &self.data
    }
    fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Half-resolution 4-channel view of a raw mosaic in R, G1, G2, B order.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedRaw {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl PackedRaw {
    /// `height`/`width` are the packed (half-resolution) dimensions.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension("packed raw must be non-empty".into()));
        }
        check_len(data.len(), height * width * 4)?;
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 4 + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Channel-planar copy (C, H, W), the layout the network consumes.
    pub fn to_planar(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane * 4];
        for (i, px) in self.data.chunks_exact(4).enumerate() {
            for c in 0..4 {
                out[c * plane + i] = px[c];
            }
        }
        out
    }
}

impl Samples for PackedRaw {
    fn samples(&self) -> &[f64] {
        &self.data
    }
    fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Generic 3-channel image (camera RGB or sRGB), no Bayer constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len(data.len(), height * width * 3)?;
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        Self {
            height,
            width,
            data: (0..height * width).flat_map(|_| rgb).collect(),
        }
    }

    /// Build from a channel-planar (3, H, W) buffer.
    pub fn from_planar(height: usize, width: usize, planar: &[f64]) -> Result<Self> {
        check_len(planar.len(), height * width * 3)?;
        let plane = height * width;
        let mut data = vec![0.0; plane * 3];
        for i in 0..plane {
            for c in 0..3 {
                data[i * 3 + c] = planar[c * plane + i];
            }
        }
        Ok(Self { height, width, data })
    }

    pub fn to_planar(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane * 3];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = px[c];
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Samples for RgbImage {
    fn samples(&self) -> &[f64] {
        &self.data
    }
    fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Select, at every site, the RGGB channel of the irradiance image.
pub fn bayer_sample(img: &IrradianceImage) -> Result<RawImage> {
    check_even(img.height, img.width)?;
    RawImage::from_fn(img.height, img.width, |y, x| img.get(y, x, rggb_channel(y, x)))
}

pub fn pack_rggb(raw: &RawImage) -> Result<PackedRaw> {
    check_even(raw.height, raw.width)?;
    let (ph, pw) = (raw.height / 2, raw.width / 2);
    let mut data = Vec::with_capacity(ph * pw * 4);
    for y in 0..ph {
        for x in 0..pw {
            for &(dy, dx) in &PACK_OFFSETS {
                data.push(raw.get(2 * y + dy, 2 * x + dx));
            }
        }
    }
    PackedRaw::new(ph, pw, data)
}

pub fn unpack_rggb(packed: &PackedRaw) -> Result<RawImage> {
    let (h, w) = (packed.height * 2, packed.width * 2);
    let mut data = vec![0.0; h * w];
    for y in 0..packed.height {
        for x in 0..packed.width {
            for (c, &(dy, dx)) in PACK_OFFSETS.iter().enumerate() {
                data[(2 * y + dy) * w + 2 * x + dx] = packed.get(y, x, c);
            }
        }
    }
    RawImage::new(h, w, data)
}

/// Clamp every sample to [0, 1].
pub fn clip_unit<I: Samples + Clone>(img: &I) -> I {
    let mut out = img.clone();
    clip_unit_in_place(&mut out);
    out
}

pub fn clip_unit_in_place<I: Samples>(img: &mut I) {
    for v in img.samples_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Half-resolution, phase-aligned RGB image from a clean raw mosaic.
///
/// Each output pixel sits at the centre of its 2x2 Bayer cell. Green is the
/// mean of the two green samples (whose centroid already is the cell centre).
/// The red and blue planes are shifted by a quarter of their own sampling
/// period toward the centre with bilinear interpolation; samples beyond the
/// border are replicated.
pub fn align_downsample(raw: &RawImage) -> Result<IrradianceImage> {
    check_even(raw.height, raw.width)?;
    let (ph, pw) = (raw.height / 2, raw.width / 2);
    let plane = |dy: usize, dx: usize, y: isize, x: isize| -> f64 {
        let yy = y.clamp(0, ph as isize - 1) as usize;
        let xx = x.clamp(0, pw as isize - 1) as usize;
        raw.get(2 * yy + dy, 2 * xx + dx)
    };
    // Bilinear sample of one colour plane at (y + fy, x + fx) with |f| = 0.25.
    let shifted = |dy: usize, dx: usize, y: isize, x: isize, step: isize| -> f64 {
        let near = 0.75;
        let far = 0.25;
        near * near * plane(dy, dx, y, x)
            + near * far * plane(dy, dx, y, x + step)
            + far * near * plane(dy, dx, y + step, x)
            + far * far * plane(dy, dx, y + step, x + step)
    };

    // Half-resolution planes may have odd sides, so bypass the even check.
    let mut out = IrradianceImage {
        height: ph,
        width: pw,
        data: vec![0.0; ph * pw * 3],
    };
    for y in 0..ph {
        for x in 0..pw {
            let (yi, xi) = (y as isize, x as isize);
            let r = shifted(0, 0, yi, xi, 1);
            let b = shifted(1, 1, yi, xi, -1);
            let g = 0.5 * (raw.get(2 * y, 2 * x + 1) + raw.get(2 * y + 1, 2 * x));
            out.set(y, x, 0, r);
            out.set(y, x, 1, g);
            out.set(y, x, 2, b);
        }
    }
    Ok(out)
}
