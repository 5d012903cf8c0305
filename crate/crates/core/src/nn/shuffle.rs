use crate::error::{Error, Result};

use super::{Scalar, Tensor};

/// (C*4, H, W) -> (C, 2H, 2W): `out[c, 2y + i, 2x + j] = in[4c + 2i + j, y, x]`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c4, h, w] = x.shape();
    if c4 % 4 != 0 {
        return Err(Error::Shape(format!(
            "pixel shuffle needs channels divisible by 4, got {c4}"
        )));
    }
    let c = c4 / 4;
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    for b in 0..n {
        let src = x.item(b);
        let dst = out.item_mut(b);
        for ch in 0..c {
            for sub in 0..4 {
                let (i, j) = (sub / 2, sub % 2);
                let plane = &src[(4 * ch + sub) * h * w..][..h * w];
                for y in 0..h {
                    for xx in 0..w {
                        dst[(ch * 2 * h + 2 * y + i) * 2 * w + 2 * xx + j] = plane[y * w + xx];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h2, w2] = x.shape();
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::Shape(format!(
            "pixel unshuffle needs even spatial size, got {h2}x{w2}"
        )));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor::zeros([n, 4 * c, h, w]);
    for b in 0..n {
        let src = x.item(b);
        let dst = out.item_mut(b);
        for ch in 0..c {
            for sub in 0..4 {
                let (i, j) = (sub / 2, sub % 2);
                for y in 0..h {
                    for xx in 0..w {
                        dst[((4 * ch + sub) * h + y) * w + xx] = src[(ch * h2 + 2 * y + i) * w2 + 2 * xx + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Source coordinate and interpolation weight for half-pixel-centred 2x upsampling.
#[inline]
fn source(o: usize, n: usize) -> (usize, usize, f64) {
    let s = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
    let i0 = (s.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear 2x upsampling (half-pixel centres, edge clamped), with every
/// output value multiplied by `scale`.
pub fn upsample_bilinear2x<T: Scalar>(x: &Tensor<T>, scale: f64) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let s = T::cast(scale);
    for b in 0..n {
        let src = x.item(b);
        let dst = out.item_mut(b);
        for ch in 0..c {
            let plane = &src[ch * h * w..][..h * w];
            for oy in 0..oh {
                let (y0, y1, ly) = source(oy, h);
                let ly = T::cast(ly);
                for ox in 0..ow {
                    let (x0, x1, lx) = source(ox, w);
                    let lx = T::cast(lx);
                    let v = (T::one() - ly) * ((T::one() - lx) * plane[y0 * w + x0] + lx * plane[y0 * w + x1])
                        + ly * ((T::one() - lx) * plane[y1 * w + x0] + lx * plane[y1 * w + x1]);
                    dst[(ch * oh + oy) * ow + ox] = s * v;
                }
            }
        }
    }
    out
}

pub fn upsample_bilinear2x_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_shape: [usize; 4],
    scale: f64,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape;
    let (oh, ow) = (2 * h, 2 * w);
    grad_out.expect_shape([n, c, oh, ow])?;
    let s = T::cast(scale);
    let mut grad = Tensor::zeros(input_shape);
    for b in 0..n {
        let src = grad_out.item(b);
        let dst = grad.item_mut(b);
        for ch in 0..c {
            let plane = &mut dst[ch * h * w..][..h * w];
            for oy in 0..oh {
                let (y0, y1, ly) = source(oy, h);
                let ly = T::cast(ly);
                for ox in 0..ow {
                    let (x0, x1, lx) = source(ox, w);
                    let lx = T::cast(lx);
                    let g = s * src[(ch * oh + oy) * ow + ox];
                    plane[y0 * w + x0] += g * (T::one() - ly) * (T::one() - lx);
                    plane[y0 * w + x1] += g * (T::one() - ly) * lx;
                    plane[y1 * w + x0] += g * ly * (T::one() - lx);
                    plane[y1 * w + x1] += g * ly * lx;
                }
            }
        }
    }
    Ok(grad)
}
