//! 3x3 deformable convolution (offsets only, single offset group).
//!
//! Offsets have shape (N, 18, H, W): channel `2k` is the row displacement and
//! `2k + 1` the column displacement of kernel tap `k = ky * 3 + kx`. Each tap
//! samples the input bilinearly at `(y - 1 + ky + dy, x - 1 + kx + dx)`;
//! samples outside the image read as zero.

use crate::error::{Error, Result};

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::{Initializer, Scalar, Tensor};

pub const DEFORM_KERNEL: usize = 3;
pub const DEFORM_OFFSET_CHANNELS: usize = 2 * DEFORM_KERNEL * DEFORM_KERNEL;

/// Bilinear sample of a single plane with zero outside.
#[inline]
pub fn bilinear_sample<T: Scalar>(plane: &[T], h: usize, w: usize, py: T, px: T) -> T {
    let one = T::one();
    if py <= -one || px <= -one || py >= T::cast(h as f64) || px >= T::cast(w as f64) {
        return T::zero();
    }
    let y0 = py.floor();
    let x0 = px.floor();
    let ly = py - y0;
    let lx = px - x0;
    let (y0, x0) = (y0.as_f64() as isize, x0.as_f64() as isize);
    let at = |y: isize, x: isize| -> T {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            T::zero()
        } else {
            plane[y as usize * w + x as usize]
        }
    };
    (one - ly) * (one - lx) * at(y0, x0)
        + (one - ly) * lx * at(y0, x0 + 1)
        + ly * (one - lx) * at(y0 + 1, x0)
        + ly * lx * at(y0 + 1, x0 + 1)
}

/// Corner indices and weights of a bilinear sample, plus the partial
/// derivatives of the four weights with respect to `py` and `px`.
struct Corners<T> {
    idx: [Option<usize>; 4],
    weight: [T; 4],
    dwy: [T; 4],
    dwx: [T; 4],
}

#[inline]
fn corners<T: Scalar>(h: usize, w: usize, py: T, px: T) -> Option<Corners<T>> {
    let one = T::one();
    if py <= -one || px <= -one || py >= T::cast(h as f64) || px >= T::cast(w as f64) {
        return None;
    }
    let y0 = py.floor();
    let x0 = px.floor();
    let ly = py - y0;
    let lx = px - x0;
    let (hy, hx) = (one - ly, one - lx);
    let (y0, x0) = (y0.as_f64() as isize, x0.as_f64() as isize);
    let index = |y: isize, x: isize| -> Option<usize> {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            None
        } else {
            Some(y as usize * w + x as usize)
        }
    };
    Some(Corners {
        idx: [
            index(y0, x0),
            index(y0, x0 + 1),
            index(y0 + 1, x0),
            index(y0 + 1, x0 + 1),
        ],
        weight: [hy * hx, hy * lx, ly * hx, ly * lx],
        dwy: [-hx, -lx, hx, lx],
        dwx: [-hy, hy, -ly, ly],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformConv2d<T: Scalar> {
    /// (out, in, 3, 3)
    pub weight: Tensor<T>,
    /// (1, out, 1, 1)
    pub bias: Tensor<T>,
}

impl<T: Scalar> DeformConv2d<T> {
    pub fn new(init: &mut Initializer, in_ch: usize, out_ch: usize) -> Self {
        let k = DEFORM_KERNEL;
        Self {
            weight: init.he([out_ch, in_ch, k, k], in_ch * k * k),
            bias: init.zeros([1, out_ch, 1, 1]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check(&self, x: &Tensor<T>, offsets: &Tensor<T>) -> Result<()> {
        if x.channels() != self.in_channels() {
            return Err(Error::Shape(format!(
                "deformable conv expects {} input channels, got {}",
                self.in_channels(),
                x.channels()
            )));
        }
        let expected = [x.batch(), DEFORM_OFFSET_CHANNELS, x.height(), x.width()];
        if offsets.shape() != expected {
            return Err(Error::Shape(format!(
                "offsets must be {expected:?}, got {:?}",
                offsets.shape()
            )));
        }
        Ok(())
    }

    /// Sampled column matrix (C*9) x (H*W) for one batch item.
    fn deform_cols(&self, x: &[T], off: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
        let p = h * w;
        let k = DEFORM_KERNEL;
        for tap in 0..k * k {
            let (ky, kx) = (tap / k, tap % k);
            let dy = &off[2 * tap * p..][..p];
            let dx = &off[(2 * tap + 1) * p..][..p];
            for ci in 0..c {
                let plane = &x[ci * p..][..p];
                let row = &mut cols[(ci * k * k + tap) * p..][..p];
                for yy in 0..h {
                    for xx in 0..w {
                        let i = yy * w + xx;
                        let py = T::cast(yy as f64 + ky as f64 - 1.0) + dy[i];
                        let px = T::cast(xx as f64 + kx as f64 - 1.0) + dx[i];
                        row[i] = bilinear_sample(plane, h, w, py, px);
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>, offsets: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x, offsets)?;
        let (c, h, w) = (x.channels(), x.height(), x.width());
        let oc = self.out_channels();
        let p = h * w;
        let ckk = c * DEFORM_KERNEL * DEFORM_KERNEL;
        let mut out = Tensor::zeros([x.batch(), oc, h, w]);
        let mut cols = vec![T::zero(); ckk * p];
        for n in 0..x.batch() {
            self.deform_cols(x.item(n), offsets.item(n), c, h, w, &mut cols);
            let y = out.item_mut(n);
            for (o, chunk) in y.chunks_exact_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.data()[o]);
            }
            gemm_nn(oc, ckk, p, self.weight.data(), &cols, y, true);
        }
        Ok(out)
    }

    /// Accumulates parameter gradients; returns (input grad, offset grad).
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        offsets: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check(x, offsets)?;
        let (c, h, w) = (x.channels(), x.height(), x.width());
        let oc = self.out_channels();
        grad_out.expect_shape([x.batch(), oc, h, w])?;
        let k = DEFORM_KERNEL;
        let p = h * w;
        let ckk = c * k * k;

        let mut grad_x = Tensor::zeros(x.shape());
        let mut grad_off = Tensor::zeros(offsets.shape());
        let mut cols = vec![T::zero(); ckk * p];
        let mut grad_cols = vec![T::zero(); ckk * p];
        let mut gw = vec![T::zero(); self.weight.len()];
        let mut gb = vec![T::zero(); oc];

        for n in 0..x.batch() {
            let go = grad_out.item(n);
            for (o, chunk) in go.chunks_exact(p).enumerate() {
                gb[o] += chunk.iter().copied().sum();
            }
            let xi = x.item(n);
            let off = offsets.item(n);
            self.deform_cols(xi, off, c, h, w, &mut cols);
            gemm_nt(oc, p, ckk, go, &cols, &mut gw, true);
            gemm_tn(ckk, oc, p, self.weight.data(), go, &mut grad_cols, false);

            let gx = grad_x.item_mut(n);
            let goff = grad_off.item_mut(n);
            for tap in 0..k * k {
                let (ky, kx) = (tap / k, tap % k);
                for yy in 0..h {
                    for xx in 0..w {
                        let i = yy * w + xx;
                        let py = T::cast(yy as f64 + ky as f64 - 1.0) + off[2 * tap * p + i];
                        let px = T::cast(xx as f64 + kx as f64 - 1.0) + off[(2 * tap + 1) * p + i];
                        let Some(cr) = corners(h, w, py, px) else {
                            continue;
                        };
                        let (mut gy, mut gxo) = (T::zero(), T::zero());
                        for ci in 0..c {
                            let g = grad_cols[(ci * k * k + tap) * p + i];
                            if g == T::zero() {
                                continue;
                            }
                            let plane_off = ci * p;
                            for j in 0..4 {
                                if let Some(idx) = cr.idx[j] {
                                    gx[plane_off + idx] += g * cr.weight[j];
                                    let v = xi[plane_off + idx];
                                    gy += g * v * cr.dwy[j];
                                    gxo += g * v * cr.dwx[j];
                                }
                            }
                        }
                        goff[2 * tap * p + i] += gy;
                        goff[(2 * tap + 1) * p + i] += gxo;
                    }
                }
            }
        }
        self.weight.accumulate_grad(&gw);
        self.bias.accumulate_grad(&gb);
        Ok((grad_x, grad_off))
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Tensor<T>; 2] {
        [&self.weight, &self.bias]
    }
}
