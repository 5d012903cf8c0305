use crate::error::{Error, Result};

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::{Initializer, Scalar, Tensor};

/// Unfold one batch item into a (C*k*k) x (OH*OW) column matrix.
pub(crate) fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    let p = oh * ow;
    for ci in 0..c {
        let src = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let line = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            line[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image.
pub(crate) fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    x: &mut [T],
) {
    let p = oh * ow;
    for ci in 0..c {
        let dst = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[iy as usize * w + ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded 2-D cross-correlation.
///
/// Padding is `(kernel - 1) / 2`: kernel 3 keeps the size, kernel 1 is a
/// per-pixel linear map, kernel 2 with stride 2 halves even sizes exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T: Scalar> {
    /// (out, in, k, k)
    pub weight: Tensor<T>,
    /// (1, out, 1, 1)
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(init: &mut Initializer, in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        Self {
            weight: init.he([out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel),
            bias: init.zeros([1, out_ch, 1, 1]),
            stride,
        }
    }

    pub fn zeroed(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        let mut init = Initializer::new(0);
        Self {
            weight: init.zeros([out_ch, in_ch, kernel, kernel]),
            bias: init.zeros([1, out_ch, 1, 1]),
            stride,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn padding(&self) -> usize {
        (self.kernel() - 1) / 2
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (k, s, p) = (self.kernel(), self.stride, self.padding());
        if h + 2 * p < k || w + 2 * p < k {
            return Err(Error::Shape(format!("input {h}x{w} smaller than kernel {k}")));
        }
        if !(h + 2 * p - k).is_multiple_of(s) || !(w + 2 * p - k).is_multiple_of(s) {
            return Err(Error::Shape(format!(
                "input {h}x{w} not divisible for kernel {k} stride {s}"
            )));
        }
        Ok(((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        if x.channels() != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                x.channels()
            )));
        }
        self.output_size(x.height(), x.width())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (oh, ow) = self.check_input(x)?;
        let (c, h, w) = (x.channels(), x.height(), x.width());
        let (oc, k) = (self.out_channels(), self.kernel());
        let p = oh * ow;
        let ckk = c * k * k;
        let mut out = Tensor::zeros([x.batch(), oc, oh, ow]);
        let mut cols = vec![T::zero(); ckk * p];
        for n in 0..x.batch() {
            let y = out.item_mut(n);
            for (o, chunk) in y.chunks_exact_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.data()[o]);
            }
            if k == 1 && self.stride == 1 {
                gemm_nn(oc, ckk, p, self.weight.data(), x.item(n), y, true);
            } else {
                im2col(x.item(n), c, h, w, k, self.stride, self.padding(), oh, ow, &mut cols);
                gemm_nn(oc, ckk, p, self.weight.data(), &cols, y, true);
            }
        }
        Ok(out)
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (oh, ow) = self.check_input(x)?;
        grad_out.expect_shape([x.batch(), self.out_channels(), oh, ow])?;
        let (c, h, w) = (x.channels(), x.height(), x.width());
        let (oc, k, stride, pad) = (self.out_channels(), self.kernel(), self.stride, self.padding());
        let p = oh * ow;
        let ckk = c * k * k;
        let direct = k == 1 && stride == 1;

        let mut grad_x = Tensor::zeros(x.shape());
        let mut cols = vec![T::zero(); ckk * p];
        let mut grad_cols = vec![T::zero(); ckk * p];
        let mut gw = vec![T::zero(); self.weight.len()];
        let mut gb = vec![T::zero(); oc];
        for n in 0..x.batch() {
            let go = grad_out.item(n);
            for (o, chunk) in go.chunks_exact(p).enumerate() {
                gb[o] += chunk.iter().copied().sum();
            }
            if direct {
                gemm_nt(oc, p, ckk, go, x.item(n), &mut gw, true);
                gemm_tn(ckk, oc, p, self.weight.data(), go, grad_x.item_mut(n), false);
            } else {
                im2col(x.item(n), c, h, w, k, stride, pad, oh, ow, &mut cols);
                gemm_nt(oc, p, ckk, go, &cols, &mut gw, true);
                gemm_tn(ckk, oc, p, self.weight.data(), go, &mut grad_cols, false);
                col2im(&grad_cols, c, h, w, k, stride, pad, oh, ow, grad_x.item_mut(n));
            }
        }
        self.weight.accumulate_grad(&gw);
        self.bias.accumulate_grad(&gb);
        Ok(grad_x)
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Tensor<T>; 2] {
        [&self.weight, &self.bias]
    }
}

/// Transposed convolution with kernel 2 and stride 2: exact spatial doubling.
/// Weight layout is (in, out, 2, 2), the adjoint of a stride-2 [`Conv2d`]
/// holding the same tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T: Scalar> {
    /// (in, out, 2, 2)
    pub weight: Tensor<T>,
    /// (1, out, 1, 1)
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(init: &mut Initializer, in_ch: usize, out_ch: usize) -> Self {
        Self {
            weight: init.he([in_ch, out_ch, 2, 2], in_ch),
            bias: init.zeros([1, out_ch, 1, 1]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.in_channels() {
            return Err(Error::Shape(format!(
                "transposed conv expects {} input channels, got {}",
                self.in_channels(),
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (ic, h, w) = (x.channels(), x.height(), x.width());
        let oc = self.out_channels();
        let p = h * w;
        let mut out = Tensor::zeros([x.batch(), oc, 2 * h, 2 * w]);
        let mut cols = vec![T::zero(); oc * 4 * p];
        for n in 0..x.batch() {
            // cols[(o*4 + tap), pixel] = sum_i W[i, o, tap] * x[i, pixel]
            gemm_tn(oc * 4, ic, p, self.weight.data(), x.item(n), &mut cols, false);
            let y = out.item_mut(n);
            for o in 0..oc {
                let b = self.bias.data()[o];
                for tap in 0..4 {
                    let (ky, kx) = (tap / 2, tap % 2);
                    let row = &cols[(o * 4 + tap) * p..][..p];
                    for yy in 0..h {
                        for xx in 0..w {
                            y[(o * 2 * h + 2 * yy + ky) * 2 * w + 2 * xx + kx] = row[yy * w + xx] + b;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (ic, h, w) = (x.channels(), x.height(), x.width());
        let oc = self.out_channels();
        grad_out.expect_shape([x.batch(), oc, 2 * h, 2 * w])?;
        let p = h * w;
        let mut grad_x = Tensor::zeros(x.shape());
        let mut cols = vec![T::zero(); oc * 4 * p];
        let mut gw = vec![T::zero(); self.weight.len()];
        let mut gb = vec![T::zero(); oc];
        for n in 0..x.batch() {
            let go = grad_out.item(n);
            for o in 0..oc {
                for tap in 0..4 {
                    let (ky, kx) = (tap / 2, tap % 2);
                    let row = &mut cols[(o * 4 + tap) * p..][..p];
                    for yy in 0..h {
                        for xx in 0..w {
                            let g = go[(o * 2 * h + 2 * yy + ky) * 2 * w + 2 * xx + kx];
                            row[yy * w + xx] = g;
                            gb[o] += g;
                        }
                    }
                }
            }
            gemm_nn(ic, oc * 4, p, self.weight.data(), &cols, grad_x.item_mut(n), false);
            gemm_nt(ic, p, oc * 4, x.item(n), &cols, &mut gw, true);
        }
        self.weight.accumulate_grad(&gw);
        self.bias.accumulate_grad(&gb);
        Ok(grad_x)
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Tensor<T>; 2] {
        [&self.weight, &self.bias]
    }
}
