use crate::error::{Error, Result};
use crate::raw::IrradianceImage;

use super::FlowStack;

/// Backward warp of frame `t`: output(p) = img(p + flow_t(p)), bilinear,
/// with coordinates clamped to the image (border replication).
pub fn warp_bilinear(img: &IrradianceImage, flows: &FlowStack, t: usize) -> IrradianceImage {
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = flows.get(t, y, x);
            let sy = (y as f64 + dy).clamp(0.0, (h - 1) as f64);
            let sx = (x as f64 + dx).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (ly, lx) = (sy - y0 as f64, sx - x0 as f64);
            for c in 0..3 {
                let top = img.get(y0, x0, c) * (1.0 - lx) + img.get(y0, x1, c) * lx;
                let bottom = img.get(y1, x0, c) * (1.0 - lx) + img.get(y1, x1, c) * lx;
                out.set(y, x, c, top * (1.0 - ly) + bottom * ly);
            }
        }
    }
    out
}

/// Mean of the scene warped by frames `skip_k..frame_count` of the flow stack.
pub fn synth_blur(img: &IrradianceImage, flows: &FlowStack, skip_k: usize) -> Result<IrradianceImage> {
    if flows.height != img.height() || flows.width != img.width() {
        return Err(Error::Shape(format!(
            "flows are {}x{}, image is {}x{}",
            flows.height,
            flows.width,
            img.height(),
            img.width()
        )));
    }
    let n = flows.frame_count();
    if skip_k >= n {
        return Err(Error::InvalidParameter(format!(
            "skip_k {skip_k} must be below frame count {n}"
        )));
    }
    // Running mean, so identical frames reproduce the input bit for bit.
    let mut mean = warp_bilinear(img, flows, skip_k).into_data();
    for (i, t) in (skip_k + 1..n).enumerate() {
        let weight = 1.0 / (i + 2) as f64;
        let warped = warp_bilinear(img, flows, t);
        for (m, v) in mean.iter_mut().zip(warped.data()) {
            *m += (v - *m) * weight;
        }
    }
    IrradianceImage::new(img.height(), img.width(), mean)
}
