//! Image quality metrics on planar images with values in [0, 1].

use crate::error::{Error, Result};

/// Reported when the images are identical.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "metric inputs have {} and {} values",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB for unit peak, capped at [`PSNR_CAP`].
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    let e = mse(a, b)?;
    Ok(if e == 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * e.log10()).min(PSNR_CAP)
    })
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-region filtering of one `h x w` plane.
fn filter_valid(img: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, g: &[f64]) -> f64 {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mu_a = filter_valid(a, h, w, g);
    let mu_b = filter_valid(b, h, w, g);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let e_aa = filter_valid(&prod(a, a), h, w, g);
    let e_bb = filter_valid(&prod(b, b), h, w, g);
    let e_ab = filter_valid(&prod(a, b), h, w, g);
    let n = mu_a.len();
    (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum::<f64>()
        / n as f64
}

/// Mean SSIM over channels of planar `(c, h, w)` images, Gaussian 11x11
/// window with sigma 1.5, evaluated on the valid region only.
pub fn ssim(a: &[f64], b: &[f64], c: usize, h: usize, w: usize) -> Result<f64> {
    check(a, b)?;
    if a.len() != c * h * w {
        return Err(Error::Shape(format!("{} values for a {c}x{h}x{w} image", a.len())));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let plane = h * w;
    Ok((0..c)
        .map(|k| ssim_plane(&a[k * plane..(k + 1) * plane], &b[k * plane..(k + 1) * plane], h, w, &g))
        .sum::<f64>()
        / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn psnr_known_values() {
        let a = vec![0.5; 100];
        let b = vec![0.6; 100];
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!(psnr(&a, &b[..50]).is_err());
    }

    #[test]
    fn ssim_of_constants_matches_closed_form() {
        // Flat images: variances vanish, leaving the luminance term.
        let (p, q) = (0.3, 0.5);
        let a = vec![p; 3 * 16 * 16];
        let b = vec![q; 3 * 16 * 16];
        let c1 = K1 * K1;
        let expected = (2.0 * p * q + c1) / (p * p + q * q + c1);
        assert!((ssim(&a, &b, 3, 16, 16).unwrap() - expected).abs() < 1e-12);
        assert!(ssim(&a, &b, 3, 8, 8).is_err());
    }

    #[test]
    fn zero_versus_one_is_zero_db() {
        assert_eq!(psnr(&[0.0; 12], &[1.0; 12]).unwrap(), 0.0);
    }

    /// Direct per-window SSIM with a 2-D Gaussian built from scratch.
    fn ssim_loop(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
        let mut g2 = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
        let mut total = 0.0;
        for (i, row) in g2.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
                *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
                total += *v;
            }
        }
        let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
        let mut sum = 0.0;
        let mut count = 0;
        for y in 0..=h - SSIM_WINDOW {
            for x in 0..=w - SSIM_WINDOW {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let g = g2[i][j] / total;
                        let (p, q) = (a[(y + i) * w + x + j], b[(y + i) * w + x + j]);
                        ma += g * p;
                        mb += g * q;
                        saa += g * p * p;
                        sbb += g * q * q;
                        sab += g * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        sum / count as f64
    }

    fn fixture(h: usize, w: usize, phase: f64) -> Vec<f64> {
        (0..h * w)
            .map(|i| {
                let (y, x) = ((i / w) as f64, (i % w) as f64);
                0.5 + 0.4 * (0.9 * x + phase).sin() * (0.7 * y).cos()
            })
            .collect()
    }

    #[test]
    fn ssim_matches_loop_oracle() {
        let (h, w) = (19, 23);
        let a = fixture(h, w, 0.0);
        let b: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, v)| (v * 0.8 + 0.05 * ((i * 7) % 5) as f64).min(1.0))
            .collect();
        let got = ssim(&a, &b, 1, h, w).unwrap();
        assert!((got - ssim_loop(&a, &b, h, w)).abs() < 1e-6);
        assert!(got < 0.999);
    }

    #[test]
    fn shifted_structure_scores_low() {
        let (h, w) = (32, 32);
        let a = fixture(h, w, 0.0);
        let shifted = fixture(h, w, std::f64::consts::PI);
        assert!(ssim(&a, &shifted, 1, h, w).unwrap() < 0.5);
    }

    #[test]
    fn window_sums_to_one() {
        assert!((gaussian_window().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn ssim_identity_and_symmetry(vals in prop::collection::vec(0.0f64..1.0, 2 * 12 * 13),
                                      noise in prop::collection::vec(-0.2f64..0.2, 2 * 12 * 13)) {
            let b: Vec<f64> = vals.iter().zip(&noise).map(|(v, n)| (v + n).clamp(0.0, 1.0)).collect();
            prop_assert!((ssim(&vals, &vals, 2, 12, 13).unwrap() - 1.0).abs() < 1e-9);
            let s = ssim(&vals, &b, 2, 12, 13).unwrap();
            prop_assert!((s - ssim(&b, &vals, 2, 12, 13).unwrap()).abs() < 1e-12);
            prop_assert!(s <= 1.0 + 1e-12);
            prop_assert!(psnr(&vals, &b).unwrap() > 0.0);
        }
    }
}
