use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::raw::{IrradianceImage, Samples};
use crate::rng::rng_from_seed;

pub const EXPOSURE_RATIO: f64 = 30.0;
pub const SIGMA_R_GRID: [f64; 3] = [0.01, 0.02, 0.04];
pub const SIGMA_S_GRID: [f64; 3] = [0.005, 0.01, 0.02];
pub const COLOR_RANGE: (f64, f64) = (0.7, 0.9);

/// Heteroscedastic Gaussian noise: variance `sigma_s * I + sigma_r^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub exposure_ratio: f64,
}

impl NoiseParams {
    pub fn new(sigma_s: f64, sigma_r: f64) -> Result<Self> {
        let p = Self {
            sigma_s,
            sigma_r,
            exposure_ratio: EXPOSURE_RATIO,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zero() -> Self {
        Self {
            sigma_s: 0.0,
            sigma_r: 0.0,
            exposure_ratio: EXPOSURE_RATIO,
        }
    }

    /// Pick one `(sigma_s, sigma_r)` pair from the default grid.
    pub fn sample_grid(rng: &mut impl Rng) -> Self {
        Self {
            sigma_s: SIGMA_S_GRID[rng.random_range(0..SIGMA_S_GRID.len())],
            sigma_r: SIGMA_R_GRID[rng.random_range(0..SIGMA_R_GRID.len())],
            exposure_ratio: EXPOSURE_RATIO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s >= 0.0 && self.sigma_r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise parameters must be >= 0, got sigma_s={} sigma_r={}",
                self.sigma_s, self.sigma_r
            )));
        }
        if !(self.exposure_ratio > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "exposure ratio must be > 1, got {}",
                self.exposure_ratio
            )));
        }
        Ok(())
    }

    /// Per-sample variance at raw level `level` for `branch`.
    ///
    /// The short branch sees the same shot noise on its `1/r` signal and a
    /// read variance of `sigma_r^2 / r`; after scaling by `r` for the network
    /// its variance is `r` times the long branch's at the same brightness.
    pub fn variance(&self, level: f64, branch: Branch) -> f64 {
        let shot = self.sigma_s * level.max(0.0);
        let read = self.sigma_r * self.sigma_r;
        match branch {
            Branch::Long => shot + read,
            Branch::Short => shot + read / self.exposure_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Long,
    Short,
}

/// Add zero-mean Gaussian noise with the branch's per-sample variance.
pub fn add_noise<I: Samples + Clone>(img: &I, np: &NoiseParams, branch: Branch, seed: u64) -> I {
    let mut out = img.clone();
    if np.sigma_s == 0.0 && np.sigma_r == 0.0 {
        return out;
    }
    let mut rng = rng_from_seed(seed);
    for v in out.samples_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += np.variance(*v, branch).sqrt() * n;
    }
    out
}

/// Red/blue gains of the short exposure's colour cast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorDistortion {
    pub c_red: f64,
    pub c_blue: f64,
}

impl ColorDistortion {
    pub const IDENTITY: Self = Self {
        c_red: 1.0,
        c_blue: 1.0,
    };

    pub fn new(c_red: f64, c_blue: f64) -> Result<Self> {
        for c in [c_red, c_blue] {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "colour coefficients must lie in (0, 1], got {c}"
                )));
            }
        }
        Ok(Self { c_red, c_blue })
    }

    pub fn sample(rng: &mut impl Rng) -> Self {
        Self {
            c_red: rng.random_range(COLOR_RANGE.0..=COLOR_RANGE.1),
            c_blue: rng.random_range(COLOR_RANGE.0..=COLOR_RANGE.1),
        }
    }
}

pub fn apply_color_distortion(img: &IrradianceImage, cd: &ColorDistortion) -> IrradianceImage {
    let mut out = img.clone();
    for px in out.samples_mut().chunks_exact_mut(3) {
        px[0] *= cd.c_red;
        px[2] *= cd.c_blue;
    }
    out
}
