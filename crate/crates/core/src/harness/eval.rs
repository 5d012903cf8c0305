//! Inference to display images and dataset evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::write_rgb16;
use crate::isp::IspConfig;
use crate::lsfnet::LsfModel;
use crate::nn::Tensor;
use crate::raw::RgbImage;

use super::config::InputKind;
use super::dataset::Dataset;
use super::metrics::{psnr, ssim};
use super::train::render;

/// Fuse one pair and post-process it into a displayable sRGB image.
pub fn infer(model: &LsfModel<f32>, long: &Tensor<f32>, short: &Tensor<f32>) -> Result<RgbImage> {
    if long.batch() != 1 {
        return Err(Error::Shape(format!(
            "infer takes one pair, got a batch of {}",
            long.batch()
        )));
    }
    let pred = model.forward(long, short)?;
    let isp = IspConfig::with_mode(model.config.mode);
    RgbImage::from_planar(pred.height(), pred.width(), &render(&pred, &isp))
}

/// Run inference and write a 16-bit PPM.
pub fn infer_to_file(model: &LsfModel<f32>, long: &Tensor<f32>, short: &Tensor<f32>, out: &Path) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_rgb16(out, &infer(model, long, short)?)
}

/// Reject datasets whose inputs the model was not built for.
pub fn check_compatible(model: &LsfModel<f32>, ds: &Dataset) -> Result<()> {
    let input = ds.config.input;
    let channels = input.channels();
    if channels != model.config.input_channels || ds.config.mode != model.config.mode {
        return Err(Error::Config(format!(
            "checkpoint expects {} input channels in {} mode; dataset holds {} inputs ({channels} channels) in {} mode",
            model.config.input_channels,
            model.config.mode,
            match input {
                InputKind::Raw => "raw",
                InputKind::Srgb => "srgb",
            },
            ds.config.mode
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: Vec<SampleScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn from_scores(samples: Vec<SampleScore>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("nothing to evaluate".into()));
        }
        let n = samples.len() as f64;
        Ok(Self {
            mean_psnr: samples.iter().map(|s| s.psnr).sum::<f64>() / n,
            mean_ssim: samples.iter().map(|s| s.ssim).sum::<f64>() / n,
            samples,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,psnr,ssim\n");
        for r in &self.samples {
            let _ = writeln!(s, "{},{:.6},{:.6}", r.index, r.psnr, r.ssim);
        }
        let _ = writeln!(s, "mean,{:.6},{:.6}", self.mean_psnr, self.mean_ssim);
        s
    }
}

/// Score a prediction against a ground truth, both planar `(3, h, w)`.
pub fn score(index: usize, pred: &[f64], gt: &[f64], h: usize, w: usize) -> Result<SampleScore> {
    Ok(SampleScore {
        index,
        psnr: psnr(pred, gt)?,
        ssim: ssim(pred, gt, 3, h, w)?,
    })
}

/// PSNR and SSIM of the model's output against every sample's `gt`.
pub fn evaluate(model: &LsfModel<f32>, ds: &Dataset) -> Result<EvalReport> {
    check_compatible(model, ds)?;
    let scores = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let pair = ds.load(i)?;
            let out = infer(model, &pair.long, &pair.short)?;
            score(
                pair.meta.index,
                &out.to_planar(),
                &pair.gt.to_f64(),
                out.height(),
                out.width(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(scores)
}
