//! Plain-text `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::degrade::{EXPOSURE_RATIO, SIGMA_R_GRID, SIGMA_S_GRID};
use crate::error::{Error, Result};
use crate::isp::ToneMode;
use crate::lsfnet::{LsfConfig, FULL_CHANNELS, RAW_INPUT_CHANNELS, SRGB_INPUT_CHANNELS, TOY_CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneSource {
    Procedural,
    Files,
}

/// What the network sees: packed raws, or demosaiced sRGB (ablation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Raw,
    Srgb,
}

impl InputKind {
    pub fn channels(self) -> usize {
        match self {
            InputKind::Raw => RAW_INPUT_CHANNELS,
            InputKind::Srgb => SRGB_INPUT_CHANNELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: ToneMode,
    pub input: InputKind,
    pub scene_source: SceneSource,
    pub scene_dir: Option<PathBuf>,
    pub scene_count: usize,
    pub patch_size: usize,
    pub frame_count: usize,
    pub max_step_px: f64,
    pub light_sources: usize,
    pub light_radius: f64,
    pub exposure_ratio: f64,
    pub sigma_s: Vec<f64>,
    pub sigma_r: Vec<f64>,
    pub wb_gains: [f64; 3],
    pub channels: [usize; 4],
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_halve_epoch: Option<usize>,
    pub checkpoint_every: usize,
    pub data_dir: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: ToneMode::Gamma,
            input: InputKind::Raw,
            scene_source: SceneSource::Procedural,
            scene_dir: None,
            scene_count: 16,
            patch_size: 256,
            frame_count: 16,
            max_step_px: 1.0,
            light_sources: 3,
            light_radius: 4.0,
            exposure_ratio: EXPOSURE_RATIO,
            sigma_s: SIGMA_S_GRID.to_vec(),
            sigma_r: SIGMA_R_GRID.to_vec(),
            wb_gains: [2.0, 1.0, 1.6],
            channels: FULL_CHANNELS,
            batch_size: 16,
            epochs: 20,
            lr: 1e-4,
            lr_halve_epoch: Some(10),
            checkpoint_every: 1,
            data_dir: PathBuf::from("data"),
            out: PathBuf::from("runs"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "input" => {
                self.input = match value {
                    "raw" => InputKind::Raw,
                    "srgb" => InputKind::Srgb,
                    _ => return Err(Error::Config(format!("input: expected raw or srgb, got {value:?}"))),
                }
            }
            "scene_source" => {
                self.scene_source = match value {
                    "procedural" => SceneSource::Procedural,
                    "files" => SceneSource::Files,
                    _ => {
                        return Err(Error::Config(format!(
                            "scene_source: expected procedural or files, got {value:?}"
                        )))
                    }
                }
            }
            "scene_dir" => self.scene_dir = Some(PathBuf::from(value)),
            "scene_count" => self.scene_count = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "frame_count" => self.frame_count = parse(key, value)?,
            "max_step_px" => self.max_step_px = parse(key, value)?,
            "light_sources" => self.light_sources = parse(key, value)?,
            "light_radius" => self.light_radius = parse(key, value)?,
            "exposure_ratio" => self.exposure_ratio = parse(key, value)?,
            "sigma_s" => self.sigma_s = parse_list(key, value)?,
            "sigma_r" => self.sigma_r = parse_list(key, value)?,
            "wb_gains" => {
                let g = parse_list(key, value)?;
                self.wb_gains = g
                    .try_into()
                    .map_err(|_| Error::Config("wb_gains: expected three values".into()))?;
            }
            "channels" => {
                self.channels = match value {
                    "toy" => TOY_CHANNELS,
                    "full" => FULL_CHANNELS,
                    _ => {
                        let v: Vec<usize> = value.split(',').map(|c| parse(key, c.trim())).collect::<Result<_>>()?;
                        v.try_into()
                            .map_err(|_| Error::Config("channels: expected four values, toy or full".into()))?
                    }
                }
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_halve_epoch" => {
                self.lr_halve_epoch = match value {
                    "none" => None,
                    _ => Some(parse(key, value)?),
                }
            }
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(16) {
            return fail(format!(
                "patch_size must be a positive multiple of 16, got {}",
                self.patch_size
            ));
        }
        if !(self.exposure_ratio > 1.0) {
            return fail(format!("exposure_ratio must be > 1, got {}", self.exposure_ratio));
        }
        if self.frame_count == 0 {
            return fail("frame_count must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_step_px) {
            return fail(format!("max_step_px must lie in [0, 1], got {}", self.max_step_px));
        }
        if self.sigma_s.is_empty() || self.sigma_r.is_empty() {
            return fail("noise grids must not be empty".into());
        }
        if self.sigma_s.iter().chain(&self.sigma_r).any(|v| !(*v >= 0.0)) {
            return fail("noise grid values must be >= 0".into());
        }
        if self.wb_gains.iter().any(|g| !(*g > 0.0)) {
            return fail("wb_gains must be > 0".into());
        }
        if self.channels.contains(&0) {
            return fail("channels must be positive".into());
        }
        if self.batch_size == 0 || self.checkpoint_every == 0 {
            return fail("batch_size and checkpoint_every must be positive".into());
        }
        if !(self.lr > 0.0) {
            return fail(format!("lr must be > 0, got {}", self.lr));
        }
        if self.scene_source == SceneSource::Files && self.scene_dir.is_none() {
            return fail("scene_source = files needs scene_dir".into());
        }
        Ok(())
    }

    pub fn model_config(&self) -> LsfConfig {
        LsfConfig {
            channels: self.channels,
            input_channels: self.input.channels(),
            mode: self.mode,
        }
    }

    /// Keys that determine generated data, in canonical form.
    pub fn generation_keys(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "seed={} mode={} input={} scene_source={} scene_count={} patch_size={} frame_count={} \
             max_step_px={:?} light_sources={} light_radius={:?} exposure_ratio={:?} sigma_s={} sigma_r={} wb_gains={}",
            self.seed,
            self.mode,
            match self.input {
                InputKind::Raw => "raw",
                InputKind::Srgb => "srgb",
            },
            match self.scene_source {
                SceneSource::Procedural => "procedural",
                SceneSource::Files => "files",
            },
            self.scene_count,
            self.patch_size,
            self.frame_count,
            self.max_step_px,
            self.light_sources,
            self.light_radius,
            self.exposure_ratio,
            join(&self.sigma_s),
            join(&self.sigma_r),
            join(&self.wb_gains),
        );
        if let Some(dir) = &self.scene_dir {
            let _ = write!(s, " scene_dir={}", dir.display());
        }
        s
    }
}
