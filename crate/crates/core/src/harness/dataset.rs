//! Training-pair synthesis and the on-disk dataset layout.
//!
//! A dataset directory holds `manifest.txt` and, per sample `i`, the files
//! `{i:05}_long.lsft`, `{i:05}_short.lsft` (network inputs, `(C, h, w)`),
//! `{i:05}_target.lsft` (clipped linear ground truth, `(3, H, W)`) and
//! `{i:05}_gt.lsft` (the same after the ISP output stage). All tensors are f32.
//!
//! The manifest is line-oriented: a version line, one `config` line holding
//! every generation key, then one `sample` line per sample. Every value is
//! printed so that it parses back to the identical bits, which lets
//! [`regenerate`] rebuild a sample from its record alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::degrade::{
    gen_trajectory, make_long_exposure, make_short_exposure, match_input_brightness, trajectory_to_flows,
    ColorDistortion, Intrinsics, NoiseParams,
};
use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor, DType};
use crate::isp::{demosaic_malvar, post_process, white_balance, IspConfig};
use crate::nn::{pixel_unshuffle, Tensor};
use crate::raw::{clip_unit, pack_rggb, IrradianceImage, RawImage};
use crate::rng::{rng_from_seed, split_seed};
use crate::scene::{apply_scale, load_irradiance, procedural_scene, SceneParams, SCALE_RANGE};

use super::config::{InputKind, RunConfig, SceneSource};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const MANIFEST_VERSION: &str = "lsfnet-manifest 1";

/// Everything needed to regenerate one sample, given the run config.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub index: usize,
    pub seed: u64,
    /// Procedural scene seed, or the source file for file scenes.
    pub scene: SceneRef,
    pub crop_y: usize,
    pub crop_x: usize,
    pub scale_s: f64,
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub c_red: f64,
    pub c_blue: f64,
    pub trajectory_seed: u64,
    pub skip_k: usize,
    pub noise_seed_long: u64,
    pub noise_seed_short: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneRef {
    Procedural(u64),
    File(PathBuf),
}

/// Network inputs and targets for one sample, batch dimension 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub meta: SampleMeta,
    pub long: Tensor<f32>,
    pub short: Tensor<f32>,
    pub target: Tensor<f32>,
    pub gt: Tensor<f32>,
}

fn scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let ext = p
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or("")
                .to_ascii_lowercase();
            matches!(ext.as_str(), "png" | "ppm" | "pnm" | "pam" | "lsft" | "bin" | "tensor")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no scene files in {}", dir.display())));
    }
    Ok(files)
}

/// Draw the metadata of sample `index`. Each stochastic choice uses its own
/// child seed of `split_seed(cfg.seed, index)`.
pub fn sample_meta(cfg: &RunConfig, index: usize, files: &[PathBuf]) -> Result<SampleMeta> {
    let seed = split_seed(cfg.seed, index as u64);
    let mut rng = rng_from_seed(split_seed(seed, 0));
    let p = cfg.patch_size;
    let (scene, crop_y, crop_x) = match cfg.scene_source {
        SceneSource::Procedural => (SceneRef::Procedural(split_seed(seed, 1)), 0, 0),
        SceneSource::Files => {
            let path = files[index % files.len()].clone();
            let img = load_irradiance(&path)?;
            if img.height() < p || img.width() < p {
                return Err(Error::Dimension(format!(
                    "{} is {}x{}, smaller than patch {p}",
                    path.display(),
                    img.height(),
                    img.width()
                )));
            }
            // Even offsets keep the Bayer phase of the crop.
            let y = 2 * rng.random_range(0..=(img.height() - p) / 2);
            let x = 2 * rng.random_range(0..=(img.width() - p) / 2);
            (SceneRef::File(path), y, x)
        }
    };
    let scale_s = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
    let sigma_s = cfg.sigma_s[rng.random_range(0..cfg.sigma_s.len())];
    let sigma_r = cfg.sigma_r[rng.random_range(0..cfg.sigma_r.len())];
    let cd = ColorDistortion::sample(&mut rng);
    let trajectory_seed = split_seed(seed, 2);
    let intr = Intrinsics::default_for(p, p);
    let skip_k = gen_trajectory(trajectory_seed, cfg.frame_count, &intr, cfg.max_step_px)?.skip_k;
    Ok(SampleMeta {
        index,
        seed,
        scene,
        crop_y,
        crop_x,
        scale_s,
        sigma_s,
        sigma_r,
        c_red: cd.c_red,
        c_blue: cd.c_blue,
        trajectory_seed,
        skip_k,
        noise_seed_long: split_seed(seed, 3),
        noise_seed_short: split_seed(seed, 4),
    })
}

fn scene_for(cfg: &RunConfig, meta: &SampleMeta) -> Result<IrradianceImage> {
    let p = cfg.patch_size;
    match &meta.scene {
        SceneRef::Procedural(seed) => procedural_scene(
            &SceneParams {
                scale_s: meta.scale_s,
                seed: *seed,
                light_source_count: cfg.light_sources,
                light_source_radius: cfg.light_radius,
            },
            p,
            p,
        ),
        SceneRef::File(path) => load_irradiance(path)?.crop(meta.crop_y, meta.crop_x, p, p),
    }
}

fn packed_tensor(raw: &RawImage) -> Result<Tensor<f32>> {
    let packed = pack_rggb(raw)?;
    Tensor::from_f64([1, 4, packed.height(), packed.width()], &packed.to_planar())
}

/// Demosaic, post-process, then fold 2x2 blocks into channels.
fn srgb_tensor(raw: &RawImage, isp: &IspConfig) -> Result<Tensor<f32>> {
    let rgb = post_process(&demosaic_malvar(raw)?, isp)?;
    let t = Tensor::<f32>::from_f64([1, 3, rgb.height(), rgb.width()], &rgb.to_planar())?;
    pixel_unshuffle(&t)
}

/// Build the pair described by `meta`.
pub fn synthesize(cfg: &RunConfig, meta: &SampleMeta) -> Result<SamplePair> {
    let p = cfg.patch_size;
    let ir = scene_for(cfg, meta)?;
    let s_ir = apply_scale(&ir, meta.scale_s)?;
    let intr = Intrinsics::default_for(p, p);
    let traj = gen_trajectory(meta.trajectory_seed, cfg.frame_count, &intr, cfg.max_step_px)?;
    let flows = trajectory_to_flows(&traj, &intr);
    let np = NoiseParams {
        sigma_s: meta.sigma_s,
        sigma_r: meta.sigma_r,
        exposure_ratio: cfg.exposure_ratio,
    };
    np.validate()?;
    let long = make_long_exposure(&s_ir, &flows, meta.skip_k, &np, meta.noise_seed_long)?;
    let cd = ColorDistortion::new(meta.c_red, meta.c_blue)?;
    let short = make_short_exposure(&s_ir, cfg.exposure_ratio, &cd, &np, meta.noise_seed_short)?;
    let (long, short) = match_input_brightness(&long, &short, cfg.exposure_ratio, meta.scale_s, cfg.mode)?;

    let isp = IspConfig::with_mode(cfg.mode);
    let (long, short) = match cfg.input {
        InputKind::Raw => (
            packed_tensor(&white_balance(&long, cfg.wb_gains)?)?,
            packed_tensor(&white_balance(&short, cfg.wb_gains)?)?,
        ),
        InputKind::Srgb => (
            srgb_tensor(&white_balance(&long, cfg.wb_gains)?, &isp)?,
            srgb_tensor(&white_balance(&short, cfg.wb_gains)?, &isp)?,
        ),
    };

    let target = match cfg.mode {
        crate::isp::ToneMode::Gamma => clip_unit(&s_ir),
        crate::isp::ToneMode::MuLaw => clip_unit(&ir),
    }
    .to_rgb();
    let gt = post_process(&target, &isp)?;
    Ok(SamplePair {
        meta: meta.clone(),
        long,
        short,
        target: Tensor::from_f64([1, 3, p, p], &target.to_planar())?,
        gt: Tensor::from_f64([1, 3, p, p], &gt.to_planar())?,
    })
}

/// Metadata for every sample of the run, in index order.
pub fn plan(cfg: &RunConfig) -> Result<Vec<SampleMeta>> {
    cfg.validate()?;
    let files = match cfg.scene_source {
        SceneSource::Files => scene_files(cfg.scene_dir.as_deref().expect("validated"))?,
        SceneSource::Procedural => Vec::new(),
    };
    (0..cfg.scene_count).map(|i| sample_meta(cfg, i, &files)).collect()
}

/// Synthesize every sample in memory, in parallel.
pub fn synthesize_all(cfg: &RunConfig) -> Result<Vec<SamplePair>> {
    plan(cfg)?.par_iter().map(|m| synthesize(cfg, m)).collect()
}

fn sample_path(dir: &Path, index: usize, part: &str) -> PathBuf {
    dir.join(format!("{index:05}_{part}.lsft"))
}

fn write_part(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let [_, c, h, w] = t.shape();
    write_tensor(path, &[c, h, w], &t.to_f64(), DType::F32)
}

fn read_part(path: &Path) -> Result<Tensor<f32>> {
    let t = read_tensor(path)?;
    if t.dims.len() != 3 {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("expected (C, H, W), got {:?}", t.dims),
        });
    }
    Tensor::from_f64([1, t.dims[0], t.dims[1], t.dims[2]], &t.data)
}

pub fn format_meta(m: &SampleMeta) -> String {
    let scene = match &m.scene {
        SceneRef::Procedural(s) => format!("procedural:{s}"),
        SceneRef::File(p) => format!("file:{}", p.display()),
    };
    format!(
        "sample index={} seed={} scene={} crop_y={} crop_x={} scale_s={:?} sigma_s={:?} sigma_r={:?} \
         c_red={:?} c_blue={:?} trajectory_seed={} skip_k={} noise_seed_long={} noise_seed_short={}",
        m.index,
        m.seed,
        scene,
        m.crop_y,
        m.crop_x,
        m.scale_s,
        m.sigma_s,
        m.sigma_r,
        m.c_red,
        m.c_blue,
        m.trajectory_seed,
        m.skip_k,
        m.noise_seed_long,
        m.noise_seed_short
    )
}

fn fields(line: &str) -> BTreeMap<&str, &str> {
    line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect()
}

pub fn parse_meta(line: &str) -> Result<SampleMeta> {
    let f = fields(
        line.strip_prefix("sample ")
            .ok_or_else(|| Error::Config("not a sample line".into()))?,
    );
    fn get<'a, T: std::str::FromStr>(f: &BTreeMap<&'a str, &'a str>, key: &str) -> Result<T> {
        f.get(key)
            .ok_or_else(|| Error::Config(format!("sample line lacks {key}")))?
            .parse()
            .map_err(|_| Error::Config(format!("sample line has a bad {key}")))
    }
    let scene_field: String = get(&f, "scene")?;
    let scene = if let Some(s) = scene_field.strip_prefix("procedural:") {
        SceneRef::Procedural(s.parse().map_err(|_| Error::Config("bad procedural seed".into()))?)
    } else if let Some(p) = scene_field.strip_prefix("file:") {
        SceneRef::File(PathBuf::from(p))
    } else {
        return Err(Error::Config(format!("bad scene reference {scene_field:?}")));
    };
    Ok(SampleMeta {
        index: get(&f, "index")?,
        seed: get(&f, "seed")?,
        scene,
        crop_y: get(&f, "crop_y")?,
        crop_x: get(&f, "crop_x")?,
        scale_s: get(&f, "scale_s")?,
        sigma_s: get(&f, "sigma_s")?,
        sigma_r: get(&f, "sigma_r")?,
        c_red: get(&f, "c_red")?,
        c_blue: get(&f, "c_blue")?,
        trajectory_seed: get(&f, "trajectory_seed")?,
        skip_k: get(&f, "skip_k")?,
        noise_seed_long: get(&f, "noise_seed_long")?,
        noise_seed_short: get(&f, "noise_seed_short")?,
    })
}

/// Generate the dataset into `dir` and return the number of samples written.
pub fn gen_data(cfg: &RunConfig, dir: &Path) -> Result<usize> {
    let metas = plan(cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    metas.par_iter().try_for_each(|m| -> Result<()> {
        let pair = synthesize(cfg, m)?;
        write_part(&sample_path(dir, m.index, "long"), &pair.long)?;
        write_part(&sample_path(dir, m.index, "short"), &pair.short)?;
        write_part(&sample_path(dir, m.index, "target"), &pair.target)?;
        write_part(&sample_path(dir, m.index, "gt"), &pair.gt)?;
        Ok(())
    })?;
    let mut manifest = format!("{MANIFEST_VERSION}\nconfig {}\n", cfg.generation_keys());
    for m in &metas {
        manifest.push_str(&format_meta(m));
        manifest.push('\n');
    }
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {} samples to {}", metas.len(), dir.display());
    Ok(metas.len())
}

/// A dataset on disk: the generation config recovered from the manifest plus
/// every sample record.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub samples: Vec<SampleMeta>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let malformed = |reason: String| Error::Malformed {
            path: path.clone(),
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_VERSION) {
            return Err(malformed("missing version line".into()));
        }
        let cfg_line = lines
            .next()
            .and_then(|l| l.strip_prefix("config "))
            .ok_or_else(|| malformed("missing config line".into()))?;
        let mut config = RunConfig::default();
        for (k, v) in fields(cfg_line) {
            config.set(k, v).map_err(|e| malformed(e.to_string()))?;
        }
        let samples = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| parse_meta(l).map_err(|e| malformed(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if samples.len() != config.scene_count {
            return Err(malformed(format!(
                "{} sample lines, config says {}",
                samples.len(),
                config.scene_count
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn load(&self, i: usize) -> Result<SamplePair> {
        let m = &self.samples[i];
        Ok(SamplePair {
            meta: m.clone(),
            long: read_part(&sample_path(&self.dir, m.index, "long"))?,
            short: read_part(&sample_path(&self.dir, m.index, "short"))?,
            target: read_part(&sample_path(&self.dir, m.index, "target"))?,
            gt: read_part(&sample_path(&self.dir, m.index, "gt"))?,
        })
    }

    pub fn load_all(&self) -> Result<Vec<SamplePair>> {
        (0..self.len()).into_par_iter().map(|i| self.load(i)).collect()
    }

    /// Rebuild sample `i` from its manifest record.
    pub fn regenerate(&self, i: usize) -> Result<SamplePair> {
        synthesize(&self.config, &self.samples[i])
    }
}
