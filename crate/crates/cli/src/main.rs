use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lsfnet_core::harness::{
    evaluate, gen_data, gradcheck::LAYERS, infer_to_file, run_bench, run_gradcheck, train, Dataset, GradcheckOptions,
    RunConfig,
};
use lsfnet_core::io::read_tensor;
use lsfnet_core::lsfnet::load_checkpoint;
use lsfnet_core::nn::Tensor;

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "lsfnet",
    version,
    about = "Long/short exposure raw fusion: data, training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tone mode: gamma or mulaw.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Override any config key, e.g. `--set patch_size=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a dataset of long/short pairs.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (defaults to the config's data_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of samples (config key scene_count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Run directory for checkpoints and loss.csv (defaults to the config's out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset directory (defaults to the config's data_dir).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from latest.lsfc in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Fuse one pair into a 16-bit PPM.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory holding the pair.
        #[arg(long, conflicts_with_all = ["long", "short"])]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0, requires = "data")]
        index: usize,
        /// Long-exposure input tensor file (C, H, W).
        #[arg(long, requires = "short")]
        long: Option<PathBuf>,
        /// Short-exposure input tensor file (C, H, W).
        #[arg(long, requires = "long")]
        short: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR and SSIM of a checkpoint over a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Per-sample CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every layer's backward pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one layer's backward pass (negative control).
        #[arg(long, hide = true)]
        mutate: Option<String>,
    },
    /// Time forward/backward passes and pair synthesis.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &common.mode {
        cfg.set("mode", mode)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_input(path: &Path) -> Result<Tensor<f32>> {
    let t = read_tensor(path)?;
    let [c, h, w] = t.dims[..] else {
        bail!("{} holds a {:?} tensor, expected (C, H, W)", path.display(), t.dims);
    };
    Ok(Tensor::from_f64([1, c, h, w], &t.data)?)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::GenData { common, out, count } => {
            let mut cfg = run_config(&common)?;
            if let Some(n) = count {
                cfg.scene_count = n;
            }
            let dir = out.unwrap_or_else(|| cfg.data_dir.clone());
            let n = gen_data(&cfg, &dir)?;
            println!("wrote {n} samples to {}", dir.display());
        }
        Command::Train {
            common,
            out,
            data,
            resume,
        } => {
            let mut cfg = run_config(&common)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            if let Some(data) = data {
                cfg.data_dir = data;
            }
            let report = train(&cfg, resume)?;
            if let Some(last) = report.epoch_losses.last() {
                println!("final epoch loss {last:.6}");
            }
            println!("checkpoint {}", report.checkpoint.display());
        }
        Command::Infer {
            checkpoint,
            data,
            index,
            long,
            short,
            out,
        } => {
            let model = load_checkpoint::<f32>(&checkpoint)?.model;
            let (l, s) = match (data, long, short) {
                (Some(dir), _, _) => {
                    let ds = Dataset::open(&dir)?;
                    lsfnet_core::harness::eval::check_compatible(&model, &ds)?;
                    if index >= ds.len() {
                        bail!("index {index} out of range, dataset has {} samples", ds.len());
                    }
                    let pair = ds.load(index)?;
                    (pair.long, pair.short)
                }
                (None, Some(l), Some(s)) => (read_input(&l)?, read_input(&s)?),
                _ => bail!("infer needs --data DIR or both --long and --short"),
            };
            infer_to_file(&model, &l, &s, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Eval { checkpoint, data, out } => {
            let model = load_checkpoint::<f32>(&checkpoint)?.model;
            let report = evaluate(&model, &Dataset::open(&data)?)?;
            let csv = report.to_csv();
            if let Some(path) = out {
                std::fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{csv}");
            println!(
                "mean PSNR {:.3} dB, mean SSIM {:.4}",
                report.mean_psnr, report.mean_ssim
            );
        }
        Command::Gradcheck { seed, mutate } => {
            let mutate = match mutate {
                None => None,
                Some(name) => Some(
                    *LAYERS
                        .iter()
                        .find(|l| **l == name)
                        .with_context(|| format!("unknown layer {name:?}; layers are {}", LAYERS.join(", ")))?,
                ),
            };
            let report = run_gradcheck(&GradcheckOptions {
                seed,
                mutate,
                ..GradcheckOptions::default()
            })?;
            println!("{report}");
            if !report.passed() {
                return Ok(EXIT_CHECK_FAILED);
            }
        }
        Command::Bench {
            common,
            iterations,
            out,
        } => {
            let report = run_bench(&run_config(&common)?, iterations)?;
            print!("{report}");
            if let Some(path) = out {
                std::fs::write(&path, report.to_string()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
