//! Mini-batch ADAM training with per-epoch logging, checkpoints and resume.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::isp::{post_process_planar, IspConfig};
use crate::lsfnet::{load_checkpoint, save_checkpoint, LsfConfig, LsfModel};
use crate::nn::{adam_step, AdamConfig, AdamState, LrSchedule, Scalar, Tensor};
use crate::rng::{rng_from_seed, split_seed};

use super::config::RunConfig;
use super::dataset::{Dataset, SamplePair};
use super::metrics::psnr;

pub const LATEST_CHECKPOINT: &str = "latest.lsfc";
pub const FINAL_CHECKPOINT: &str = "model.lsfc";
pub const LOSS_LOG: &str = "loss.csv";

/// Mean loss over `pairs` with gradients averaged the same way, left in the
/// model's gradient buffers. Samples run in parallel on model copies.
pub fn batch_gradients(model: &mut LsfModel<f32>, pairs: &[&SamplePair], isp: &IspConfig) -> Result<f64> {
    let shared = &*model;
    let results: Vec<(f64, Vec<Vec<f32>>)> = pairs
        .par_iter()
        .map(|p| {
            let mut m = shared.clone();
            let loss = m.training_loss(&p.long, &p.short, &p.target, isp)?;
            let grads = m
                .named_parameters()
                .iter()
                .map(|(_, t)| t.grad().map(<[f32]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
                .collect();
            Ok((loss as f64, grads))
        })
        .collect::<Result<_>>()?;
    let n = results.len() as f32;
    model.zero_grad();
    for (_, grads) in &results {
        for (p, g) in model.parameters_mut().into_iter().zip(grads) {
            p.accumulate_grad(g);
        }
    }
    for p in model.parameters_mut() {
        for g in p.grad_mut() {
            *g /= n;
        }
    }
    Ok(results.iter().map(|(l, _)| l).sum::<f64>() / results.len() as f64)
}

/// Post-process a camera-RGB prediction and clip it to the displayable range.
pub fn render<T: Scalar>(pred: &Tensor<T>, isp: &IspConfig) -> Vec<f64> {
    let mut out = post_process_planar(&pred.to_f64(), pred.plane(), isp).0;
    for v in out.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// Mean PSNR of the clipped, post-processed prediction against each pair's `gt`.
pub fn mean_psnr<T: Scalar>(model: &LsfModel<T>, pairs: &[SamplePair], isp: &IspConfig) -> Result<f64> {
    let scores = pairs
        .par_iter()
        .map(|p| {
            let pred = model.forward(&p.long.cast(), &p.short.cast())?;
            psnr(&render(&pred, isp), &p.gt.to_f64())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverfitReport {
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub psnr: f64,
    pub model: LsfModel<f32>,
}

/// Full-batch ADAM on a fixed set of pairs. `losses[k]` is the loss before
/// step `k`, and `final_loss` the loss after the last step.
pub fn overfit(pairs: &[SamplePair], cfg: LsfConfig, seed: u64, steps: usize, lr: f64) -> Result<OverfitReport> {
    let isp = IspConfig::with_mode(cfg.mode);
    let mut model = LsfModel::<f32>::build(cfg, seed)?;
    let mut state = AdamState::new(AdamConfig::default(), &model.parameter_lens());
    let refs: Vec<&SamplePair> = pairs.iter().collect();
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        losses.push(batch_gradients(&mut model, &refs, &isp)?);
        adam_step(&mut model.parameters_mut(), &mut state, lr)?;
    }
    let final_loss = refs
        .iter()
        .map(|p| model.loss(&p.long, &p.short, &p.target, &isp).map(|l| l as f64))
        .sum::<Result<f64>>()?
        / refs.len() as f64;
    Ok(OverfitReport {
        initial_loss: losses.first().copied().unwrap_or(final_loss),
        final_loss,
        psnr: mean_psnr(&model, pairs, &isp)?,
        losses,
        model,
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub checkpoint: PathBuf,
}

fn append_loss(path: &Path, epoch: usize, loss: f64, lr: f64) -> Result<()> {
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    if fresh {
        line.push_str("epoch,loss,lr\n");
    }
    line.push_str(&format!("{epoch},{loss:?},{lr:?}\n"));
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Train on the dataset at `cfg.data_dir`, writing into `cfg.out`. With
/// `resume`, training continues from `latest.lsfc` in the output directory.
pub fn train(cfg: &RunConfig, resume: bool) -> Result<TrainReport> {
    cfg.validate()?;
    let ds = Dataset::open(&cfg.data_dir)?;
    if ds.config.input != cfg.input || ds.config.mode != cfg.mode {
        return Err(Error::Config(format!(
            "dataset was generated with input={:?} mode={}, run asks for input={:?} mode={}",
            ds.config.input, ds.config.mode, cfg.input, cfg.mode
        )));
    }
    let pairs = ds.load_all()?;
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let latest = out.join(LATEST_CHECKPOINT);

    let (mut model, mut state) = if resume {
        let ck = load_checkpoint::<f32>(&latest)?;
        if ck.model.config != cfg.model_config() {
            return Err(Error::Config(
                "checkpoint architecture differs from the run config".into(),
            ));
        }
        let state = ck
            .optimizer
            .ok_or_else(|| Error::Config(format!("{} has no optimizer state", latest.display())))?;
        log::info!("resuming from epoch {}", state.epoch);
        (ck.model, state)
    } else {
        let model = LsfModel::<f32>::build(cfg.model_config(), split_seed(cfg.seed, 1 << 32))?;
        let state = AdamState::new(AdamConfig::default(), &model.parameter_lens());
        (model, state)
    };

    let isp = IspConfig::with_mode(cfg.mode);
    let schedule = LrSchedule {
        base: cfg.lr,
        halve_at_epoch: cfg.lr_halve_epoch,
    };
    let mut epoch_losses = Vec::new();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let lr = schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng_from_seed(split_seed(cfg.seed, (1 << 33) + epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SamplePair> = chunk.iter().map(|&i| &pairs[i]).collect();
            total += batch_gradients(&mut model, &batch, &isp)? * batch.len() as f64;
            adam_step(&mut model.parameters_mut(), &mut state, lr)?;
        }
        let mean = total / pairs.len() as f64;
        state.epoch += 1;
        append_loss(&out.join(LOSS_LOG), epoch, mean, lr)?;
        log::info!("epoch {epoch}: loss {mean:.6} lr {lr:e}");
        epoch_losses.push(mean);
        if state.epoch % cfg.checkpoint_every == 0 || state.epoch == cfg.epochs {
            save_checkpoint(&latest, &model, Some(&state))?;
        }
    }
    let checkpoint = out.join(FINAL_CHECKPOINT);
    save_checkpoint(&checkpoint, &model, None)?;
    Ok(TrainReport {
        epoch_losses,
        checkpoint,
    })
}

/// Stack pairs into batch tensors `(long, short, target)`.
pub fn stack_pairs(pairs: &[&SamplePair]) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let l: Vec<&Tensor<f32>> = pairs.iter().map(|p| &p.long).collect();
    let s: Vec<&Tensor<f32>> = pairs.iter().map(|p| &p.short).collect();
    let t: Vec<&Tensor<f32>> = pairs.iter().map(|p| &p.target).collect();
    Ok((Tensor::stack(&l)?, Tensor::stack(&s)?, Tensor::stack(&t)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::gen_data;

    fn tiny() -> RunConfig {
        RunConfig {
            scene_count: 3,
            patch_size: 32,
            frame_count: 4,
            light_radius: 2.0,
            channels: [2, 3, 4, 5],
            batch_size: 2,
            epochs: 2,
            lr: 1e-3,
            lr_halve_epoch: Some(1),
            ..RunConfig::default()
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_single_gradients() {
        let pairs = super::super::dataset::synthesize_all(&tiny()).unwrap();
        let refs: Vec<&SamplePair> = pairs.iter().collect();
        let isp = IspConfig::default();
        let mut model = LsfModel::<f32>::build(tiny().model_config(), 3).unwrap();
        let loss = batch_gradients(&mut model, &refs, &isp).unwrap();
        let got: Vec<f32> = model.named_parameters()[0].1.grad().unwrap().to_vec();
        // The stacked batch computes the same mean in one pass.
        let (l, s, t) = stack_pairs(&refs).unwrap();
        let mut whole = model.clone();
        let batch_loss = whole.training_loss(&l, &s, &t, &isp).unwrap();
        assert!((loss - batch_loss as f64).abs() < 1e-5 * loss, "{loss} vs {batch_loss}");
        for (a, b) in got.iter().zip(whole.named_parameters()[0].1.grad().unwrap()) {
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn train_then_resume_matches_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let base = RunConfig {
            data_dir: dir.path().join("data"),
            out: dir.path().join("a"),
            ..tiny()
        };
        gen_data(&base, &base.data_dir).unwrap();
        let full = train(&base, false).unwrap();
        assert_eq!(full.epoch_losses.len(), 2);
        let log = fs::read_to_string(base.out.join(LOSS_LOG)).unwrap();
        assert_eq!(log.lines().count(), 3);

        let split = RunConfig {
            out: dir.path().join("b"),
            epochs: 1,
            ..base.clone()
        };
        train(&split, false).unwrap();
        let rest = train(
            &RunConfig {
                epochs: 2,
                ..split.clone()
            },
            true,
        )
        .unwrap();
        assert_eq!(rest.epoch_losses.len(), 1);
        let a = load_checkpoint::<f32>(&base.out.join(FINAL_CHECKPOINT)).unwrap();
        let b = load_checkpoint::<f32>(&split.out.join(FINAL_CHECKPOINT)).unwrap();
        assert_eq!(a.model, b.model);
    }
}
