//! Wall-clock timing of the network and the data pipeline.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::isp::IspConfig;
use crate::lsfnet::{LsfConfig, LsfModel};
use crate::nn::Tensor;

use super::config::RunConfig;
use super::dataset::{plan, synthesize};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchLine {
    pub name: String,
    pub iterations: usize,
    pub mean: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub lines: Vec<BenchLine>,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<40} {:>6} {:>12}", "benchmark", "iters", "mean_ms")?;
        for l in &self.lines {
            writeln!(
                f,
                "{:<40} {:>6} {:>12.3}",
                l.name,
                l.iterations,
                l.mean.as_secs_f64() * 1e3
            )?;
        }
        Ok(())
    }
}

fn time(name: String, iterations: usize, mut f: impl FnMut() -> Result<()>) -> Result<BenchLine> {
    f()?;
    let start = Instant::now();
    for _ in 0..iterations {
        f()?;
    }
    Ok(BenchLine {
        name,
        iterations,
        mean: start.elapsed() / iterations.max(1) as u32,
    })
}

/// Time forward, forward+backward and sample synthesis at the configured
/// patch size and channel widths.
pub fn run_bench(cfg: &RunConfig, iterations: usize) -> Result<BenchReport> {
    cfg.validate()?;
    let p = cfg.patch_size;
    let half = p / 2;
    let lcfg: LsfConfig = cfg.model_config();
    let mut model = LsfModel::<f32>::build(lcfg, cfg.seed)?;
    let c = lcfg.input_channels;
    let long = Tensor::<f32>::full([1, c, half, half], 0.4);
    let short = Tensor::<f32>::full([1, c, half, half], 0.5);
    let target = Tensor::<f32>::full([1, 3, p, p], 0.45);
    let isp = IspConfig::with_mode(cfg.mode);
    let tag = format!("{:?} {p}x{p}", lcfg.channels);
    let mut lines = vec![time(format!("forward {tag}"), iterations, || {
        model.forward(&long, &short).map(|_| ())
    })?];
    lines.push(time(format!("forward+backward {tag}"), iterations, || {
        model.training_loss(&long, &short, &target, &isp).map(|_| ())
    })?);
    let one = super::config::RunConfig {
        scene_count: 1,
        ..cfg.clone()
    };
    let meta = plan(&one)?.remove(0);
    lines.push(time(format!("synthesize pair {p}x{p}"), iterations, || {
        synthesize(&one, &meta).map(|_| ())
    })?);
    Ok(BenchReport { lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_reports_three_lines() {
        let cfg = RunConfig {
            patch_size: 32,
            frame_count: 2,
            light_radius: 2.0,
            channels: [2, 3, 4, 5],
            ..RunConfig::default()
        };
        let report = run_bench(&cfg, 1).unwrap();
        assert_eq!(report.lines.len(), 3);
        assert!(report.to_string().contains("forward+backward"));
    }
}
