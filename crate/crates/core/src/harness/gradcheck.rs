//! Finite-difference verification of every layer's backward pass.
//!
//! Each layer is reduced to a scalar `L = <r, f(x, θ)>` with a fixed random
//! projection `r`, so the analytic vector-Jacobian product with `r` is the
//! gradient of `L`. Every input and parameter group is compared against
//! central differences. Coordinates whose one-sided differences disagree sit
//! on a kink (LeakyReLU at zero, bilinear cell boundaries) and are skipped.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::isp::{post_process_planar, post_process_planar_backward, IspConfig, ToneMode};
use crate::nn::{
    l1_loss, l1_loss_backward, leaky_relu, leaky_relu_backward, pixel_shuffle, pixel_unshuffle, sigmoid,
    sigmoid_backward, upsample_bilinear2x, upsample_bilinear2x_backward, Conv2d, ConvTranspose2d, DeformConv2d,
    ResBlock, Tensor, DEFORM_KERNEL, DEFORM_OFFSET_CHANNELS,
};
use crate::rng::rng_from_seed;

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
const STEP: f64 = 1e-6;
const MAX_COORDS_PER_GROUP: usize = 150;

/// Layer types covered by the suite, each reported exactly once.
pub const LAYERS: [&str; 9] = [
    "conv2d",
    "conv_transpose2d",
    "deform_conv2d",
    "leaky_relu",
    "sigmoid",
    "pixel_shuffle",
    "bilinear_upsample",
    "resblock",
    "l1_through_isp",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub layer: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub layers: Vec<LayerReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| l.passed)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:>12} {:>8} {:>6}  status",
            "layer", "max_rel_err", "checked", "kinks"
        )?;
        for l in &self.layers {
            writeln!(
                f,
                "{:<20} {:>12.3e} {:>8} {:>6}  {}",
                l.layer,
                l.max_rel_error,
                l.checked,
                l.skipped_kinks,
                if l.passed { "PASS" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "{} (tolerance {:e})",
            if self.passed() {
                "all layers pass"
            } else {
                "gradient check FAILED"
            },
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub tolerance: f64,
    /// Corrupt the backward pass of this layer, to prove failures are caught.
    pub mutate: Option<&'static str>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            mutate: None,
        }
    }
}

/// A layer reduced to functions of flat variable groups.
struct Case {
    groups: Vec<Vec<f64>>,
    loss: Box<dyn Fn(&[Vec<f64>]) -> Result<f64>>,
    grads: Box<dyn Fn(&[Vec<f64>]) -> Result<Vec<Vec<f64>>>>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn tensor(shape: [usize; 4], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).expect("group sized for shape")
}

fn param(shape: [usize; 4], data: &[f64]) -> Tensor<f64> {
    Tensor::param(shape, data.to_vec()).expect("group sized for shape")
}

fn grad_of(t: &Tensor<f64>) -> Vec<f64> {
    t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()])
}

fn conv_case(rng: &mut ChaCha8Rng, x: [usize; 4], oc: usize, k: usize, stride: usize) -> Case {
    let ws = [oc, x[1], k, k];
    let bs = [1, oc, 1, 1];
    let build = move |g: &[Vec<f64>]| Conv2d {
        weight: param(ws, &g[1]),
        bias: param(bs, &g[2]),
        stride,
    };
    let out = build(&[
        vec![0.0; ws.iter().product()],
        vec![0.0; ws.iter().product()],
        vec![0.0; oc],
    ])
    .forward(&Tensor::zeros(x))
    .expect("valid conv case")
    .shape();
    let r = tensor(out, &uniform(rng, out.iter().product(), -1.0, 1.0));
    let r2 = r.clone();
    Case {
        groups: vec![
            uniform(rng, x.iter().product(), -1.0, 1.0),
            uniform(rng, ws.iter().product(), -0.5, 0.5),
            uniform(rng, oc, -0.5, 0.5),
        ],
        loss: Box::new(move |g| Ok(build(g).forward(&tensor(x, &g[0]))?.dot(&r))),
        grads: Box::new(move |g| {
            let mut c = build(g);
            let gx = c.backward(&tensor(x, &g[0]), &r2)?;
            Ok(vec![gx.into_data(), grad_of(&c.weight), grad_of(&c.bias)])
        }),
    }
}

fn conv_transpose_case(rng: &mut ChaCha8Rng, x: [usize; 4], oc: usize) -> Case {
    let ws = [x[1], oc, 2, 2];
    let bs = [1, oc, 1, 1];
    let build = move |g: &[Vec<f64>]| ConvTranspose2d {
        weight: param(ws, &g[1]),
        bias: param(bs, &g[2]),
    };
    let out = [x[0], oc, 2 * x[2], 2 * x[3]];
    let r = tensor(out, &uniform(rng, out.iter().product(), -1.0, 1.0));
    let r2 = r.clone();
    Case {
        groups: vec![
            uniform(rng, x.iter().product(), -1.0, 1.0),
            uniform(rng, ws.iter().product(), -0.5, 0.5),
            uniform(rng, oc, -0.5, 0.5),
        ],
        loss: Box::new(move |g| Ok(build(g).forward(&tensor(x, &g[0]))?.dot(&r))),
        grads: Box::new(move |g| {
            let mut c = build(g);
            let gx = c.backward(&tensor(x, &g[0]), &r2)?;
            Ok(vec![gx.into_data(), grad_of(&c.weight), grad_of(&c.bias)])
        }),
    }
}

fn deform_case(rng: &mut ChaCha8Rng, x: [usize; 4], oc: usize) -> Case {
    let ws = [oc, x[1], DEFORM_KERNEL, DEFORM_KERNEL];
    let bs = [1, oc, 1, 1];
    let os = [x[0], DEFORM_OFFSET_CHANNELS, x[2], x[3]];
    let build = move |g: &[Vec<f64>]| DeformConv2d {
        weight: param(ws, &g[2]),
        bias: param(bs, &g[3]),
    };
    let out = [x[0], oc, x[2], x[3]];
    let r = tensor(out, &uniform(rng, out.iter().product(), -1.0, 1.0));
    let r2 = r.clone();
    Case {
        groups: vec![
            uniform(rng, x.iter().product(), -1.0, 1.0),
            // Fractional offsets, some reaching past the border.
            uniform(rng, os.iter().product(), -1.8, 1.8),
            uniform(rng, ws.iter().product(), -0.5, 0.5),
            uniform(rng, oc, -0.5, 0.5),
        ],
        loss: Box::new(move |g| Ok(build(g).forward(&tensor(x, &g[0]), &tensor(os, &g[1]))?.dot(&r))),
        grads: Box::new(move |g| {
            let mut c = build(g);
            let (gx, go) = c.backward(&tensor(x, &g[0]), &tensor(os, &g[1]), &r2)?;
            Ok(vec![
                gx.into_data(),
                go.into_data(),
                grad_of(&c.weight),
                grad_of(&c.bias),
            ])
        }),
    }
}

fn unary_case(
    rng: &mut ChaCha8Rng,
    x: [usize; 4],
    out: [usize; 4],
    lo: f64,
    hi: f64,
    f: impl Fn(&Tensor<f64>) -> Result<Tensor<f64>> + 'static,
    vjp: impl Fn(&Tensor<f64>, &Tensor<f64>) -> Result<Tensor<f64>> + 'static,
) -> Case {
    let r = tensor(out, &uniform(rng, out.iter().product(), -1.0, 1.0));
    let r2 = r.clone();
    Case {
        groups: vec![uniform(rng, x.iter().product(), lo, hi)],
        loss: Box::new(move |g| Ok(f(&tensor(x, &g[0]))?.dot(&r))),
        grads: Box::new(move |g| Ok(vec![vjp(&tensor(x, &g[0]), &r2)?.into_data()])),
    }
}

fn resblock_case(rng: &mut ChaCha8Rng, x: [usize; 4]) -> Case {
    let c = x[1];
    let ws = [c, c, 3, 3];
    let bs = [1, c, 1, 1];
    let build = move |g: &[Vec<f64>]| ResBlock {
        conv1: Conv2d {
            weight: param(ws, &g[1]),
            bias: param(bs, &g[2]),
            stride: 1,
        },
        conv2: Conv2d {
            weight: param(ws, &g[3]),
            bias: param(bs, &g[4]),
            stride: 1,
        },
    };
    let r = tensor(x, &uniform(rng, x.iter().product(), -1.0, 1.0));
    let r2 = r.clone();
    let nw: usize = ws.iter().product();
    Case {
        groups: vec![
            uniform(rng, x.iter().product(), -1.0, 1.0),
            uniform(rng, nw, -0.4, 0.4),
            uniform(rng, c, -0.2, 0.2),
            uniform(rng, nw, -0.4, 0.4),
            uniform(rng, c, -0.2, 0.2),
        ],
        loss: Box::new(move |g| Ok(build(g).forward(&tensor(x, &g[0]))?.0.dot(&r))),
        grads: Box::new(move |g| {
            let mut b = build(g);
            let xt = tensor(x, &g[0]);
            let (_, cache) = b.forward(&xt)?;
            let gx = b.backward(&xt, &cache, &r2)?;
            Ok(vec![
                gx.into_data(),
                grad_of(&b.conv1.weight),
                grad_of(&b.conv1.bias),
                grad_of(&b.conv2.weight),
                grad_of(&b.conv2.bias),
            ])
        }),
    }
}

fn l1_isp_case(rng: &mut ChaCha8Rng, mode: ToneMode) -> Case {
    let shape = [2, 3, 5, 6];
    let plane = shape[2] * shape[3];
    let n: usize = shape.iter().product();
    let target = uniform(rng, n, 0.0, 1.0);
    let target2 = target.clone();
    let isp = IspConfig::with_mode(mode);
    let isp2 = isp;
    Case {
        groups: vec![uniform(rng, n, 0.02, 1.3)],
        loss: Box::new(move |g| {
            let (p, _) = post_process_planar(&g[0], plane, &isp);
            let (t, _) = post_process_planar(&target, plane, &isp);
            l1_loss(&p, &t)
        }),
        grads: Box::new(move |g| {
            let (p, slope) = post_process_planar(&g[0], plane, &isp2);
            let (t, _) = post_process_planar(&target2, plane, &isp2);
            Ok(vec![post_process_planar_backward(
                &l1_loss_backward(&p, &t)?,
                &slope,
                plane,
                &isp2,
            )])
        }),
    }
}

fn cases(layer: &str, rng: &mut ChaCha8Rng) -> Vec<Case> {
    match layer {
        "conv2d" => vec![
            conv_case(rng, [2, 3, 6, 7], 4, 3, 1),
            conv_case(rng, [1, 3, 6, 8], 5, 2, 2),
            conv_case(rng, [2, 4, 3, 3], 6, 1, 1),
        ],
        "conv_transpose2d" => vec![conv_transpose_case(rng, [2, 3, 3, 4], 2)],
        "deform_conv2d" => vec![deform_case(rng, [1, 2, 5, 6], 3)],
        "leaky_relu" => vec![unary_case(
            rng,
            [2, 3, 4, 4],
            [2, 3, 4, 4],
            -1.0,
            1.0,
            |x| Ok(leaky_relu(x)),
            leaky_relu_backward,
        )],
        "sigmoid" => vec![unary_case(
            rng,
            [2, 3, 4, 4],
            [2, 3, 4, 4],
            -4.0,
            4.0,
            |x| Ok(sigmoid(x)),
            |x, g| sigmoid_backward(&sigmoid(x), g),
        )],
        "pixel_shuffle" => vec![unary_case(
            rng,
            [2, 8, 3, 4],
            [2, 2, 6, 8],
            -1.0,
            1.0,
            pixel_shuffle,
            |_, g| pixel_unshuffle(g),
        )],
        "bilinear_upsample" => vec![unary_case(
            rng,
            [2, 3, 4, 5],
            [2, 3, 8, 10],
            -1.0,
            1.0,
            |x| Ok(upsample_bilinear2x(x, 2.0)),
            |x, g| upsample_bilinear2x_backward(g, x.shape(), 2.0),
        )],
        "resblock" => vec![resblock_case(rng, [2, 3, 5, 5])],
        "l1_through_isp" => vec![l1_isp_case(rng, ToneMode::Gamma), l1_isp_case(rng, ToneMode::MuLaw)],
        _ => unreachable!("unknown layer {layer}"),
    }
}

struct Stats {
    max_rel: f64,
    checked: usize,
    kinks: usize,
}

fn check_case(case: &mut Case, rng: &mut ChaCha8Rng, corrupt: bool, stats: &mut Stats) -> Result<()> {
    let mut analytic = (case.grads)(&case.groups)?;
    if corrupt {
        for v in analytic[0].iter_mut() {
            *v *= 1.05;
        }
    }
    let base = (case.loss)(&case.groups)?;
    for gi in 0..case.groups.len() {
        let n = case.groups[gi].len();
        let coords: Vec<usize> = if n <= MAX_COORDS_PER_GROUP {
            (0..n).collect()
        } else {
            (0..MAX_COORDS_PER_GROUP).map(|_| rng.random_range(0..n)).collect()
        };
        for i in coords {
            let orig = case.groups[gi][i];
            case.groups[gi][i] = orig + STEP;
            let up = (case.loss)(&case.groups)?;
            case.groups[gi][i] = orig - STEP;
            let down = (case.loss)(&case.groups)?;
            case.groups[gi][i] = orig;
            let fwd = (up - base) / STEP;
            let bwd = (base - down) / STEP;
            let scale = fwd.abs().max(bwd.abs()).max(1e-6);
            if (fwd - bwd).abs() > 1e-4 * scale {
                stats.kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[gi][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            stats.max_rel = stats.max_rel.max(rel);
            stats.checked += 1;
        }
    }
    Ok(())
}

/// Run every layer's finite-difference suite in double precision.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut layers = Vec::with_capacity(LAYERS.len());
    for (k, &layer) in LAYERS.iter().enumerate() {
        let mut rng = rng_from_seed(crate::rng::split_seed(opts.seed, k as u64));
        let mut stats = Stats {
            max_rel: 0.0,
            checked: 0,
            kinks: 0,
        };
        for mut case in cases(layer, &mut rng) {
            check_case(&mut case, &mut rng, opts.mutate == Some(layer), &mut stats)?;
        }
        log::debug!(
            "{layer}: max relative error {:e} over {} coordinates",
            stats.max_rel,
            stats.checked
        );
        layers.push(LayerReport {
            layer,
            max_rel_error: stats.max_rel,
            checked: stats.checked,
            skipped_kinks: stats.kinks,
            passed: stats.checked > 0 && stats.max_rel < opts.tolerance,
        });
    }
    Ok(GradcheckReport {
        tolerance: opts.tolerance,
        layers,
    })
}
