use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lsfnet_core::harness::{dataset::plan, dataset::synthesize, RunConfig};
use lsfnet_core::isp::IspConfig;
use lsfnet_core::lsfnet::{LsfConfig, LsfModel};
use lsfnet_core::nn::{Conv2d, DeformConv2d, Initializer, Tensor, DEFORM_OFFSET_CHANNELS};

fn ramp(shape: [usize; 4]) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|i| ((i * 37) % 101) as f32 / 101.0 - 0.5).collect()).unwrap()
}

fn convolutions(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv3x3");
    let mut init = Initializer::new(0);
    for &(ch, size) in &[(16, 64), (32, 64), (64, 32)] {
        let conv = Conv2d::<f32>::new(&mut init, ch, ch, 3, 1);
        let dcn = DeformConv2d::<f32>::new(&mut init, ch, ch);
        let x = ramp([1, ch, size, size]);
        let off = ramp([1, DEFORM_OFFSET_CHANNELS, size, size]).scale(2.0);
        let id = format!("{ch}ch_{size}px");
        group.bench_with_input(BenchmarkId::new("standard", &id), &x, |b, x| {
            b.iter(|| conv.forward(black_box(x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("deformable", &id), &x, |b, x| {
            b.iter(|| dcn.forward(black_box(x), black_box(&off)).unwrap())
        });
    }
    group.finish();
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("lsfnet_toy_64px");
    group.sample_size(10);
    let mut model = LsfModel::<f32>::build(LsfConfig::toy(), 0).unwrap();
    let long = ramp([1, 4, 32, 32]).map(|v| v + 0.5);
    let short = ramp([1, 4, 32, 32]).map(|v| v * 0.5 + 0.5);
    let target = Tensor::<f32>::full([1, 3, 64, 64], 0.4);
    let isp = IspConfig::default();
    group.bench_function("forward", |b| {
        b.iter(|| model.forward(black_box(&long), black_box(&short)).unwrap())
    });
    group.bench_function("forward_backward", |b| {
        b.iter(|| {
            model
                .training_loss(black_box(&long), black_box(&short), &target, &isp)
                .unwrap()
        })
    });
    group.finish();
}

fn synthesis(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthesize_pair");
    group.sample_size(10);
    for size in [64, 128] {
        let cfg = RunConfig {
            scene_count: 1,
            patch_size: size,
            ..RunConfig::default()
        };
        let meta = plan(&cfg).unwrap().remove(0);
        group.bench_function(BenchmarkId::from_parameter(size), |b| {
            b.iter(|| synthesize(black_box(&cfg), &meta).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, convolutions, network, synthesis);
criterion_main!(benches);
