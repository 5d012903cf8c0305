use super::*;
use crate::nn::{Conv2d, DeformConv2d};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: [usize; 4], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn toy() -> LsfModel<f64> {
    LsfModel::build(LsfConfig::toy(), 11).unwrap()
}

/// Give the zero-initialised offset convs small random weights so the
/// deformable path is exercised away from integer sampling positions.
fn perturb_offsets(model: &mut LsfModel<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for a in model.align.iter_mut() {
        for v in a.offset.weight.data_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
        for v in a.offset.bias.data_mut() {
            *v = rng.random_range(0.1..0.4);
        }
    }
}

#[test]
fn same_seed_same_parameters() {
    assert_eq!(toy(), toy());
    assert_ne!(toy(), LsfModel::build(LsfConfig::toy(), 12).unwrap());
}

#[test]
fn parameter_count_matches_shape_arithmetic() {
    assert_eq!(toy().num_parameters(), 81_084);
    assert_eq!(parameter_count(&LsfConfig::toy()), 81_084);
    assert_eq!(parameter_count(&LsfConfig::full()), 10_991_492);
    let names: std::collections::HashSet<_> = toy().named_parameters().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), toy().named_parameters().len());
}

#[test]
fn toy_smoke_and_shapes() {
    let m = toy();
    let x = random([1, 4, 32, 32], 1, 0.0, 1.0);
    let s = random([1, 4, 32, 32], 2, 0.0, 3.0);
    let enc = m.long_encoder.forward(&x).unwrap();
    let sizes: Vec<_> = enc.features.iter().map(|f| (f.channels(), f.height())).collect();
    assert_eq!(sizes, vec![(4, 32), (8, 16), (12, 8), (16, 4)]);
    let y = m.forward(&x, &s).unwrap();
    assert_eq!(y.shape(), [1, 3, 64, 64]);
    assert!(y.all_finite());
    assert_eq!(y, m.forward(&x, &s).unwrap());
}

#[test]
fn rejects_bad_inputs() {
    let m = toy();
    let a = random([1, 4, 12, 16], 1, 0.0, 1.0);
    assert!(m.forward(&a, &a).is_err());
    let b = random([1, 4, 16, 16], 1, 0.0, 1.0);
    let c = random([1, 4, 16, 24], 1, 0.0, 1.0);
    assert!(m.forward(&b, &c).is_err());
    let d = random([1, 3, 16, 16], 1, 0.0, 1.0);
    assert!(m.forward(&d, &d).is_err());
}

#[test]
fn zero_input_zero_features() {
    let m = toy();
    let enc = m.short_encoder.forward(&Tensor::zeros([1, 4, 16, 16])).unwrap();
    for f in &enc.features {
        assert!(f.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn batch_matches_single_runs_and_permutes() {
    let m = toy();
    let l = random([3, 4, 16, 16], 3, 0.0, 1.0);
    let s = random([3, 4, 16, 16], 4, 0.0, 2.0);
    let y = m.forward(&l, &s).unwrap();
    for n in 0..3 {
        let single = m.forward(&l.select(n), &s.select(n)).unwrap();
        for (a, b) in single.data().iter().zip(y.item(n)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let order = [2, 0, 1];
    let ls: Vec<_> = order.iter().map(|&i| l.select(i)).collect();
    let ss: Vec<_> = order.iter().map(|&i| s.select(i)).collect();
    let yp = m
        .forward(
            &Tensor::stack(&ls.iter().collect::<Vec<_>>()).unwrap(),
            &Tensor::stack(&ss.iter().collect::<Vec<_>>()).unwrap(),
        )
        .unwrap();
    for (k, &i) in order.iter().enumerate() {
        for (a, b) in yp.item(k).iter().zip(y.item(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn fresh_align_blocks_are_plain_convolutions() {
    let m = toy();
    for (t, &c) in TOY_CHANNELS.iter().enumerate() {
        let fl = random([2, c, 8, 8], 10 + t as u64, -1.0, 1.0);
        let fs = random([2, c, 8, 8], 20 + t as u64, -1.0, 1.0);
        let prev = (t + 1 < SCALES).then(|| random([2, DEFORM_OFFSET_CHANNELS, 4, 4], 30, -1.0, 1.0));
        let (out, cache) = m.align[t].forward(&fl, &fs, prev.as_ref()).unwrap();
        let conv = Conv2d {
            weight: m.align[t].dcn.weight.clone(),
            bias: m.align[t].dcn.bias.clone(),
            stride: 1,
        };
        let reference = conv.forward(&fl).unwrap();
        // Zero-initialised offset conv ignores even a non-zero coarser offset.
        assert!(cache.offsets.data().iter().all(|&v| v == 0.0));
        for (a, b) in out.data().iter().zip(reference.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}

#[test]
fn integer_offsets_undo_a_shift() {
    // F_l is F_s moved one pixel right; offsets of +1 in x pull it back.
    let mut init = Initializer::new(3);
    let dcn = DeformConv2d::<f64>::new(&mut init, 3, 5);
    let fs = random([1, 3, 12, 12], 4, -1.0, 1.0);
    let mut fl = Tensor::zeros([1, 3, 12, 12]);
    for c in 0..3 {
        for y in 0..12 {
            for x in 1..12 {
                fl.data_mut()[(c * 12 + y) * 12 + x] = fs.data()[(c * 12 + y) * 12 + x - 1];
            }
        }
    }
    let mut off = Tensor::zeros([1, DEFORM_OFFSET_CHANNELS, 12, 12]);
    for tap in 0..9 {
        off.data_mut()[(2 * tap + 1) * 144..(2 * tap + 2) * 144].fill(1.0);
    }
    let aligned = dcn.forward(&fl, &off).unwrap();
    let conv = Conv2d {
        weight: dcn.weight.clone(),
        bias: dcn.bias.clone(),
        stride: 1,
    };
    let reference = conv.forward(&fs).unwrap();
    for o in 0..5 {
        for y in 1..11 {
            for x in 1..10 {
                let i = (o * 12 + y) * 12 + x;
                assert!((aligned.data()[i] - reference.data()[i]).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn deghost_bounds_and_saturation() {
    let mut m = toy();
    let fl = random([1, 8, 8, 8], 5, -2.0, 2.0);
    let fs = random([1, 8, 8, 8], 6, -2.0, 2.0);
    let (out, cache) = m.deghost[1].forward(&fl, &fs).unwrap();
    assert!(cache.weight_map.data().iter().all(|&w| w > 0.0 && w < 1.0));
    for (o, l) in out.data().iter().zip(fl.data()) {
        assert!(o.abs() <= l.abs());
    }
    m.deghost[1].conv.weight.data_mut().fill(0.0);
    m.deghost[1].conv.bias.data_mut().fill(20.0);
    let (open, _) = m.deghost[1].forward(&fl, &fs).unwrap();
    for (o, l) in open.data().iter().zip(fl.data()) {
        assert!((o - l).abs() < 1e-6 * l.abs().max(1.0));
    }
    m.deghost[1].conv.bias.data_mut().fill(-20.0);
    let (shut, _) = m.deghost[1].forward(&fl, &fs).unwrap();
    assert!(shut.data().iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn loss_zero_on_own_prediction_and_positive_otherwise() {
    let mut m = toy();
    let isp = IspConfig::default();
    let l = random([1, 4, 16, 16], 7, 0.0, 1.0);
    let s = random([1, 4, 16, 16], 8, 0.0, 1.0);
    let pred = m.forward(&l, &s).unwrap();
    assert_eq!(m.loss(&l, &s, &pred, &isp).unwrap(), 0.0);
    let target = random([1, 3, 32, 32], 9, 0.0, 1.0);
    let loss = m.training_loss(&l, &s, &target, &isp).unwrap();
    assert!(loss.is_finite() && loss > 0.0);
    assert_eq!(loss, m.loss(&l, &s, &target, &isp).unwrap());
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let mut m = toy();
    perturb_offsets(&mut m, 1);
    let isp = IspConfig::default();
    let l = random([1, 4, 16, 16], 12, 0.05, 1.0);
    let s = random([1, 4, 16, 16], 13, 0.05, 2.0);
    let target = random([1, 3, 32, 32], 14, 0.0, 1.0);
    m.training_loss(&l, &s, &target, &isp).unwrap();
    let analytic: Vec<Vec<f64>> = m
        .named_parameters()
        .iter()
        .map(|(_, p)| p.grad().unwrap().to_vec())
        .collect();
    let lens = m.parameter_lens();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let h = 1e-6;
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let p = rng.random_range(0..lens.len());
        let i = rng.random_range(0..lens[p]);
        let g = analytic[p][i];
        let orig = m.parameters_mut()[p].data()[i];
        m.parameters_mut()[p].data_mut()[i] = orig + h;
        let up = m.loss(&l, &s, &target, &isp).unwrap();
        m.parameters_mut()[p].data_mut()[i] = orig - h;
        let down = m.loss(&l, &s, &target, &isp).unwrap();
        m.parameters_mut()[p].data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let scale = g.abs().max(numeric.abs());
        if scale < 1e-9 {
            continue;
        }
        worst = worst.max((g - numeric).abs() / scale.max(1e-6));
        checked += 1;
    }
    assert!(worst < 1e-2, "worst relative error {worst}");
}
