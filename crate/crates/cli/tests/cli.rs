use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lsfnet_core::harness::Dataset;
use lsfnet_core::io::read_rgb16;

const SMALL: [&str; 6] = [
    "--set",
    "patch_size=32",
    "--set",
    "frame_count=4",
    "--set",
    "light_radius=2",
];

fn lsfnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsfnet"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = lsfnet(args, cwd);
    assert!(
        out.status.success(),
        "lsfnet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with(base: &[&str], extra: &[&'static str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_data_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        let args = with(&["gen-data", "--out", d, "--count", "4", "--seed", "7"], &SMALL);
        ok(&strs(&args), tmp.path());
    }
    let a = dir_bytes(&tmp.path().join("a"));
    assert_eq!(a.len(), 4 * 4 + 1);
    assert_eq!(a, dir_bytes(&tmp.path().join("b")));
    assert_eq!(Dataset::open(&tmp.path().join("a")).unwrap().len(), 4);

    let args = with(&["gen-data", "--out", "c", "--count", "4", "--seed", "8"], &SMALL);
    ok(&strs(&args), tmp.path());
    assert_ne!(a, dir_bytes(&tmp.path().join("c")));
}

#[test]
fn train_resume_infer_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    ok(&strs(&with(&["gen-data", "--out", "data", "--count", "3"], &SMALL)), t);
    let cfg = "patch_size = 32\nchannels = toy\nbatch_size = 2\nepochs = 3\nlr = 1e-3\nlr_halve_epoch = 2\n";
    fs::write(t.join("run.cfg"), cfg).unwrap();
    ok(&["train", "--config", "run.cfg", "--data", "data", "--out", "run"], t);
    let log = fs::read_to_string(t.join("run/loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3);
    assert!(log.lines().last().unwrap().ends_with(",0.0005"));

    // Stop after one epoch, then resume to three: same weights as one run.
    ok(
        &[
            "train", "--config", "run.cfg", "--data", "data", "--out", "split", "--set", "epochs=1",
        ],
        t,
    );
    ok(
        &[
            "train", "--config", "run.cfg", "--data", "data", "--out", "split", "--resume",
        ],
        t,
    );
    assert_eq!(
        fs::read(t.join("run/model.lsfc")).unwrap(),
        fs::read(t.join("split/model.lsfc")).unwrap()
    );
    assert_eq!(fs::read_to_string(t.join("split/loss.csv")).unwrap(), log);

    for name in ["x.ppm", "y.ppm"] {
        ok(
            &[
                "infer",
                "--checkpoint",
                "run/model.lsfc",
                "--data",
                "data",
                "--index",
                "2",
                "--out",
                name,
            ],
            t,
        );
    }
    assert_eq!(fs::read(t.join("x.ppm")).unwrap(), fs::read(t.join("y.ppm")).unwrap());
    let img = read_rgb16(&t.join("x.ppm")).unwrap();
    assert_eq!((img.height(), img.width()), (32, 32));

    ok(
        &[
            "infer",
            "--checkpoint",
            "run/model.lsfc",
            "--long",
            "data/00000_long.lsft",
            "--short",
            "data/00000_short.lsft",
            "--out",
            "z.ppm",
        ],
        t,
    );
    assert_eq!(read_rgb16(&t.join("z.ppm")).unwrap().height(), 32);

    let stdout = ok(
        &[
            "eval",
            "--checkpoint",
            "run/model.lsfc",
            "--data",
            "data",
            "--out",
            "eval.csv",
        ],
        t,
    );
    assert!(stdout.contains("mean PSNR"));
    let csv = fs::read_to_string(t.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 1);

    // A mu-law checkpoint does not accept gamma data.
    ok(
        &strs(&with(
            &["gen-data", "--out", "mu", "--count", "1", "--mode", "mulaw"],
            &SMALL,
        )),
        t,
    );
    let out = lsfnet(&["eval", "--checkpoint", "run/model.lsfc", "--data", "mu"], t);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_exit_codes_and_layers() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&["gradcheck"], tmp.path());
    for layer in lsfnet_core::harness::gradcheck::LAYERS {
        let rows = stdout
            .lines()
            .filter(|l| l.split_whitespace().next() == Some(layer))
            .count();
        assert_eq!(rows, 1, "{layer} in\n{stdout}");
    }
    let bad = lsfnet(&["gradcheck", "--mutate", "conv2d"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["gen-data", "--set", "patch_size=40"],
        vec!["gen-data", "--mode", "sepia"],
        vec!["infer", "--checkpoint", "missing.lsfc", "--out", "o.ppm"],
        vec!["train", "--data", "nowhere"],
    ] {
        assert_eq!(lsfnet(&args, tmp.path()).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(lsfnet(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn bench_prints_timings() {
    let tmp = tempfile::tempdir().unwrap();
    let args = with(&["bench", "--iterations", "1", "--set", "channels=toy"], &SMALL);
    let stdout = ok(&strs(&args), tmp.path());
    assert_eq!(stdout.lines().count(), 4);
}

#[test]
fn mulaw_model_keeps_detail_where_long_input_clips() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    // Bright scenes: much of the texture saturates in the scaled long exposure.
    let cfg = "mode = mulaw\npatch_size = 32\nframe_count = 2\nlight_radius = 2\nchannels = toy\n\
               scene_count = 4\nbatch_size = 4\nepochs = 150\nlr = 1e-2\nlr_halve_epoch = none\n";
    fs::write(t.join("mu.cfg"), cfg).unwrap();
    ok(&["gen-data", "--config", "mu.cfg", "--out", "data"], t);
    ok(&["train", "--config", "mu.cfg", "--data", "data", "--out", "run"], t);
    ok(
        &[
            "infer",
            "--checkpoint",
            "run/model.lsfc",
            "--data",
            "data",
            "--index",
            "0",
            "--out",
            "o.ppm",
        ],
        t,
    );

    let ds = Dataset::open(&t.join("data")).unwrap();
    let pair = ds.load(0).unwrap();
    let out = read_rgb16(&t.join("o.ppm")).unwrap().to_planar();
    let gt = pair.gt.to_f64();
    let s = pair.meta.scale_s;
    // Green sites of the packed long input, back on the long exposure's scale.
    let long = pair.long.to_f64();
    let (h, w) = (16, 16);
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let g = long[h * w + y * w + x] * s;
            if g >= 0.999 {
                let (py, px) = (2 * y, 2 * x + 1);
                let i = 32 * 32 + py * 32 + px;
                if gt[i] < 0.999 {
                    pred.push(out[i]);
                    truth.push(gt[i]);
                }
            }
        }
    }
    assert!(pred.len() >= 10, "only {} clipped pixels", pred.len());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mp, mt) = (mean(&pred), mean(&truth));
    let cov: f64 = pred.iter().zip(&truth).map(|(p, q)| (p - mp) * (q - mt)).sum();
    let vp: f64 = pred.iter().map(|p| (p - mp).powi(2)).sum();
    let vt: f64 = truth.iter().map(|q| (q - mt).powi(2)).sum();
    let std = (vp / pred.len() as f64).sqrt();
    assert!(std > 0.01, "output flat where the long input clips: std {std}");
    assert!(cov / (vp * vt).sqrt() > 0.5, "output does not follow the scene detail");
}
