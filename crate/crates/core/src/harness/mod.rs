//! Data generation, training, evaluation and diagnostics built on the core.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod train;

pub use bench::{run_bench, BenchReport};
pub use config::{InputKind, RunConfig, SceneSource};
pub use dataset::{gen_data, synthesize, synthesize_all, Dataset, SampleMeta, SamplePair, SceneRef};
pub use eval::{evaluate, infer, infer_to_file, EvalReport};
pub use gradcheck::{run_gradcheck, GradcheckOptions, GradcheckReport};
pub use metrics::{psnr, ssim, PSNR_CAP};
pub use train::{overfit, train, OverfitReport, TrainReport};
