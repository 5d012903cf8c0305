//! Synthetic gyroscope traces and the rotation-homography flow they induce.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Pinhole intrinsics of the synthetic camera, with the image size they apply to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub height: usize,
    pub width: usize,
}

impl Intrinsics {
    /// Focal length 0.85 x width, principal point at the image centre.
    pub fn default_for(height: usize, width: usize) -> Self {
        Self {
            focal: 0.85 * width as f64,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            height,
            width,
        }
    }

    fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.focal, 0.0, self.cx, 0.0, self.focal, self.cy, 0.0, 0.0, 1.0)
    }

    fn k_inv(&self) -> Matrix3<f64> {
        let f = self.focal;
        Matrix3::new(1.0 / f, 0.0, -self.cx / f, 0.0, 1.0 / f, -self.cy / f, 0.0, 0.0, 1.0)
    }
}

/// Per-frame camera angular velocity (rad/frame about x, y, z).
///
/// Sample 0 belongs to the reference frame and is always zero; the pose of
/// frame `t` is `exp(w_t) * pose(t - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frame_count: usize,
    pub angular_velocity: Vec<[f64; 3]>,
    pub skip_k: usize,
}

impl Trajectory {
    pub fn new(angular_velocity: Vec<[f64; 3]>, skip_k: usize) -> Result<Self> {
        let frame_count = angular_velocity.len();
        if frame_count == 0 {
            return Err(Error::InvalidParameter("trajectory needs at least one frame".into()));
        }
        if skip_k >= frame_count {
            return Err(Error::InvalidParameter(format!(
                "skip_k {skip_k} must be below frame count {frame_count}"
            )));
        }
        Ok(Self {
            frame_count,
            angular_velocity,
            skip_k,
        })
    }

    pub fn is_static(&self) -> bool {
        self.angular_velocity.iter().flatten().all(|&v| v == 0.0)
    }

    /// Cumulative rotation of every frame relative to frame 0.
    pub fn poses(&self) -> Vec<Rotation3<f64>> {
        let mut poses = Vec::with_capacity(self.frame_count);
        let mut pose = Rotation3::identity();
        for (t, w) in self.angular_velocity.iter().enumerate() {
            if t > 0 {
                pose = Rotation3::from_scaled_axis(Vector3::new(w[0], w[1], w[2])) * pose;
            }
            poses.push(pose);
        }
        poses
    }
}

/// Per-frame displacement maps, `(dx, dy)` per pixel, cumulative from frame 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack {
    pub height: usize,
    pub width: usize,
    /// One `height * width * 2` buffer per frame.
    pub frames: Vec<Vec<f64>>,
}

impl FlowStack {
    pub fn zeros(frame_count: usize, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            frames: vec![vec![0.0; height * width * 2]; frame_count],
        }
    }

    /// Frame `t` displaced by `t * step` everywhere.
    pub fn uniform_translation(frame_count: usize, height: usize, width: usize, step: (f64, f64)) -> Self {
        let frames = (0..frame_count)
            .map(|t| {
                let (dx, dy) = (t as f64 * step.0, t as f64 * step.1);
                (0..height * width).flat_map(|_| [dx, dy]).collect()
            })
            .collect();
        Self { height, width, frames }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> (f64, f64) {
        let i = (y * self.width + x) * 2;
        (self.frames[t][i], self.frames[t][i + 1])
    }

    /// Largest Euclidean displacement between consecutive frames, over all pixels.
    pub fn max_frame_delta(&self) -> f64 {
        self.max_delta_by(|dx, dy| (dx * dx + dy * dy).sqrt())
    }

    /// Largest max-norm displacement between consecutive frames.
    pub fn max_frame_delta_inf(&self) -> f64 {
        self.max_delta_by(|dx, dy| dx.abs().max(dy.abs()))
    }

    fn max_delta_by(&self, norm: impl Fn(f64, f64) -> f64) -> f64 {
        self.frames
            .windows(2)
            .flat_map(|pair| {
                pair[1]
                    .chunks_exact(2)
                    .zip(pair[0].chunks_exact(2))
                    .map(|(b, a)| norm(b[0] - a[0], b[1] - a[1]))
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

/// Displacement of every pixel under the homography `K R K^-1`.
pub fn trajectory_to_flows(traj: &Trajectory, intr: &Intrinsics) -> FlowStack {
    let (h, w) = (intr.height, intr.width);
    let (k, k_inv) = (intr.k(), intr.k_inv());
    let frames = traj
        .poses()
        .into_iter()
        .map(|pose| {
            let hom = k * pose.matrix() * k_inv;
            let mut flow = Vec::with_capacity(h * w * 2);
            for y in 0..h {
                for x in 0..w {
                    let p = hom * Vector3::new(x as f64, y as f64, 1.0);
                    flow.push(p.x / p.z - x as f64);
                    flow.push(p.y / p.z - y as f64);
                }
            }
            flow
        })
        .collect();
    FlowStack {
        height: h,
        width: w,
        frames,
    }
}

/// Smoothed Gaussian random-walk gyro trace, rescaled so the worst per-frame
/// displacement over every pixel equals `max_step_px`. `skip_k` is drawn
/// uniformly from `[0, frame_count / 4]`.
pub fn gen_trajectory(seed: u64, frame_count: usize, intr: &Intrinsics, max_step_px: f64) -> Result<Trajectory> {
    if frame_count == 0 {
        return Err(Error::InvalidParameter("frame_count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&max_step_px) {
        return Err(Error::InvalidParameter(format!(
            "max_step_px must lie in [0, 1], got {max_step_px}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    // Roll is weaker than pitch/yaw for handheld shake.
    let axis_weight = [1.0, 1.0, 0.3];
    let mut w = vec![[0.0; 3]; frame_count];
    let mut state = [0.0f64; 3];
    for sample in w.iter_mut().skip(1) {
        for a in 0..3 {
            let n: f64 = rng.sample(StandardNormal);
            state[a] = 0.8 * state[a] + axis_weight[a] * n;
            sample[a] = state[a];
        }
    }
    let skip_k = rng.random_range(0..=frame_count / 4).min(frame_count - 1);
    let mut traj = Trajectory::new(w, skip_k)?;
    if frame_count == 1 || max_step_px == 0.0 {
        traj.angular_velocity.iter_mut().for_each(|s| *s = [0.0; 3]);
        return Ok(traj);
    }

    let rescale = |traj: &mut Trajectory, factor: f64| {
        for s in traj.angular_velocity.iter_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    };
    // Bring the raw walk into the small-angle regime before matching the
    // pixel bound, where displacement is close to linear in the rates.
    let peak = traj
        .angular_velocity
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        rescale(&mut traj, max_step_px / (intr.focal * peak));
    }
    for _ in 0..100 {
        let worst = trajectory_to_flows(&traj, intr).max_frame_delta();
        if worst == 0.0 || (worst <= max_step_px && worst >= 0.999 * max_step_px) {
            break;
        }
        rescale(&mut traj, 0.9995 * max_step_px / worst);
    }
    Ok(traj)
}
