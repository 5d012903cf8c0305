use crate::error::{Error, Result};

use super::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Base learning rate, halved once from `halve_at_epoch` onward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub halve_at_epoch: Option<usize>,
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            halve_at_epoch: None,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.halve_at_epoch {
            Some(b) if epoch >= b => self.base * 0.5,
            _ => self.base,
        }
    }
}

/// Moment buffers, one pair per parameter tensor, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    pub step: u64,
    pub epoch: usize,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, param_lens: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            epoch: 0,
            m: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }
}

/// One bias-corrected ADAM update using each parameter's gradient buffer.
/// Parameters without a gradient buffer are left untouched.
pub fn adam_step<T: Scalar>(params: &mut [&mut Tensor<T>], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "optimizer tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.len() != state.m[i].len() {
            return Err(Error::Shape(format!(
                "parameter {i} has {} values, moments have {}",
                p.len(),
                state.m[i].len()
            )));
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::cast(beta1), T::cast(beta2));
    let (one_b1, one_b2) = (T::cast(1.0 - beta1), T::cast(1.0 - beta2));
    let step_size = T::cast(lr / bc1);
    let inv_sqrt_bc2 = T::cast(1.0 / bc2.sqrt());
    let eps = T::cast(eps);
    for (i, p) in params.iter_mut().enumerate() {
        if p.grad().is_none() {
            continue;
        }
        let (data, grad) = p.data_and_grad_mut();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..data.len() {
            let g = grad[j];
            m[j] = b1 * m[j] + one_b1 * g;
            v[j] = b2 * v[j] + one_b2 * g * g;
            data[j] -= step_size * m[j] / (v[j].sqrt() * inv_sqrt_bc2 + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = Tensor::<f64>::param([1, 1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), &[3]);
        adam_step(&mut [&mut p], &mut st, 1e-3).unwrap();
        assert_eq!(p.data(), &[0.5, -1.0, 2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_steps_match_closed_form() {
        let (g, lr) = (0.3, 1e-2);
        let cfg = AdamConfig::default();
        let mut p = Tensor::<f64>::param([1, 1, 1, 1], vec![1.0]).unwrap();
        let mut st = AdamState::new(cfg, &[1]);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=3 {
            p.zero_grad();
            p.accumulate_grad(&[g]);
            adam_step(&mut [&mut p], &mut st, lr).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-8);
            assert!((p.data()[0] - x).abs() < 1e-12);
            if t == 1 {
                // Sign-like first step of magnitude lr.
                assert!((1.0 - x - lr).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn schedule_halves_at_boundary() {
        let s = LrSchedule {
            base: 1e-4,
            halve_at_epoch: Some(10),
        };
        assert_eq!(s.lr_at(9), 1e-4);
        assert_eq!(s.lr_at(10), 5e-5);
        assert_eq!(s.lr_at(50), 5e-5);
        assert_eq!(LrSchedule::constant(1e-3).lr_at(1000), 1e-3);
    }

    #[test]
    fn mismatched_state_is_error() {
        let mut p = Tensor::<f64>::param([1, 1, 1, 2], vec![0.0; 2]).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), &[3]);
        assert!(adam_step(&mut [&mut p], &mut st, 1e-3).is_err());
    }
}
