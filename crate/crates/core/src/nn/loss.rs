use crate::error::{Error, Result};

use super::Scalar;

/// Mean absolute error.
pub fn l1_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "l1 loss over {} vs {} values",
            pred.len(),
            target.len()
        )));
    }
    let sum: T = pred.iter().zip(target).map(|(&p, &t)| (p - t).abs()).sum();
    Ok(sum / T::cast(pred.len() as f64))
}

/// Subgradient `sign(pred - target) / N` (zero where they agree).
pub fn l1_loss_backward<T: Scalar>(pred: &[T], target: &[T]) -> Result<Vec<T>> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "l1 loss over {} vs {} values",
            pred.len(),
            target.len()
        )));
    }
    let inv = T::one() / T::cast(pred.len() as f64);
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let t = [0.1, 0.5, 0.9];
        assert_eq!(l1_loss(&t, &t).unwrap(), 0.0);
        let p: Vec<f64> = t.iter().map(|v| v + 0.5).collect();
        assert!((l1_loss(&p, &t).unwrap() - 0.5).abs() < 1e-15);
        assert!(l1_loss(&p[..2], &t).is_err());
    }

    #[test]
    fn matches_loop_oracle() {
        let p = [0.3f64, -1.2, 4.0, 0.0, 2.5];
        let t = [0.1f64, 0.2, 3.0, 0.0, 2.6];
        let mut acc = 0.0;
        for i in 0..5 {
            acc += (p[i] - t[i]).abs();
        }
        assert!((l1_loss(&p, &t).unwrap() - acc / 5.0).abs() < 1e-15);
        let g = l1_loss_backward(&p, &t).unwrap();
        assert_eq!(g, vec![0.2, -0.2, 0.2, 0.0, -0.2]);
    }
}
