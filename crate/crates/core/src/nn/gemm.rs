//! Safe row-major wrappers over the strided GEMM kernel.

use super::Scalar;

fn run<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: (&[T], isize, isize),
    b: (&[T], isize, isize),
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.0.len() >= m * k, "lhs too small");
    assert!(b.0.len() >= k * n, "rhs too small");
    assert!(c.len() >= m * n, "output too small");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    // SAFETY: the asserts above bound every index m*k, k*n, m*n reachable
    // through the dense strides used by the callers below.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `c (m x n) [+]= a (m x k) * b (k x n)`.
pub(crate) fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    run(m, k, n, (a, k as isize, 1), (b, n as isize, 1), c, accumulate);
}

/// `c (m x n) [+]= a^T * b` where `a` is stored as (k x m).
pub(crate) fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    run(m, k, n, (a, 1, m as isize), (b, n as isize, 1), c, accumulate);
}

/// `c (m x n) [+]= a * b^T` where `b` is stored as (n x k).
pub(crate) fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    run(m, k, n, (a, k as isize, 1), (b, 1, k as isize), c, accumulate);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = a[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn variants_match_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let expected = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        gemm_nn(m, k, n, &a, &b, &mut c, false);
        assert!(c.iter().zip(&expected).all(|(x, y)| (x - y).abs() < 1e-12));

        let at = transpose(m, k, &a);
        let mut c = vec![1.0; m * n];
        gemm_tn(m, k, n, &at, &b, &mut c, true);
        assert!(c.iter().zip(&expected).all(|(x, y)| (x - 1.0 - y).abs() < 1e-12));

        let bt = transpose(k, n, &b);
        let mut c = vec![0.0; m * n];
        gemm_nt(m, k, n, &a, &bt, &mut c, false);
        assert!(c.iter().zip(&expected).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}
