use crate::error::{Error, Result};

use super::Scalar;

/// Dense NCHW tensor. Lower-rank data uses leading/trailing unit dims.
///
/// Parameters carry a gradient buffer of identical length; activations
/// normally do not.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: [usize; 4],
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
            grad: None,
        }
    }

    pub fn full(shape: [usize; 4], v: T) -> Self {
        Self {
            shape,
            data: vec![v; shape.iter().product()],
            grad: None,
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn from_f64(shape: [usize; 4], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::cast(v)).collect())
    }

    /// Trainable tensor: data plus a zeroed gradient buffer.
    pub fn param(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let mut t = Self::from_vec(shape, data)?;
        t.grad = Some(vec![T::zero(); t.data.len()]);
        Ok(t)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    /// Split borrow of values and gradient buffer (created if absent).
    pub fn data_and_grad_mut(&mut self) -> (&mut [T], &mut [T]) {
        let n = self.data.len();
        let grad = self.grad.get_or_insert_with(|| vec![T::zero(); n]);
        (&mut self.data, grad)
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn accumulate_grad(&mut self, delta: &[T]) {
        let g = self.grad_mut();
        assert_eq!(g.len(), delta.len(), "gradient length mismatch");
        for (a, b) in g.iter_mut().zip(delta) {
            *a += *b;
        }
    }

    pub fn reshape(mut self, shape: [usize; 4]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_shape(other.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            grad: None,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape(other.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn expect_shape(&self, shape: [usize; 4]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Shape(format!("expected {shape:?}, got {:?}", self.shape)));
        }
        Ok(())
    }

    /// Contiguous data of batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let size = self.shape[1] * self.plane();
        &self.data[n * size..(n + 1) * size]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let size = self.shape[1] * self.plane();
        &mut self.data[n * size..(n + 1) * size]
    }

    /// Batch item `n` as its own single-item tensor.
    pub fn select(&self, n: usize) -> Self {
        Self {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.item(n).to_vec(),
            grad: None,
        }
    }

    /// Stack single-item (or multi-item) tensors along the batch axis.
    pub fn stack(items: &[&Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            if t.shape[1..] != [c, h, w] {
                return Err(Error::Shape(format!("stack: {:?} vs {:?}", t.shape, first.shape)));
            }
            n += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        Self::from_vec([n, c, h, w], data)
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot concatenate zero tensors".into()))?;
        let [n, _, h, w] = first.shape;
        for p in parts {
            if p.shape[0] != n || p.shape[2] != h || p.shape[3] != w {
                return Err(Error::Shape(format!("concat: {:?} vs {:?}", p.shape, first.shape)));
            }
        }
        let c_total: usize = parts.iter().map(|p| p.shape[1]).sum();
        let mut data = Vec::with_capacity(n * c_total * h * w);
        for b in 0..n {
            for p in parts {
                data.extend_from_slice(p.item(b));
            }
        }
        Self::from_vec([n, c_total, h, w], data)
    }

    /// Inverse of [`Tensor::concat_channels`]: split into the given channel counts.
    pub fn split_channels(&self, counts: &[usize]) -> Result<Vec<Self>> {
        if counts.iter().sum::<usize>() != self.shape[1] {
            return Err(Error::Shape(format!(
                "split {counts:?} does not cover {} channels",
                self.shape[1]
            )));
        }
        let [n, _, h, w] = self.shape;
        let plane = h * w;
        let mut outs: Vec<Vec<T>> = counts.iter().map(|&c| Vec::with_capacity(n * c * plane)).collect();
        for b in 0..n {
            let item = self.item(b);
            let mut offset = 0;
            for (out, &c) in outs.iter_mut().zip(counts) {
                out.extend_from_slice(&item[offset * plane..(offset + c) * plane]);
                offset += c;
            }
        }
        outs.into_iter()
            .zip(counts)
            .map(|(d, &c)| Self::from_vec([n, c, h, w], d))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Inner product of two equally shaped tensors.
    pub fn dot(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::cast(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::cast(v.as_f64())).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::<f64>::from_vec([2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f64>::from_vec([2, 2, 1, 2], (0..8).map(|v| v as f64 * 10.0).collect()).unwrap();
        let cat = Tensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), [2, 3, 1, 2]);
        assert_eq!(&cat.item(0)[..2], &[1.0, 2.0]);
        assert_eq!(&cat.item(1)[..2], &[3.0, 4.0]);
        let parts = cat.split_channels(&[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn param_has_matching_grad() {
        let mut p = Tensor::<f32>::param([1, 2, 3, 1], vec![0.0; 6]).unwrap();
        assert_eq!(p.grad().unwrap().len(), p.len());
        p.accumulate_grad(&[1.0; 6]);
        p.zero_grad();
        assert!(p.grad().unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shape_errors() {
        assert!(Tensor::<f64>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        let a = Tensor::<f64>::zeros([1, 1, 2, 2]);
        let b = Tensor::<f64>::zeros([1, 1, 2, 3]);
        assert!(a.add(&b).is_err());
        assert!(Tensor::concat_channels(&[&a, &b]).is_err());
    }
}
