//! Dense n-dimensional arrays of f64 in row-major order.

use crate::{Error, Result};

/// The universal value type: a shape, row-major data, and an optional
/// gradient slot of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor, checking that `product(shape) == data.len()`.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} expects {} elements, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero dimension in shape {shape:?}")));
        }
        Ok(Self { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: vec![0.0; n], grad: None }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: vec![value; n], grad: None }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Leading dimension, by convention the batch size.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per leading-dimension row.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Stores a gradient; must have the same element count as `data`.
    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "grad length {} does not match tensor of {} elements",
                grad.len(),
                self.data.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Copies row range `[start, start + len)` along the leading dimension.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        let rows = self.batch();
        if start + len > rows {
            return Err(Error::Shape(format!(
                "row slice {}..{} out of bounds for {} rows",
                start,
                start + len,
                rows
            )));
        }
        let rl = self.row_len();
        let mut shape = self.shape.clone();
        shape[0] = len;
        Tensor::from_vec(shape, self.data[start * rl..(start + len) * rl].to_vec())
    }

    /// Stacks two tensors along the leading dimension; trailing dims must agree.
    pub fn concat_rows(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape[1..] != other.shape[1..] {
            return Err(Error::Shape(format!(
                "cannot concat rows of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let mut shape = self.shape.clone();
        shape[0] += other.batch();
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor::from_vec(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_element_count() {
        assert!(Tensor::from_vec(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn grad_must_match_shape() {
        let mut t = Tensor::zeros(vec![2, 2]);
        assert!(t.set_grad(vec![1.0; 4]).is_ok());
        assert!(t.set_grad(vec![1.0; 3]).is_err());
    }

    #[test]
    fn slice_and_concat_roundtrip() {
        let t = Tensor::from_vec(vec![4, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let a = t.slice_rows(0, 2).unwrap();
        let b = t.slice_rows(2, 2).unwrap();
        assert_eq!(a.concat_rows(&b).unwrap(), t);
    }
}
