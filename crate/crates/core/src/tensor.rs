use std::fmt;

use crate::error::{Error, Result};

/// Dimensions of a dense NCHW tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// A batch of `n` flat feature vectors of length `d`.
    pub const fn flat(n: usize, d: usize) -> Self {
        Shape { n, c: d, h: 1, w: 1 }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per sample (`c * h * w`).
    pub const fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense 4D array in row-major NCHW order with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor { shape, data: vec![value; shape.len()], grad: None }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "tensor {shape} needs {} elements, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor { shape, data, grad: None }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + h) * s.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.shape.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.shape.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Same data viewed under a new shape with identical element count.
    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.data.len() {
            return Err(Error::shape(format!("cannot reshape {} into {shape}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Collapse C, H, W into one feature axis.
    pub fn flatten(self) -> Self {
        let s = self.shape;
        let flat = Shape::flat(s.n, s.sample_len());
        self.reshape(flat).expect("flatten preserves element count")
    }

    /// Stack single-sample tensors along N.
    pub fn stack<'a>(parts: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut data = Vec::new();
        let mut shape: Option<Shape> = None;
        let mut n = 0;
        for t in parts {
            let s = t.shape;
            match shape {
                None => shape = Some(Shape::new(0, s.c, s.h, s.w)),
                Some(first) if (first.c, first.h, first.w) != (s.c, s.h, s.w) => {
                    return Err(Error::shape(format!(
                        "cannot stack {s} with samples of {}x{}x{}",
                        first.c, first.h, first.w
                    )));
                }
                _ => {}
            }
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        let mut shape = shape.ok_or_else(|| Error::invalid("cannot stack an empty list"))?;
        shape.n = n;
        Tensor::from_vec(shape, data)
    }

    /// Copy of sample `n` as a tensor with N = 1.
    pub fn slice_sample(&self, n: usize) -> Self {
        let s = self.shape;
        Tensor { shape: Shape::new(1, s.c, s.h, s.w), data: self.sample(n).to_vec(), grad: None }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor { shape: self.shape, data: self.data.iter().map(|&x| f(x)).collect(), grad: None }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|x| x * k)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; len])
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::shape(format!(
                "gradient of length {} for tensor {}",
                grad.len(),
                self.shape
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 7]).is_err());
        assert!(Tensor::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 8]).is_ok());
    }

    #[test]
    fn index_is_row_major_nchw() {
        let t = Tensor::from_fn(Shape::new(2, 3, 4, 5), |n, c, h, w| (n * 1000 + c * 100 + h * 10 + w) as f64);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[t.index(1, 2, 3, 4)], 1234.0);
        assert_eq!(t.sample(1)[0], 1000.0);
    }

    #[test]
    fn stack_and_slice() {
        let a = Tensor::full(Shape::new(1, 2, 1, 1), 1.0);
        let b = Tensor::full(Shape::new(1, 2, 1, 1), 2.0);
        let s = Tensor::stack([&a, &b]).unwrap();
        assert_eq!(s.shape(), Shape::new(2, 2, 1, 1));
        assert_eq!(s.slice_sample(1), b);
        let bad = Tensor::zeros(Shape::new(1, 3, 1, 1));
        assert!(Tensor::stack([&a, &bad]).is_err());
    }

    #[test]
    fn grad_buffer_matches_data_length() {
        let mut t = Tensor::zeros(Shape::new(1, 1, 2, 2));
        assert!(t.grad().is_none());
        assert_eq!(t.grad_mut().len(), 4);
        assert!(t.set_grad(vec![0.0; 3]).is_err());
    }
}
