//! Dense-array numeric substrate.
//!
//! [`DenseArray`] is a row-major multi-dimensional array over `f32` (the
//! inference default) or `f64` (used where gradient checks need the
//! headroom). All operations are pure: they take references and return
//! fresh arrays, so values are safe to share across threads.

mod ops;

pub use ops::{
    batch_norm_inference, bilinear_resize, concat_channels, conv2d, conv2d_param_grads,
    flip_seq, global_avg_pool, global_max_pool, im2seq, seq2im, split_channels,
    BatchNormParams, Conv2DParams,
};

use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point element type for [`DenseArray`].
pub trait Scalar: Float + fmt::Debug + fmt::Display + Send + Sync + 'static {
    /// Lossy conversion from `f64`, used for constants and literals.
    fn from_f64(v: f64) -> Self;
    /// Widening conversion to `f64`.
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Row-major dense array. The universal value carrier for images,
/// feature maps, sequences, and parameter tensors.
#[derive(Clone, PartialEq)]
pub struct DenseArray<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for DenseArray<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseArray{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} values]", self.data.len())
        }
    }
}

impl<T: Scalar> DenseArray<T> {
    /// Builds an array from a shape and a row-major data buffer.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidParam {
                op: "DenseArray::new",
                what: format!("every extent must be >= 1, got {shape:?}"),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ElementCount {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Array of zeros.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    /// Array filled with a constant.
    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// Builds a `[C,H,W]` array by evaluating `f(c, h, w)`.
    pub fn from_fn_3d(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    data.push(f(ci, hi, wi));
                }
            }
        }
        Self {
            shape: vec![c, h, w],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.contains(&0) {
            return Err(Error::ElementCount {
                shape,
                expected,
                got: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Element at `(c, h, w)` of a rank-3 array.
    #[inline]
    pub fn at3(&self, c: usize, h: usize, w: usize) -> T {
        debug_assert_eq!(self.rank(), 3);
        self.data[(c * self.shape[1] + h) * self.shape[2] + w]
    }

    /// Element at `(i, j)` of a rank-2 array.
    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> T {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, h: usize, w: usize, v: T) {
        debug_assert_eq!(self.rank(), 3);
        let idx = (c * self.shape[1] + h) * self.shape[2] + w;
        self.data[idx] = v;
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: T) {
        debug_assert_eq!(self.rank(), 2);
        let idx = i * self.shape[1] + j;
        self.data[idx] = v;
    }

    /// Applies `f` to every element.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two equally-shaped arrays.
    pub fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::RankMismatch {
                op,
                expected: self.rank(),
                got: other.shape.clone(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    /// Multiplies every element by a scalar.
    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// Adds a scalar to every element.
    pub fn add_scalar(&self, s: T) -> Self {
        self.map(|v| v + s)
    }

    pub fn relu(&self) -> Self {
        self.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    pub fn softplus(&self) -> Self {
        self.map(softplus)
    }

    pub fn exp(&self) -> Self {
        self.map(|v| v.exp())
    }

    /// True when every element is finite (no NaN/Inf).
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference between two arrays.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    let cutoff = T::from_f64(30.0);
    if x > cutoff {
        x
    } else if x < -cutoff {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_mismatched_buffer() {
        let err = DenseArray::<f32>::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::ElementCount { expected: 6, got: 5, .. }));
    }

    #[test]
    fn new_rejects_zero_extent() {
        assert!(DenseArray::<f32>::new(vec![2, 0], vec![]).is_err());
        assert!(DenseArray::<f32>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let a = DenseArray::new(vec![2, 2, 3], (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(a.at3(0, 0, 0), 0.0);
        assert_eq!(a.at3(0, 1, 2), 5.0);
        assert_eq!(a.at3(1, 0, 1), 7.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!((sigmoid(0.0f32) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn softplus_matches_definition() {
        let x = 0.0f64;
        assert!((softplus(x) - 2.0f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0f64), 100.0);
        assert!(softplus(-100.0f64) > 0.0);
    }

    #[test]
    fn elementwise_ops_reject_shape_mismatch() {
        let a = DenseArray::<f32>::zeros(vec![2, 3]);
        let b = DenseArray::<f32>::zeros(vec![3, 2]);
        assert!(a.add(&b).is_err());
    }
}
