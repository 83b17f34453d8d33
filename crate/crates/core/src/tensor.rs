//! Dense n-dimensional arrays.
//!
//! Storage is lexicographic with the first index varying slowest, so the flat
//! data of a tensor is its vectorization: the concatenation of the vectorized
//! slices along the first axis, recursively.

use std::fmt;

use crate::error::{shape_err, Error, Result};
use crate::scalar::{Real, Scalar};

/// Extents of a tensor, one per dimension, each at least 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(extents: impl Into<Vec<usize>>) -> Result<Self> {
        let extents = extents.into();
        if extents.is_empty() {
            return shape_err("a shape needs at least one dimension");
        }
        if let Some(axis) = extents.iter().position(|&d| d == 0) {
            return shape_err(format!("extent of axis {axis} is zero in {extents:?}"));
        }
        extents
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Shape(format!("element count of {extents:?} overflows")))?;
        Ok(Shape(extents))
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.0
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.0[axis]
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major strides (last axis contiguous).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for axis in (0..self.0.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.0[axis + 1];
        }
        strides
    }

    /// Flat position of `index`, with the first coordinate most significant.
    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.ndim() || index.iter().zip(&self.0).any(|(&i, &d)| i >= d) {
            return Err(Error::OutOfBounds {
                index: index.to_vec(),
                extents: self.0.clone(),
            });
        }
        Ok(index.iter().zip(&self.0).fold(0, |acc, (&i, &d)| acc * d + i))
    }

    /// Inverse of [`Shape::flat_index`]; `flat` must be below `len()`.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.ndim()];
        for axis in (0..self.ndim()).rev() {
            index[axis] = flat % self.0[axis];
            flat /= self.0[axis];
        }
        index
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Dense n-dimensional array stored first-index-slowest.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from vectorized data, rejecting length mismatches and
    /// non-finite values.
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return shape_err(format!(
                "{} values supplied for shape {shape} ({} elements)",
                data.len(),
                shape.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Tensor { shape, data })
    }

    /// Inverse of [`Tensor::vectorize`].
    pub fn devectorize(data: Vec<T>, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        let data = vec![value; shape.len()];
        Tensor { shape, data }
    }

    /// Evaluates `f` at every multi-index in storage order.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let data = (0..shape.len()).map(|flat| f(&shape.unflatten(flat))).collect();
        Tensor { shape, data }
    }

    pub(crate) fn from_parts_unchecked(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.ndim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.shape.flat_index(index)?])
    }

    /// The flat data in storage order, which is the vectorization.
    pub fn vectorize(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise conversion to another scalar type.
    pub fn convert<U: Scalar>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    /// Elementwise `max(v, 0)`.
    pub fn clamp_below_zero(&self) -> Self {
        self.map(|v| if v < T::zero() { T::zero() } else { v })
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// Euclidean inner product of the vectorizations.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    /// Sub-block of extent `shape` starting at `offset` on every axis.
    pub fn crop(&self, offset: &[usize], shape: &Shape) -> Result<Self> {
        if offset.len() != self.ndim() || shape.ndim() != self.ndim() {
            return shape_err(format!(
                "crop of {}-d tensor with {}-d offset and {}-d target",
                self.ndim(),
                offset.len(),
                shape.ndim()
            ));
        }
        for axis in 0..self.ndim() {
            if offset[axis] + shape.extent(axis) > self.shape.extent(axis) {
                return shape_err(format!(
                    "crop window {offset:?}+{shape} exceeds extents {}",
                    self.shape
                ));
            }
        }
        let strides = self.shape.strides();
        let base: usize = offset.iter().zip(&strides).map(|(o, s)| o * s).sum();
        let row = shape.extent(shape.ndim() - 1);
        let mut data = Vec::with_capacity(shape.len());
        let outer = Shape(shape.extents()[..shape.ndim() - 1].to_vec());
        let rows = if outer.0.is_empty() { 1 } else { outer.len() };
        for r in 0..rows {
            let idx = if outer.0.is_empty() { Vec::new() } else { outer.unflatten(r) };
            let start = base + idx.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>();
            data.extend_from_slice(&self.data[start..start + row]);
        }
        Ok(Tensor { shape: shape.clone(), data })
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return shape_err(format!("shapes {} and {} differ", self.shape, other.shape));
        }
        Ok(())
    }
}

impl<T: Real> Tensor<T> {
    /// Elementwise `a / b`, yielding zero where `|b|` is below
    /// [`Real::div_epsilon`].
    pub fn guarded_div(&self, other: &Self) -> Result<Self> {
        let eps = T::div_epsilon();
        self.zip_with(other, |a, b| if b.abs() < eps { T::zero() } else { a / b })
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }
}
