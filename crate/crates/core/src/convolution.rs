//! Full n-dimensional discrete convolution and its adjoint.
//!
//! For an input of extents `d_i` and a kernel of extents `2p_i + 1`,
//! [`conv_full`] returns every shift with any overlap, extents `d_i + 2p_i`.
//! Values outside either support are zero, so the operator is the banded
//! block-Toeplitz matrix built by [`crate::explicit`].
//!
//! The transpose of that matrix is not formed. It is applied as a full
//! convolution with the flipped kernel followed by [`crop_m`], which keeps the
//! block starting at `2p_i` on every axis. [`normal_gradient`] composes the two
//! to get the least-squares gradient from convolutions alone.

use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Output slabs smaller than this run on the calling thread.
const PAR_MIN_ELEMENTS: usize = 1 << 14;

/// Convolution kernel with odd extents `2p_i + 1` on every axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<T> {
    tensor: Tensor<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(tensor: Tensor<T>) -> Result<Self> {
        if let Some(axis) = tensor.shape().extents().iter().position(|d| d % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "kernel extent {} on axis {axis} is even; kernels are 2p+1 wide",
                tensor.shape().extent(axis)
            )));
        }
        Ok(Kernel { tensor })
    }

    pub fn from_vec(extents: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        Self::new(Tensor::from_vec(Shape::new(extents)?, data)?)
    }

    /// Single unit tap: the identity operator in `ndim` dimensions.
    pub fn delta(ndim: usize) -> Result<Self> {
        let shape = Shape::new(vec![1; ndim])?;
        Ok(Kernel { tensor: Tensor::filled(shape, T::one()) })
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.tensor
    }

    pub fn shape(&self) -> &Shape {
        self.tensor.shape()
    }

    pub fn ndim(&self) -> usize {
        self.tensor.ndim()
    }

    /// Half-widths `p_i`.
    pub fn radii(&self) -> Vec<usize> {
        self.shape().extents().iter().map(|d| (d - 1) / 2).collect()
    }

    pub fn sum(&self) -> T {
        self.tensor.sum()
    }

    pub fn is_zero(&self) -> bool {
        self.tensor.vectorize().iter().all(|&v| v == T::zero())
    }
}

/// Output shape of [`conv_full`]: `d_i + 2p_i` per axis.
pub fn full_shape<T: Scalar>(x_shape: &Shape, h: &Kernel<T>) -> Result<Shape> {
    if x_shape.ndim() != h.ndim() {
        return shape_err(format!(
            "{}-d input convolved with {}-d kernel",
            x_shape.ndim(),
            h.ndim()
        ));
    }
    Shape::new(
        x_shape
            .extents()
            .iter()
            .zip(h.shape().extents())
            .map(|(d, k)| d + k - 1)
            .collect::<Vec<_>>(),
    )
}

/// `y(s) = Σ_k x(k) h(s - k)` over every `s` where the supports overlap.
pub fn conv_full<T: Scalar>(x: &Tensor<T>, h: &Kernel<T>) -> Result<Tensor<T>> {
    let out_shape = full_shape(x.shape(), h)?;
    let mut out = vec![T::zero(); out_shape.len()];
    let out_ext = out_shape.extents();
    let x_ext = x.shape().extents();
    let h_ext = h.shape().extents();
    let (xs, hs) = (x.vectorize(), h.tensor().vectorize());

    if out_ext.len() == 1 {
        accumulate(&mut out, out_ext, xs, x_ext, hs, h_ext);
    } else {
        // Each first-axis output slab is owned by one task and summed in a
        // fixed order, so the result does not depend on the thread count.
        let out_slab: usize = out_ext[1..].iter().product();
        let x_slab: usize = x_ext[1..].iter().product();
        let h_slab: usize = h_ext[1..].iter().product();
        let fill = |(o, chunk): (usize, &mut [T])| {
            let j_lo = o.saturating_sub(x_ext[0] - 1);
            let j_hi = o.min(h_ext[0] - 1);
            for j in j_lo..=j_hi {
                let i = o - j;
                accumulate(
                    chunk,
                    &out_ext[1..],
                    &xs[i * x_slab..(i + 1) * x_slab],
                    &x_ext[1..],
                    &hs[j * h_slab..(j + 1) * h_slab],
                    &h_ext[1..],
                );
            }
        };
        if out.len() >= PAR_MIN_ELEMENTS {
            out.par_chunks_mut(out_slab).enumerate().for_each(fill);
        } else {
            out.chunks_mut(out_slab).enumerate().for_each(fill);
        }
    }
    Ok(Tensor::from_parts_unchecked(out_shape, out))
}

/// Adds the full convolution of `x` and `h` into `out`.
fn accumulate<T: Scalar>(
    out: &mut [T],
    out_ext: &[usize],
    x: &[T],
    x_ext: &[usize],
    h: &[T],
    h_ext: &[usize],
) {
    if out_ext.len() == 1 {
        let n = x.len();
        for (j, &hj) in h.iter().enumerate() {
            if hj == T::zero() {
                continue;
            }
            for (o, &xv) in out[j..j + n].iter_mut().zip(x) {
                *o = *o + hj * xv;
            }
        }
        return;
    }
    let out_slab: usize = out_ext[1..].iter().product();
    let x_slab: usize = x_ext[1..].iter().product();
    let h_slab: usize = h_ext[1..].iter().product();
    for i in 0..x_ext[0] {
        for j in 0..h_ext[0] {
            let o = i + j;
            accumulate(
                &mut out[o * out_slab..(o + 1) * out_slab],
                &out_ext[1..],
                &x[i * x_slab..(i + 1) * x_slab],
                &x_ext[1..],
                &h[j * h_slab..(j + 1) * h_slab],
                &h_ext[1..],
            );
        }
    }
}

/// `out(s) = h(2p - s)` on every axis.
pub fn flip<T: Scalar>(h: &Kernel<T>) -> Kernel<T> {
    // Reversing the vectorization reverses every axis at once.
    let data: Vec<T> = h.tensor().vectorize().iter().rev().copied().collect();
    Kernel {
        tensor: Tensor::from_parts_unchecked(h.shape().clone(), data),
    }
}

/// Keeps indices `2p_i ..= 2p_i + target_i - 1` on every axis.
///
/// `t` must have extents `target_i + 4p_i`, the size of a full convolution of
/// a full-convolution output with the flipped kernel.
pub fn crop_m<T: Scalar>(t: &Tensor<T>, radii: &[usize], target: &Shape) -> Result<Tensor<T>> {
    if radii.len() != t.ndim() || target.ndim() != t.ndim() {
        return shape_err(format!(
            "crop of {}-d tensor with {} radii and {}-d target",
            t.ndim(),
            radii.len(),
            target.ndim()
        ));
    }
    for axis in 0..t.ndim() {
        if t.shape().extent(axis) != target.extent(axis) + 4 * radii[axis] {
            return shape_err(format!(
                "axis {axis}: extent {} is not target {} + 4*{}",
                t.shape().extent(axis),
                target.extent(axis),
                radii[axis]
            ));
        }
    }
    let offset: Vec<usize> = radii.iter().map(|p| 2 * p).collect();
    t.crop(&offset, target)
}

/// Applies the transpose of the convolution matrix of `h` to `y`.
///
/// `y` lives in the output space of [`conv_full`] for inputs of `x_shape`;
/// the result lives in the input space.
pub fn adjoint_apply<T: Scalar>(y: &Tensor<T>, h: &Kernel<T>, x_shape: &Shape) -> Result<Tensor<T>> {
    let expected = full_shape(x_shape, h)?;
    if y.shape() != &expected {
        return shape_err(format!(
            "adjoint input has shape {}, expected {expected} for inputs of {x_shape}",
            y.shape()
        ));
    }
    let correlated = conv_full(y, &flip(h))?;
    crop_m(&correlated, &h.radii(), x_shape)
}

/// Gradient of `½‖conv_full(x, h) - y‖²` evaluated as two adjoint
/// convolutions: `A^T A x - A^T y`.
pub fn normal_gradient<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, h: &Kernel<T>) -> Result<Tensor<T>> {
    let forward = adjoint_apply(&conv_full(x, h)?, h, x.shape())?;
    let data_term = adjoint_apply(y, h, x.shape())?;
    forward.sub(&data_term)
}
