//! Dense realization of the convolution operator as a block-Toeplitz matrix.
//!
//! The matrix is assembled recursively. In one dimension it is the banded
//! Toeplitz matrix whose column `c` holds the kernel in rows `c..=c + 2p`.
//! In `n` dimensions it is block-banded: block `(r, c)` is the
//! `(n-1)`-dimensional matrix of kernel slice `r - c` when
//! `0 <= r - c <= 2p_1`, and zero otherwise.
//!
//! This is an oracle for the convolution routines. It is never used by the
//! solvers, and its size is capped.

use std::fmt::LowerExp;
use std::io::Write;

use crate::convolution::{full_shape, Kernel};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Shape;

/// Largest `rows * cols` that [`build_matrix`] will allocate.
pub const MAX_ENTRIES: usize = 10_000_000;

/// Dense row-major matrix of the convolution with a fixed kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitConvMatrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

/// Builds the matrix `A` with `vectorize(conv_full(x, h)) == A · vectorize(x)`
/// for every `x` of `x_shape`.
pub fn build_matrix<T: Scalar>(h: &Kernel<T>, x_shape: &Shape) -> Result<ExplicitConvMatrix<T>> {
    let out = full_shape(x_shape, h)?;
    let (rows, cols) = (out.len(), x_shape.len());
    if rows.checked_mul(cols).map_or(true, |n| n > MAX_ENTRIES) {
        return Err(Error::TooLarge { rows, cols, limit: MAX_ENTRIES });
    }
    let m = build_level(h.tensor().vectorize(), h.shape().extents(), x_shape.extents());
    debug_assert_eq!((m.rows, m.cols), (rows, cols));
    Ok(m)
}

fn build_level<T: Scalar>(h: &[T], h_ext: &[usize], x_ext: &[usize]) -> ExplicitConvMatrix<T> {
    let (taps, d) = (h_ext[0], x_ext[0]);
    let band_rows = d + taps - 1;

    // Blocks for each kernel slice along the leading axis; scalars in 1-d.
    let h_slab = h.len() / taps;
    let blocks: Vec<ExplicitConvMatrix<T>> = if h_ext.len() == 1 {
        h.iter()
            .map(|&v| ExplicitConvMatrix { rows: 1, cols: 1, entries: vec![v] })
            .collect()
    } else {
        (0..taps)
            .map(|j| build_level(&h[j * h_slab..(j + 1) * h_slab], &h_ext[1..], &x_ext[1..]))
            .collect()
    };
    let (br, bc) = (blocks[0].rows, blocks[0].cols);
    let rows = band_rows * br;
    let cols = d * bc;
    let mut entries = vec![T::zero(); rows * cols];
    for block_row in 0..band_rows {
        for block_col in 0..d {
            if block_row < block_col || block_row - block_col >= taps {
                continue;
            }
            let block = &blocks[block_row - block_col];
            for r in 0..br {
                let dst = (block_row * br + r) * cols + block_col * bc;
                entries[dst..dst + bc].copy_from_slice(&block.entries[r * bc..(r + 1) * bc]);
            }
        }
    }
    ExplicitConvMatrix { rows, cols, entries }
}

impl<T: Scalar> ExplicitConvMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, row: usize, col: usize) -> T {
        self.entries[row * self.cols + col]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return shape_err(format!("vector of length {} for {} columns", v.len(), self.cols));
        }
        Ok(self
            .entries
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect())
    }

    pub fn transpose_matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.rows {
            return shape_err(format!("vector of length {} for {} rows", v.len(), self.rows));
        }
        let mut out = vec![T::zero(); self.cols];
        for (row, &vr) in self.entries.chunks_exact(self.cols).zip(v) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o = *o + a * vr;
            }
        }
        Ok(out)
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.cols];
        for row in self.entries.chunks_exact(self.cols) {
            for (s, &a) in sums.iter_mut().zip(row) {
                *s = *s + a;
            }
        }
        sums
    }
}

impl<T: Scalar + LowerExp> ExplicitConvMatrix<T> {
    /// One matrix row per line, comma separated, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.entries.chunks_exact(self.cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(e: &[usize]) -> Shape {
        Shape::new(e.to_vec()).unwrap()
    }

    #[test]
    fn one_dimensional_band() {
        let h = Kernel::from_vec(vec![3], vec![1., 2., 3.]).unwrap();
        let a = build_matrix(&h, &shape(&[2])).unwrap();
        assert_eq!((a.rows(), a.cols()), (4, 2));
        assert_eq!(a.entries(), &[1., 0., 2., 1., 3., 2., 0., 3.]);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let h = Kernel::<f64>::delta(1).unwrap();
        let a = build_matrix(&h, &shape(&[3])).unwrap();
        assert_eq!(a.entries(), &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        assert_eq!(a.matvec(&[1., 2., 3.]).unwrap(), vec![1., 2., 3.]);
        assert_eq!(a.transpose_matvec(&[1., 2., 3.]).unwrap(), vec![1., 2., 3.]);
    }

    #[test]
    fn trivial_inner_axis_gives_scalar_diagonal_blocks() {
        // Kernel 3x1 on 2x2 inputs: 4x2 grid of 2x2 blocks h(j)·I.
        let h = Kernel::from_vec(vec![3, 1], vec![1., 2., 3.]).unwrap();
        let a = build_matrix(&h, &shape(&[2, 2])).unwrap();
        assert_eq!((a.rows(), a.cols()), (8, 4));
        for br in 0..4usize {
            for bc in 0..2usize {
                let tap = br.checked_sub(bc).filter(|&j| j < 3).map(|j| [1., 2., 3.][j]);
                for r in 0..2 {
                    for c in 0..2 {
                        let want = match tap {
                            Some(v) if r == c => v,
                            _ => 0.0,
                        };
                        assert_eq!(a.entry(br * 2 + r, bc * 2 + c), want);
                    }
                }
            }
        }
    }

    #[test]
    fn matvec_examples() {
        let h = Kernel::from_vec(vec![3], vec![1., 2., 3.]).unwrap();
        let a = build_matrix(&h, &shape(&[2])).unwrap();
        assert_eq!(a.matvec(&[1., 0.]).unwrap(), vec![1., 2., 3., 0.]);
        assert_eq!(a.matvec(&[0., 0.]).unwrap(), vec![0.; 4]);
        assert_eq!(a.transpose_matvec(&[1., 0., 0., 0.]).unwrap(), vec![1., 0.]);
        assert!(matches!(a.matvec(&[1.]), Err(Error::Shape(_))));
        assert!(matches!(a.transpose_matvec(&[1., 2.]), Err(Error::Shape(_))));
    }

    #[test]
    fn oversized_requests_rejected() {
        let h = Kernel::from_vec(vec![5, 5], vec![1.0; 25]).unwrap();
        assert!(matches!(
            build_matrix(&h, &shape(&[100, 100])),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn csv_dump() {
        let h = Kernel::from_vec(vec![3], vec![1., 0.5, 0.25]).unwrap();
        let a = build_matrix(&h, &shape(&[1])).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "1.0000000000000000e0");
        assert_eq!(lines[2].parse::<f64>().unwrap(), 0.25);
    }
}
