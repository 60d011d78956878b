//! Dense row-major `f64` arrays. No broadcasting: every shape adaptation is
//! explicit at the call site. Arrays are immutable after construction; all
//! operations allocate fresh outputs, so sharing across threads is safe.

use crate::error::{Error, Result};

/// Dense n-dimensional array of 64-bit reals in row-major order.
///
/// Invariants: `product(shape) == data.len()`, and every library-produced
/// array holds only finite values (operations that could produce NaN/Inf
/// check their outputs and fail with [`Error::NonFinite`] instead).
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    /// Builds an array from a shape and a row-major buffer.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Array> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} implies {} elements, buffer has {}",
                shape,
                expect,
                data.len()
            )));
        }
        let a = Array { shape, data };
        a.check_finite("from_vec")?;
        Ok(a)
    }

    /// Builds an array without the finiteness check (shape is still
    /// validated). Only for deserialization paths that must be able to carry
    /// corrupted payloads to a comparison step; everything else goes through
    /// [`Array::from_vec`].
    pub fn from_vec_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Array {
        let expect: usize = shape.iter().product();
        assert_eq!(expect, data.len(), "shape/buffer length mismatch");
        Array { shape, data }
    }

    /// All-zero array.
    pub fn zeros(shape: Vec<usize>) -> Array {
        let n: usize = shape.iter().product();
        Array {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Constant-filled array.
    pub fn filled(shape: Vec<usize>, value: f64) -> Array {
        let n: usize = shape.iter().product();
        Array {
            shape,
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The one flat-index function every module uses: row-major strides,
    /// last coordinate fastest.
    pub fn flat_index(shape: &[usize], coords: &[usize]) -> usize {
        debug_assert_eq!(shape.len(), coords.len());
        let mut idx = 0;
        for (extent, &c) in shape.iter().zip(coords) {
            debug_assert!(c < *extent);
            idx = idx * extent + c;
        }
        idx
    }

    /// Inverse of [`Array::flat_index`]; round-trips exactly.
    pub fn coords(shape: &[usize], mut flat: usize) -> Vec<usize> {
        let mut coords = vec![0; shape.len()];
        for i in (0..shape.len()).rev() {
            coords[i] = flat % shape[i];
            flat /= shape[i];
        }
        coords
    }

    /// Element at the given coordinates.
    pub fn at(&self, coords: &[usize]) -> f64 {
        self.data[Self::flat_index(&self.shape, coords)]
    }

    /// Same buffer under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Array> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} to {:?}",
                self.shape, shape
            )));
        }
        Ok(Array {
            shape,
            data: self.data.clone(),
        })
    }

    /// Elementwise map; output checked finite.
    pub fn map(&self, f: impl Fn(f64) -> f64, context: &str) -> Result<Array> {
        let data: Vec<f64> = self.data.iter().map(|&x| f(x)).collect();
        let out = Array {
            shape: self.shape.clone(),
            data,
        };
        out.check_finite(context)?;
        Ok(out)
    }

    /// Elementwise sum of two same-shape arrays.
    pub fn add(&self, other: &Array) -> Result<Array> {
        self.zip(other, |a, b| a + b, "add")
    }

    /// Elementwise difference.
    pub fn sub(&self, other: &Array) -> Result<Array> {
        self.zip(other, |a, b| a - b, "sub")
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Array) -> Result<Array> {
        self.zip(other, |a, b| a * b, "mul")
    }

    /// Multiplication by a scalar.
    pub fn scale(&self, s: f64) -> Result<Array> {
        self.map(|x| x * s, "scale")
    }

    fn zip(&self, other: &Array, f: impl Fn(f64, f64) -> f64, context: &str) -> Result<Array> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{context}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let out = Array {
            shape: self.shape.clone(),
            data,
        };
        out.check_finite(context)?;
        Ok(out)
    }

    /// Rank-2 transpose.
    pub fn transpose(&self) -> Array {
        assert_eq!(self.ndim(), 2, "transpose requires a rank-2 array");
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Array {
            shape: vec![n, m],
            data,
        }
    }

    /// Rows `range.start..range.end` of a rank-2 array. Bit-exact copy.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Array {
        assert_eq!(self.ndim(), 2, "slice_rows requires a rank-2 array");
        let cols = self.shape[1];
        assert!(range.end <= self.shape[0], "row range out of bounds");
        Array {
            shape: vec![range.len(), cols],
            data: self.data[range.start * cols..range.end * cols].to_vec(),
        }
    }

    /// Column block `range` of a rank-2 array. Bit-exact copy.
    pub fn slice_cols(&self, range: std::ops::Range<usize>) -> Array {
        assert_eq!(self.ndim(), 2, "slice_cols requires a rank-2 array");
        let (m, n) = (self.shape[0], self.shape[1]);
        assert!(range.end <= n, "column range out of bounds");
        let mut data = Vec::with_capacity(m * range.len());
        for i in 0..m {
            data.extend_from_slice(&self.data[i * n + range.start..i * n + range.end]);
        }
        Array {
            shape: vec![m, range.len()],
            data,
        }
    }

    /// Stacks rank-2 arrays with equal column counts on top of each other.
    /// Bit-exact copy.
    pub fn concat_rows(parts: &[&Array]) -> Result<Array> {
        assert!(!parts.is_empty(), "concat_rows needs at least one part");
        let cols = parts[0].shape[1];
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.ndim() != 2 || p.shape[1] != cols {
                return Err(Error::ShapeMismatch(format!(
                    "concat_rows: expected [*, {cols}], got {:?}",
                    p.shape
                )));
            }
            rows += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Array {
            shape: vec![rows, cols],
            data,
        })
    }

    /// Joins rank-2 arrays with equal row counts side by side. Bit-exact copy.
    pub fn concat_cols(parts: &[&Array]) -> Result<Array> {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let rows = parts[0].shape[0];
        let mut cols = 0;
        for p in parts {
            if p.ndim() != 2 || p.shape[0] != rows {
                return Err(Error::ShapeMismatch(format!(
                    "concat_cols: expected [{rows}, *], got {:?}",
                    p.shape
                )));
            }
            cols += p.shape[1];
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                let w = p.shape[1];
                data.extend_from_slice(&p.data[i * w..(i + 1) * w]);
            }
        }
        Ok(Array {
            shape: vec![rows, cols],
            data,
        })
    }

    /// Largest absolute entry (0 for empty arrays).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Fails if any entry is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        for (i, &x) in self.data.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("{context} at flat index {i}: {x}")));
            }
        }
        Ok(())
    }
}

/// Standard matrix product of `a: [m, k]` and `b: [k, n]` with 64-bit
/// accumulation.
pub fn matmul(a: &Array, b: &Array) -> Result<Array> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::ShapeMismatch(format!(
            "matmul: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut data = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    // ikj order keeps the inner loop contiguous over b's rows.
    for i in 0..m {
        for kk in 0..k {
            let aik = ad[i * k + kk];
            let brow = &bd[kk * n..(kk + 1) * n];
            let crow = &mut data[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
    let out = Array {
        shape: vec![m, n],
        data,
    };
    out.check_finite("matmul")?;
    Ok(out)
}

/// Reverses the row order of a rank-2 sequence. Bit-exact; its own inverse.
pub fn reverse_seq(x: &Array) -> Array {
    assert_eq!(x.ndim(), 2, "reverse_seq requires a rank-2 array");
    let (m, d) = (x.shape()[0], x.shape()[1]);
    let mut data = Vec::with_capacity(m * d);
    for i in (0..m).rev() {
        data.extend_from_slice(&x.data()[i * d..(i + 1) * d]);
    }
    Array {
        shape: vec![m, d],
        data,
    }
}
