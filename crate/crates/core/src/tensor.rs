//! Dense row-major tensors of `f64`.
//!
//! Shapes are outermost-first. Image and feature tensors are laid out as
//! (channels, height, width); convolution kernels as
//! (out_channels, in_channels, kh, kw). There is no broadcasting: every
//! binary operation requires identical shapes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Tensor of the given shape with every element set to `fill`.
    pub fn new(shape: &[usize], fill: f64) -> Result<Self> {
        let n = checked_numel(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![fill; n],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = checked_numel(shape)?;
        if n != data.len() {
            return Err(Error::mismatch("from_vec", shape, &[data.len()]));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds a rank-2 tensor from rows of equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidShape(vec![n, m]));
        }
        Self::from_vec(&[n, m], rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n = checked_numel(shape)?;
        if n != self.data.len() {
            return Err(Error::mismatch("reshape", &self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::mismatch(op, &self.shape, &[0, 0])),
        }
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::from_vec(&[c, r], out)
    }

    /// Standard matrix product of an n×k and a k×m tensor.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, k) = self.dims2("matmul")?;
        let (k2, m) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(Error::mismatch("matmul", &self.shape, &rhs.shape));
        }
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, &self.data, &rhs.data, &mut out);
        Tensor::from_vec(&[n, m], out)
    }

    /// Element-wise `alpha * x + y`.
    pub fn axpy(alpha: f64, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        if x.shape != y.shape {
            return Err(Error::mismatch("axpy", &x.shape, &y.shape));
        }
        let data = x
            .data
            .iter()
            .zip(&y.data)
            .map(|(&a, &b)| alpha.mul_add(a, b))
            .collect();
        Tensor::from_vec(&y.shape, data)
    }

    /// In-place `self += alpha * x`.
    pub fn add_scaled(&mut self, alpha: f64, x: &Tensor) -> Result<()> {
        if x.shape != self.shape {
            return Err(Error::mismatch("add_scaled", &self.shape, &x.shape));
        }
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s = alpha.mul_add(v, *s);
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        Tensor::axpy(-1.0, rhs, self)
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, rhs: &Tensor) -> Result<f64> {
        if rhs.shape != self.shape {
            return Err(Error::mismatch("dot", &self.shape, &rhs.shape));
        }
        Ok(self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Free-function form of [`Tensor::new`].
pub fn tensor_new(shape: &[usize], fill: f64) -> Result<Tensor> {
    Tensor::new(shape, fill)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.matmul(b)
}

pub fn axpy(alpha: f64, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    Tensor::axpy(alpha, x, y)
}

pub fn sum_squares(x: &Tensor) -> f64 {
    x.sum_squares()
}

/// `c ← a·b` for dense row-major `a` (n×k), `b` (k×m) and `c` (n×m).
///
/// Single-threaded and deterministic; callers parallelize over
/// independent blocks.
pub(crate) fn gemm(n: usize, k: usize, m: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= n * k && b.len() >= k * m && c.len() >= n * m, "gemm operand too short");
    // SAFETY: the asserts above keep every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            n, k, m, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), m as isize, 1,
            0.0,
            c.as_mut_ptr(), m as isize, 1,
        );
    }
}

/// `c ← a·aᵀ` for row-major `a` (n×m); `c` is n×n.
pub(crate) fn gemm_aat(n: usize, m: usize, a: &[f64], c: &mut [f64]) {
    assert!(a.len() >= n * m && c.len() >= n * n, "gemm operand too short");
    // SAFETY: as in `gemm`; the second operand is `a` read column-major.
    unsafe {
        matrixmultiply::dgemm(
            n, m, n, 1.0,
            a.as_ptr(), m as isize, 1,
            a.as_ptr(), 1, m as isize,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}
