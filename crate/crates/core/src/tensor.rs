//! Dense row-major matrices of `f64` and the forward kernels used by the tape.
//!
//! Every tensor is two-dimensional; a scalar is `1 x 1` and a vector is a
//! single row or column. Public constructors and kernels reject NaN/Inf.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{contract, dim_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.rows, self.cols)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Default for Tensor {
    fn default() -> Self {
        Tensor::zeros(0, 0)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("data", &self.data).finish()
    }
}

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Numeric(format!("{what}: non-finite value {} at flat index {i}", data[i]))),
    }
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(dim_err!("shape [{rows}, {cols}] needs {} values, got {}", rows * cols, data.len()));
        }
        check_finite(&data, "Tensor::new")?;
        Ok(Tensor { shape: Shape::new(rows, cols), data })
    }

    /// Builds a tensor from data already known to be finite and correctly sized.
    pub(crate) fn from_parts(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor { shape, data }
    }

    fn checked(shape: Shape, data: Vec<f64>, op: &str) -> Result<Self> {
        check_finite(&data, op)?;
        Ok(Tensor { shape, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { shape: Shape::new(rows, cols), data: vec![0.0; rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { shape: Shape::new(rows, cols), data: vec![value; rows * cols] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Shape::new(1, 1), data: vec![value] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn row_vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(1, n, data)
    }

    pub fn column_vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(n, 1, data)
    }

    /// Stacks equally wide rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(dim_err!("row {i} has {} columns, expected {cols}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(rows.len(), cols, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape.cols;
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape.cols + c]
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.rows == 1 && self.shape.cols == 1
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(contract!("item() on non-scalar tensor of shape {}", self.shape));
        }
        Ok(self.data[0])
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    fn same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(dim_err!("{op}: shapes {} and {} differ", self.shape, other.shape));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(other, op)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Tensor::checked(self.shape, data, op)
    }

    fn map(&self, op: &str, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let data = self.data.iter().map(|&a| f(a)).collect();
        Tensor::checked(self.shape, data, op)
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, k) = (self.rows(), self.cols());
        if rhs.rows() != k {
            return Err(dim_err!("matmul: {} x {}", self.shape, rhs.shape));
        }
        let m = rhs.cols();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::checked(Shape::new(n, m), out, "matmul")
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::from_parts(Shape::new(c, r), out)
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        self.map("scale", |a| a * factor)
    }

    pub fn add_scalar(&self, value: f64) -> Result<Tensor> {
        self.map("add_scalar", |a| a + value)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.map("relu", |a| if a > 0.0 { a } else { 0.0 })
    }

    /// `max(0, x)` elementwise; the hinge of the ranking losses.
    pub fn max_with_zero(&self) -> Result<Tensor> {
        self.relu()
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.map("tanh", libm::tanh)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.map("exp", libm::exp)
    }

    pub fn log(&self) -> Result<Tensor> {
        if let Some(&x) = self.data.iter().find(|&&x| x <= 0.0) {
            return Err(Error::Numeric(format!("log of non-positive value {x}")));
        }
        self.map("log", libm::log)
    }

    /// Inner product of two equally shaped tensors, as a `1 x 1` tensor.
    pub fn dot(&self, rhs: &Tensor) -> Result<Tensor> {
        self.same_shape(rhs, "dot")?;
        let s = self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).sum();
        Tensor::checked(Shape::new(1, 1), vec![s], "dot")
    }

    pub fn l2_norm(&self) -> Result<Tensor> {
        Tensor::checked(Shape::new(1, 1), vec![self.norm()], "l2_norm")
    }

    /// Euclidean norm of every row, as a column.
    pub fn row_norms(&self) -> Tensor {
        let data = (0..self.rows()).map(|i| libm::sqrt(self.row(i).iter().map(|x| x * x).sum())).collect();
        Tensor::from_parts(Shape::new(self.rows(), 1), data)
    }

    pub fn softmax_rows(&self) -> Result<Tensor> {
        self.log_softmax_rows()?.exp()
    }

    pub fn log_softmax_rows(&self) -> Result<Tensor> {
        let c = self.cols();
        if c == 0 {
            return Err(dim_err!("softmax over zero columns"));
        }
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..self.rows() {
            let row = self.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|&x| libm::exp(x - max)).sum::<f64>());
            out.extend(row.iter().map(|&x| x - lse));
        }
        Tensor::checked(self.shape, out, "log_softmax_rows")
    }

    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        let cols = parts.first().map_or(0, |t| t.cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, t) in parts.iter().enumerate() {
            if t.cols() != cols {
                return Err(dim_err!("concat_rows: part {i} has {} columns, expected {cols}", t.cols()));
            }
            rows += t.rows();
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor::from_parts(Shape::new(rows, cols), data))
    }

    /// Column means over all rows, as a `1 x cols` row.
    pub fn mean_rows(&self) -> Result<Tensor> {
        let (r, c) = (self.rows(), self.cols());
        if r == 0 {
            return Err(contract!("mean_rows over zero rows"));
        }
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
        let inv = 1.0 / r as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Tensor::checked(Shape::new(1, c), out, "mean_rows")
    }

    pub fn sum_all(&self) -> Result<Tensor> {
        Tensor::checked(Shape::new(1, 1), vec![self.sum()], "sum_all")
    }

    /// Sum of each row, as an `rows x 1` column.
    pub fn sum_cols(&self) -> Result<Tensor> {
        let data = (0..self.rows()).map(|i| self.row(i).iter().sum()).collect();
        Tensor::checked(Shape::new(self.rows(), 1), data, "sum_cols")
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        if row.rows() != 1 || row.cols() != self.cols() {
            return Err(dim_err!("add_row: {} + row {}", self.shape, row.shape));
        }
        let c = self.cols();
        let data = self.data.iter().enumerate().map(|(i, &x)| x + row.data[i % c]).collect();
        Tensor::checked(self.shape, data, "add_row")
    }

    /// Subtracts an `rows x 1` column from every column.
    pub fn sub_col(&self, col: &Tensor) -> Result<Tensor> {
        if col.cols() != 1 || col.rows() != self.rows() {
            return Err(dim_err!("sub_col: {} - column {}", self.shape, col.shape));
        }
        let c = self.cols();
        let data = self.data.iter().enumerate().map(|(i, &x)| x - col.data[i / c]).collect();
        Tensor::checked(self.shape, data, "sub_col")
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        if start + len > self.rows() {
            return Err(dim_err!("slice_rows {start}..{} out of {} rows", start + len, self.rows()));
        }
        let c = self.cols();
        Ok(Tensor::from_parts(Shape::new(len, c), self.data[start * c..(start + len) * c].to_vec()))
    }

    /// Rows picked by index, in the given order (repeats allowed).
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= self.rows() {
                return Err(dim_err!("gather_rows: index {i} out of {} rows", self.rows()));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor::from_parts(Shape::new(idx.len(), c), data))
    }
}

/// Inverted dropout: each entry is zeroed with probability `drop_rate` and the
/// survivors are scaled by `1 / (1 - drop_rate)`, so inference needs no rescaling.
pub fn apply_dropout<R: rand::Rng + ?Sized>(x: &Tensor, drop_rate: f64, rng: &mut R) -> Result<Tensor> {
    let mask = dropout_mask(x.shape(), drop_rate, rng)?;
    x.mul(&mask)
}

/// Mask of `0` and `1 / (1 - drop_rate)` entries.
pub fn dropout_mask<R: rand::Rng + ?Sized>(shape: Shape, drop_rate: f64, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&drop_rate) {
        return Err(contract!("drop rate must lie in [0, 1), got {drop_rate}"));
    }
    if drop_rate == 0.0 {
        return Ok(Tensor::full(shape.rows, shape.cols, 1.0));
    }
    let keep = 1.0 / (1.0 - drop_rate);
    let data = (0..shape.len()).map(|_| if rng.random::<f64>() < drop_rate { 0.0 } else { keep }).collect();
    Ok(Tensor::from_parts(shape, data))
}
