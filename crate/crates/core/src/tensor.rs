//! Dense 3-way tensors and row-major matrices.
//!
//! A [`FeatureTensor`] is stored row-major with shape `(C, H, W)`, so entry
//! `(c, h, w)` lives at `c * H * W + h * W + w`. Mode-n unfoldings put the
//! chosen mode on the rows and flatten the two remaining modes in ascending
//! order, row-major, on the columns: mode 1 has column index `h * W + w`,
//! mode 2 has `c * W + w`, mode 3 has `c * H + h`.

use std::fmt;

use crate::error::{Error, Result};

/// One of the three tensor modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Channel,
    Height,
    Width,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Channel, Mode::Height, Mode::Width];

    /// Parses a 1-based mode index.
    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            1 => Ok(Mode::Channel),
            2 => Ok(Mode::Height),
            3 => Ok(Mode::Width),
            other => Err(Error::InvalidMode(other)),
        }
    }

    /// 1-based index of this mode.
    pub fn index(self) -> usize {
        self.axis() + 1
    }

    /// 0-based axis.
    pub fn axis(self) -> usize {
        match self {
            Mode::Channel => 0,
            Mode::Height => 1,
            Mode::Width => 2,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        if columns.iter().any(|c| c.as_ref().len() != rows) {
            return Err(Error::ShapeMismatch("ragged columns".into()));
        }
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.as_ref().iter().enumerate() {
                m.data[i * m.cols + j] = v;
            }
        }
        Self::new(m.rows, m.cols, m.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, &v) in values.iter().enumerate() {
            self.set(r, c, v);
        }
    }

    /// The first `n` columns.
    pub fn leading_columns(&self, n: usize) -> DenseMatrix {
        let n = n.min(self.cols);
        let mut out = DenseMatrix::zeros(self.rows, n);
        for r in 0..self.rows {
            out.data[r * n..(r + 1) * n].copy_from_slice(&self.row(r)[..n]);
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`.
    pub fn gram_columns(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &x) in v.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += x * a;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * alpha).collect(),
        }
    }
}

/// A real tensor of shape `(C, H, W)`, typically the activation output of a
/// convolutional layer for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let len = shape.iter().product::<usize>();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Builds a tensor by evaluating `f(c, h, w)` at every index.
    pub fn from_fn(shape: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for c in 0..shape[0] {
            for h in 0..shape[1] {
                for w in 0..shape[2] {
                    data.push(f(c, h, w));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn dim(&self, mode: Mode) -> usize {
        self.shape[mode.axis()]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.shape[1] + h) * self.shape[2] + w
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, v: f64) {
        let i = self.offset(c, h, w);
        self.data[i] = v;
    }

    /// The `H x W` slice for channel `c`, row-major.
    pub fn channel(&self, c: usize) -> &[f64] {
        let hw = self.shape[1] * self.shape[2];
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn scale(&self, alpha: f64) -> FeatureTensor {
        FeatureTensor {
            shape: self.shape,
            data: self.data.iter().map(|x| x * alpha).collect(),
        }
    }

    pub fn sub(&self, other: &FeatureTensor) -> Result<FeatureTensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(FeatureTensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Mode-n unfolding; see the module docs for the column ordering.
    pub fn unfold(&self, mode: Mode) -> DenseMatrix {
        let [c_n, h_n, w_n] = self.shape;
        match mode {
            Mode::Channel => DenseMatrix {
                rows: c_n,
                cols: h_n * w_n,
                data: self.data.clone(),
            },
            Mode::Height => {
                let cols = c_n * w_n;
                let mut out = DenseMatrix::zeros(h_n, cols);
                for c in 0..c_n {
                    for h in 0..h_n {
                        for w in 0..w_n {
                            out.data[h * cols + c * w_n + w] = self.get(c, h, w);
                        }
                    }
                }
                out
            }
            Mode::Width => {
                let cols = c_n * h_n;
                let mut out = DenseMatrix::zeros(w_n, cols);
                for c in 0..c_n {
                    for h in 0..h_n {
                        for w in 0..w_n {
                            out.data[w * cols + c * h_n + h] = self.get(c, h, w);
                        }
                    }
                }
                out
            }
        }
    }

    /// Inverse of [`FeatureTensor::unfold`].
    pub fn fold(matrix: &DenseMatrix, mode: Mode, shape: [usize; 3]) -> Result<FeatureTensor> {
        let rows = shape[mode.axis()];
        let cols: usize = shape.iter().product::<usize>() / rows.max(1);
        if shape.iter().any(|&d| d == 0) || matrix.rows != rows || matrix.cols != cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix cannot fold along mode {mode} into {shape:?}",
                matrix.rows, matrix.cols
            )));
        }
        let [c_n, h_n, w_n] = shape;
        let mut out = FeatureTensor::zeros(shape);
        match mode {
            Mode::Channel => out.data.copy_from_slice(&matrix.data),
            Mode::Height => {
                for c in 0..c_n {
                    for h in 0..h_n {
                        for w in 0..w_n {
                            out.set(c, h, w, matrix.data[h * cols + c * w_n + w]);
                        }
                    }
                }
            }
            Mode::Width => {
                for c in 0..c_n {
                    for h in 0..h_n {
                        for w in 0..w_n {
                            out.set(c, h, w, matrix.data[w * cols + c * h_n + h]);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// n-mode product `T ×ₙ A`: contracts mode `n` of the tensor with the
    /// columns of `A`, replacing that mode's size with `A.rows()`.
    pub fn mode_product(&self, a: &DenseMatrix, mode: Mode) -> Result<FeatureTensor> {
        let n = self.dim(mode);
        if a.cols != n {
            return Err(Error::ShapeMismatch(format!(
                "mode-{mode} product needs a matrix with {n} columns, got {}x{}",
                a.rows, a.cols
            )));
        }
        let [c_n, h_n, w_n] = self.shape;
        let mut shape = self.shape;
        shape[mode.axis()] = a.rows;
        let mut out = FeatureTensor::zeros(shape);
        match mode {
            Mode::Channel => {
                let hw = h_n * w_n;
                for i in 0..a.rows {
                    let dst = &mut out.data[i * hw..(i + 1) * hw];
                    for c in 0..c_n {
                        let coef = a.get(i, c);
                        if coef == 0.0 {
                            continue;
                        }
                        for (d, &s) in dst.iter_mut().zip(self.channel(c)) {
                            *d += coef * s;
                        }
                    }
                }
            }
            Mode::Height => {
                for c in 0..c_n {
                    for i in 0..a.rows {
                        let base = (c * a.rows + i) * w_n;
                        for h in 0..h_n {
                            let coef = a.get(i, h);
                            if coef == 0.0 {
                                continue;
                            }
                            let src = self.offset(c, h, 0);
                            for w in 0..w_n {
                                out.data[base + w] += coef * self.data[src + w];
                            }
                        }
                    }
                }
            }
            Mode::Width => {
                for c in 0..c_n {
                    for h in 0..h_n {
                        let src = &self.data[self.offset(c, h, 0)..self.offset(c, h, 0) + w_n];
                        let base = (c * h_n + h) * a.rows;
                        for i in 0..a.rows {
                            out.data[base + i] =
                                a.row(i).iter().zip(src).map(|(x, y)| x * y).sum();
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn unfold(t: &FeatureTensor, mode: Mode) -> DenseMatrix {
    t.unfold(mode)
}

pub fn fold(m: &DenseMatrix, mode: Mode, shape: [usize; 3]) -> Result<FeatureTensor> {
    FeatureTensor::fold(m, mode, shape)
}

pub fn mode_product(t: &FeatureTensor, a: &DenseMatrix, mode: Mode) -> Result<FeatureTensor> {
    t.mode_product(a, mode)
}

pub fn frobenius_norm(t: &FeatureTensor) -> f64 {
    t.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}
