//! Dense row-major real matrices and the block assembly used to build
//! structured matrix inequalities.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>13.6e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: k / cols.max(1), col: k % cols.max(1) });
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; use
    /// [`Mat::try_from_rows`] for untrusted data.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        Self::try_from_rows(rows).expect("ragged or non-finite rows")
    }

    pub fn try_from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::Dimension(format!("row {i} has {} entries, expected {c}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Mat::from_vec(r, c, data)
    }

    pub fn col_vector(v: &[f64]) -> Self {
        Mat { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn diag(v: &[f64]) -> Self {
        let mut m = Mat::zeros(v.len(), v.len());
        for (i, x) in v.iter().enumerate() {
            m[(i, i)] = *x;
        }
        m
    }

    pub fn scalar(x: f64) -> Self {
        Mat { rows: 1, cols: 1, data: vec![x] }
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    pub fn zip_map(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in elementwise op");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimensions differ: {:?} * {:?}", self.shape(), other.shape());
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product `tr(selfᵀ other)`.
    pub fn dot(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn asymmetry(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        dev
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && self.asymmetry() <= tol
    }

    /// `(m + mᵀ)/2`.
    pub fn symmetric_part(&self) -> Mat {
        assert!(self.is_square());
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        m
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "block out of range");
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn add_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "block out of range");
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] += b[(i, j)];
            }
        }
    }

    pub fn hstack(parts: &[&Mat]) -> Result<Mat> {
        block_assemble(&[parts.iter().map(|m| Block::M(m)).collect::<Vec<_>>()])
    }

    pub fn vstack(parts: &[&Mat]) -> Result<Mat> {
        let grid: Vec<Vec<Block>> = parts.iter().map(|m| vec![Block::M(m)]).collect();
        block_assemble(&grid)
    }

    /// Basis vector `e_i` of length `n` as a column.
    pub fn unit(n: usize, i: usize) -> Mat {
        let mut m = Mat::zeros(n, 1);
        m[(i, 0)] = 1.0;
        m
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs)
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

/// A cell of a block grid: a concrete matrix or a zero block whose size is
/// inferred from its grid row and column.
#[derive(Clone, Copy, Debug)]
pub enum Block<'a> {
    M(&'a Mat),
    Zero,
}

/// Concatenates a grid of blocks. Every grid row and grid column must contain
/// at least one concrete block so that zero placeholders can be sized.
pub fn block_assemble(grid: &[Vec<Block<'_>>]) -> Result<Mat> {
    let nr = grid.len();
    let nc = grid.first().map_or(0, Vec::len);
    for (i, row) in grid.iter().enumerate() {
        if row.len() != nc {
            return Err(Error::Dimension(format!("grid row {i} has {} blocks, expected {nc}", row.len())));
        }
    }
    let mut heights: Vec<Option<usize>> = vec![None; nr];
    let mut widths: Vec<Option<usize>> = vec![None; nc];
    for (i, row) in grid.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            if let Block::M(m) = b {
                match heights[i] {
                    Some(h) if h != m.rows => {
                        return Err(Error::Dimension(format!(
                            "block ({i}, {j}) has {} rows but grid row {i} has {h}",
                            m.rows
                        )))
                    }
                    _ => heights[i] = Some(m.rows),
                }
                match widths[j] {
                    Some(w) if w != m.cols => {
                        return Err(Error::Dimension(format!(
                            "block ({i}, {j}) has {} columns but grid column {j} has {w}",
                            m.cols
                        )))
                    }
                    _ => widths[j] = Some(m.cols),
                }
            }
        }
    }
    let heights: Vec<usize> = heights
        .iter()
        .enumerate()
        .map(|(i, h)| h.ok_or_else(|| Error::Dimension(format!("grid row {i} has no sized block"))))
        .collect::<Result<_>>()?;
    let widths: Vec<usize> = widths
        .iter()
        .enumerate()
        .map(|(j, w)| w.ok_or_else(|| Error::Dimension(format!("grid column {j} has no sized block"))))
        .collect::<Result<_>>()?;
    let mut out = Mat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (i, row) in grid.iter().enumerate() {
        let mut c0 = 0;
        for (j, b) in row.iter().enumerate() {
            if let Block::M(m) = b {
                out.set_block(r0, c0, m);
            }
            c0 += widths[j];
        }
        r0 += heights[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_identity() {
        let i2 = Mat::identity(2);
        let m = block_assemble(&[vec![Block::M(&i2), Block::Zero], vec![Block::Zero, Block::M(&i2)]]).unwrap();
        assert_eq!(m, Mat::identity(4));
    }

    #[test]
    fn block_mismatch_names_coordinate() {
        let a = Mat::identity(2);
        let b = Mat::identity(3);
        let err = block_assemble(&[vec![Block::M(&a), Block::M(&b)]]).unwrap_err();
        assert!(err.to_string().contains("block (0, 1)"), "{err}");
    }

    #[test]
    fn closed_loop_layout() {
        let a0 = Mat::from_rows(&[[-1.66665, 1.0], [-1.13335, 0.0]]);
        let bcc = Mat::from_rows(&[[0.5, 0.0]]);
        let ac = Mat::scalar(-3.0);
        let m = block_assemble(&[vec![Block::M(&a0), Block::Zero], vec![Block::M(&bcc), Block::M(&ac)]]).unwrap();
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(2, 0)], 0.5);
        assert_eq!(m[(2, 2)], -3.0);
        assert_eq!(m[(0, 2)], 0.0);
    }

    #[test]
    fn zero_size_blocks() {
        let a = Mat::identity(2);
        let e = Mat::zeros(2, 0);
        let f = Mat::zeros(0, 0);
        let g = Mat::zeros(0, 2);
        let m = block_assemble(&[vec![Block::M(&a), Block::M(&e)], vec![Block::M(&g), Block::M(&f)]]).unwrap();
        assert_eq!(m, Mat::identity(2));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Mat::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
    }
}
