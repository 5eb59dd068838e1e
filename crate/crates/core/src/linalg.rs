//! Dense column-major matrices, Gram products and symmetric pseudo-inverses.
//!
//! Everything downstream (interpolators, dual solvers, the determinant
//! condition) reduces to operations on the `n × n` Gram matrix `XᵀX`, so the
//! pseudo-inverse here is computed once per instance and applied many times.

use std::io::{Read, Write};
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense matrix of `f64` stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Wraps column-major storage, rejecting wrong lengths and non-finite entries.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices; convenient for small literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimMismatch("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for j in 0..c {
            for row in rows {
                data.push(row[j]);
            }
        }
        Matrix::from_col_major(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        assert_eq!(values.len(), self.cols);
        for (j, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (l, &b) in other.col(j).iter().enumerate() {
                if b != 0.0 {
                    axpy(b, self.col(l), dst);
                }
            }
        }
        Ok(out)
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (j, &b) in v.iter().enumerate() {
            if b != 0.0 {
                axpy(b, self.col(j), &mut out);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · v`
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimMismatch(format!(
                "transpose of {}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.cols).map(|j| dot(self.col(j), v)).collect())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Submatrix with the given row and column indices.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    /// Submatrix keeping all rows and the listed columns.
    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for &j in cols {
            data.extend_from_slice(self.col(j));
        }
        Matrix { rows: self.rows, cols: cols.len(), data }
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Writes the binary fixture layout: little-endian `u64` rows, `u64`
    /// cols, then `rows·cols` `f64` values column-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Matrix> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let cols = u64::from_le_bytes(word) as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        Matrix::from_col_major(rows, cols, data)
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a·x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Gram matrix `XᵀX`. Each off-diagonal entry is computed once and mirrored,
/// so the result is exactly symmetric.
pub fn gram(x: &Matrix) -> Matrix {
    let n = x.cols();
    let mut g = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = dot(x.col(i), x.col(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Default relative cutoff for [`pinv`]: `1e-12 · n`.
pub fn default_rel_tol(n: usize) -> f64 {
    1e-12 * n.max(1) as f64
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix, kept in factored form
/// `M⁺ = V diag(1/λ) Vᵀ` over the retained eigenpairs.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    dim: usize,
    /// Retained eigenvectors as columns (`dim × rank`).
    vectors: Matrix,
    /// Retained eigenvalues, aligned with `vectors`.
    values: Vec<f64>,
    max_abs_eigenvalue: f64,
}

impl PseudoInverse {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.max_abs_eigenvalue
    }

    /// `M⁺ v`
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch(format!(
                "pseudo-inverse of dim {} applied to vector of length {}",
                self.dim,
                v.len()
            )));
        }
        let coeffs = self.vectors.tr_matvec(v)?;
        let scaled: Vec<f64> = coeffs.iter().zip(&self.values).map(|(c, l)| c / l).collect();
        self.vectors.matvec(&scaled)
    }

    pub fn to_matrix(&self) -> Matrix {
        let n = self.dim;
        let mut out = Matrix::zeros(n, n);
        for (r, &l) in self.values.iter().enumerate() {
            let v = self.vectors.col(r);
            for j in 0..n {
                let s = v[j] / l;
                if s != 0.0 {
                    axpy(s, v, out.col_mut(j));
                }
            }
        }
        // Symmetrize away the last-bit differences from summation order.
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

/// Pseudo-inverse of a symmetric (PSD in practice) matrix via symmetric
/// eigendecomposition. Eigenvalues with `|λ| ≤ rel_tol · max|λ|` are dropped.
pub fn pinv(m: &Matrix, rel_tol: f64) -> Result<PseudoInverse> {
    if m.rows() != m.cols() {
        return Err(Error::DimMismatch(format!(
            "pseudo-inverse needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = m.rows();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let mut asym = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    if n == 0 {
        return Ok(PseudoInverse {
            dim: 0,
            vectors: Matrix::zeros(0, 0),
            values: Vec::new(),
            max_abs_eigenvalue: 0.0,
        });
    }

    let eig = m.to_nalgebra().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cutoff = rel_tol * max_abs;
    let keep: Vec<usize> = (0..n)
        .filter(|&r| max_abs > 0.0 && eig.eigenvalues[r].abs() > cutoff)
        .collect();
    let mut vectors = Matrix::zeros(n, keep.len());
    let mut values = Vec::with_capacity(keep.len());
    for (slot, &r) in keep.iter().enumerate() {
        values.push(eig.eigenvalues[r]);
        for i in 0..n {
            vectors[(i, slot)] = eig.eigenvectors[(i, r)];
        }
    }
    Ok(PseudoInverse {
        dim: n,
        vectors,
        values,
        max_abs_eigenvalue: max_abs,
    })
}

/// [`pinv`] with the default cutoff.
pub fn pinv_default(m: &Matrix) -> Result<PseudoInverse> {
    pinv(m, default_rel_tol(m.rows()))
}

/// `aᵀ M⁺ b`
pub fn quad_form(m_inv: &PseudoInverse, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != m_inv.dim() || b.len() != m_inv.dim() {
        return Err(Error::DimMismatch(format!(
            "quadratic form of dim {} with vectors of length {} and {}",
            m_inv.dim(),
            a.len(),
            b.len()
        )));
    }
    let ca = m_inv.vectors.tr_matvec(a)?;
    let cb = m_inv.vectors.tr_matvec(b)?;
    Ok(ca
        .iter()
        .zip(&cb)
        .zip(&m_inv.values)
        .map(|((x, y), l)| x * y / l)
        .sum())
}

/// Solves `M x = b` for symmetric positive definite `M` by Cholesky,
/// falling back to the minimum-norm pseudo-inverse solution when `M` is
/// singular or indefinite.
pub fn solve_spd(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if m.rows() != m.cols() || b.len() != m.rows() {
        return Err(Error::DimMismatch(format!(
            "solve with {}x{} matrix and rhs of length {}",
            m.rows(),
            m.cols(),
            b.len()
        )));
    }
    if let Some(chol) = m.to_nalgebra().cholesky() {
        let l = chol.l_dirty();
        let min_diag = (0..m.rows()).fold(f64::INFINITY, |a, i| a.min(l[(i, i)].abs()));
        let max_diag = (0..m.rows()).fold(0.0f64, |a, i| a.max(l[(i, i)].abs()));
        // A tiny pivot means numerically singular; Cholesky "succeeds" but
        // the solve would amplify roundoff.
        if min_diag > 1e-7 * max_diag {
            let x = chol.solve(&nalgebra::DVector::from_column_slice(b));
            return Ok(x.iter().copied().collect());
        }
    }
    pinv_default(m)?.apply(b)
}
