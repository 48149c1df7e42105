//! Dense row-major matrices and the symmetric (generalized) eigensolver used by LDA.
//!
//! Everything here is 64-bit. The generalized problem `Sb v = λ (Sw + ridge·I) v` is
//! reduced to a standard symmetric one through a Cholesky factor and then diagonalized
//! with a cyclic Jacobi sweep, which is slow for large `d` but deterministic and exact
//! enough for the scatter matrices we see in practice.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error(
        "within-class scatter plus ridge is not positive definite (pivot {pivot} = {value:e}); \
         increase the ridge"
    )]
    SingularScatter { pivot: usize, value: f64 },
    #[error("ridge must be finite and non-negative, got {0}")]
    InvalidRidge(f64),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Dense real matrix in row-major order.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::Empty);
        }
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(NumericsError::DimensionMismatch(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
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

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest `|a[i][j] - a[j][i]|`; `None` for non-square matrices.
    pub fn asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        Some(worst)
    }

    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        if !self.is_square() {
            return Err(NumericsError::DimensionMismatch(format!(
                "{}x{} matrix is not square",
                self.rows, self.cols
            )));
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let gap = (self[(i, j)] - self[(j, i)]).abs();
                let scale = 1.0_f64.max(self[(i, j)].abs()).max(self[(j, i)].abs());
                if gap > tol * scale {
                    return Err(NumericsError::NotSymmetric { row: i, col: j, gap });
                }
            }
        }
        Ok(())
    }

    /// Adds `s` to every diagonal entry.
    pub fn add_diagonal(&mut self, s: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }

    /// Rank-one update `self += w · x xᵀ`.
    pub fn add_outer(&mut self, x: &[f64], w: f64) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, xr) in x.iter().enumerate() {
            let row = self.row_mut(r);
            for (dst, xc) in row.iter_mut().zip(x) {
                *dst += w * xr * xc;
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(NumericsError::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (p, &aip) in a.row(i).iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (dst, bpj) in out_row.iter_mut().zip(b.row(p)) {
                *dst += aip * bpj;
            }
        }
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor `L` with `m = L Lᵀ`.
///
/// Fails with [`NumericsError::SingularScatter`] when a pivot is not strictly positive.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(NumericsError::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for p in 0..j {
            diag -= l[(j, p)] * l[(j, p)];
        }
        // relative floor so round-off on an exactly singular matrix is not accepted
        let scale = m[(j, j)].abs().max(f64::MIN_POSITIVE);
        if !(diag > 1e-14 * scale) {
            return Err(NumericsError::SingularScatter { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
fn forward_substitute(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[(i, p)] * x[p];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
fn backward_substitute_transposed(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for p in (i + 1)..n {
            s -= l[(p, i)] * x[p];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Result of a symmetric eigendecomposition; eigenvectors are the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi diagonalization of a symmetric matrix.
///
/// Eigenvalues come back in the order the diagonal ends up in (unsorted); columns of
/// `vectors` are orthonormal.
pub fn symmetric_eigen_jacobi(a: &Matrix) -> Result<EigenDecomposition> {
    a.check_symmetric(1e-9)?;
    let n = a.rows;
    let mut m = a.clone();
    // work on the exactly symmetric part
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();
    if total == 0.0 || n == 1 {
        let values = (0..n).map(|i| m[(i, i)]).collect();
        return Ok(EigenDecomposition { values, vectors: v });
    }

    for sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            let values = (0..n).map(|i| m[(i, i)]).collect();
            return Ok(EigenDecomposition { values, vectors: v });
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // after a few sweeps, drop entries that no longer move the diagonal
                let g = 100.0 * apq.abs();
                if sweep > 3 && m[(p, p)].abs() + g == m[(p, p)].abs() && m[(q, q)].abs() + g == m[(q, q)].abs() {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(NumericsError::NoConvergence(JACOBI_MAX_SWEEPS))
}

/// Default ridge for a within-class scatter: `1e-6 · trace(sw) / d`.
pub fn default_ridge(sw: &Matrix) -> f64 {
    1e-6 * sw.trace() / sw.rows() as f64
}

/// Eigenpairs of `(sw + ridge·I)⁻¹ sb`, sorted by eigenvalue descending.
///
/// Eigenvectors are the columns of the returned matrix, scaled to unit Euclidean length
/// with the largest-magnitude component made positive. Equal eigenvalues keep the order
/// in which the Jacobi sweep produced them.
pub fn solve_generalized_symmetric_eig(
    sb: &Matrix,
    sw: &Matrix,
    ridge: f64,
) -> Result<EigenDecomposition> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(NumericsError::InvalidRidge(ridge));
    }
    if sb.shape() != sw.shape() {
        return Err(NumericsError::DimensionMismatch(format!(
            "sb is {}x{}, sw is {}x{}",
            sb.rows, sb.cols, sw.rows, sw.cols
        )));
    }
    sb.check_symmetric(1e-9)?;
    sw.check_symmetric(1e-9)?;
    let n = sb.rows;

    let mut regularized = sw.clone();
    regularized.add_diagonal(ridge);
    let l = cholesky(&regularized)?;

    // C = L⁻¹ sb L⁻ᵀ, built column by column
    let mut half = Matrix::zeros(n, n); // L⁻¹ sb
    for c in 0..n {
        let col = forward_substitute(&l, &sb.column(c));
        for r in 0..n {
            half[(r, c)] = col[r];
        }
    }
    let mut reduced = Matrix::zeros(n, n);
    for r in 0..n {
        // row r of (L⁻¹ sb) L⁻ᵀ = (L⁻¹ (row r of L⁻¹ sb)ᵀ)ᵀ
        let row = forward_substitute(&l, half.row(r));
        reduced.row_mut(r).copy_from_slice(&row);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (reduced[(i, j)] + reduced[(j, i)]);
            reduced[(i, j)] = avg;
            reduced[(j, i)] = avg;
        }
    }

    let standard = symmetric_eigen_jacobi(&reduced)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        standard.values[b]
            .partial_cmp(&standard.values[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });

    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(standard.values[src]);
        let mut x = backward_substitute_transposed(&l, &standard.vectors.column(src));
        let len = norm2(&x);
        let pivot = x
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for v in &mut x {
            *v *= sign / len;
        }
        for r in 0..n {
            vectors[(r, dst)] = x[r];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}
