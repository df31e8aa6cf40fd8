//! Dense linear algebra for the certificate checks.
//!
//! A small row-major [`Matrix`] plus the handful of spectral routines the
//! certificates need: the induced 2-norm, the largest eigenvalue of a
//! symmetric matrix, strict negative-definiteness and the Schur-complement
//! test for block matrices.
//!
//! Eigenvalues come from the cyclic Jacobi method. Matrices in this toolkit
//! are tiny (a few states), so robustness matters more than speed.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::MatrixError;

/// Relative asymmetry above which symmetrization logs a warning.
pub const ASYMMETRY_TOL: f64 = 1e-12;

/// Dense real matrix stored row-major: `data[i * cols + j] = m[i, j]`.
///
/// Every constructor rejects empty shapes and non-finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::Empty { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(MatrixError::InvalidData {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row vectors; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatrixError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(MatrixError::InvalidData {
                    expected: ncols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(nrows, ncols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
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

    /// Square diagonal matrix. Panics on an empty slice.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn scalar(v: f64) -> Self {
        Self::diag(&[v])
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, MatrixError> {
        if self.cols != rhs.rows {
            return Err(MatrixError::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, MatrixError> {
        if self.cols != v.len() {
            return Err(MatrixError::DimensionMismatch {
                op: "mul_vec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn zip_with(
        &self,
        rhs: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix, MatrixError> {
        if self.shape() != rhs.shape() {
            return Err(MatrixError::DimensionMismatch {
                op,
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix, MatrixError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix, MatrixError> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + c * I`; panics if not square.
    pub fn shift_diag(&self, c: f64) -> Matrix {
        assert!(self.is_square(), "shift_diag on non-square matrix");
        let mut m = self.clone();
        for i in 0..self.rows {
            m[(i, i)] += c;
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// True if every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] == 0.0))
    }

    /// Copies the sub-block `rows r0..r1`, `cols c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Matrix {
        assert!(r0 < r1 && r1 <= self.rows && c0 < c1 && c1 <= self.cols);
        let mut out = Self::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            for j in c0..c1 {
                out[(i - r0, j - c0)] = self[(i, j)];
            }
        }
        out
    }

    /// Assembles `[[a11, a12], [a21, a22]]`.
    pub fn from_blocks(
        a11: &Matrix,
        a12: &Matrix,
        a21: &Matrix,
        a22: &Matrix,
    ) -> Result<Matrix, MatrixError> {
        let conformant = a11.rows == a12.rows
            && a21.rows == a22.rows
            && a11.cols == a21.cols
            && a12.cols == a22.cols;
        if !conformant {
            return Err(MatrixError::DimensionMismatch {
                op: "from_blocks",
                left: a11.shape(),
                right: a22.shape(),
            });
        }
        let (r1, c1) = a11.shape();
        let rows = r1 + a21.rows;
        let cols = c1 + a12.cols;
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = match (i < r1, j < c1) {
                    (true, true) => a11[(i, j)],
                    (true, false) => a12[(i, j - c1)],
                    (false, true) => a21[(i - r1, j)],
                    (false, false) => a22[(i - r1, j - c1)],
                };
            }
        }
        Ok(out)
    }

    /// Stacks `top` above `bottom`.
    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Matrix, MatrixError> {
        if top.cols != bottom.cols {
            return Err(MatrixError::DimensionMismatch {
                op: "vstack",
                left: top.shape(),
                right: bottom.shape(),
            });
        }
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Matrix::new(top.rows + bottom.rows, top.cols, data)
    }

    /// `(m + mᵀ) / 2`, warning when the input is noticeably asymmetric.
    pub fn symmetrized(&self) -> Result<Matrix, MatrixError> {
        self.require_square()?;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut asym: f64 = 0.0;
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let (a, b) = (self[(i, j)], self[(j, i)]);
                asym = asym.max((a - b).abs());
                let avg = 0.5 * (a + b);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        if asym / scale > ASYMMETRY_TOL {
            log::warn!(
                "symmetrizing matrix with relative asymmetry {:.3e}",
                asym / scale
            );
        }
        Ok(out)
    }

    fn require_square(&self) -> Result<(), MatrixError> {
        if self.is_square() {
            Ok(())
        } else {
            Err(MatrixError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    /// LU factorization with partial pivoting; returns (lu, perm, sign).
    fn lu(&self) -> Result<(Matrix, Vec<usize>, f64), MatrixError> {
        self.require_square()?;
        let n = self.rows;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let tiny = f64::EPSILON * self.max_abs().max(f64::MIN_POSITIVE) * n as f64;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= tiny {
                return Err(MatrixError::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= f * v;
                }
            }
        }
        Ok((lu, perm, sign))
    }

    pub fn determinant(&self) -> Result<f64, MatrixError> {
        match self.lu() {
            Ok((lu, _, sign)) => Ok(sign * lu.diagonal().iter().product::<f64>()),
            Err(MatrixError::Singular) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    pub fn inverse(&self) -> Result<Matrix, MatrixError> {
        let (lu, perm, _) = self.lu()?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for col in 0..n {
            // Solve L U x = P e_col.
            let mut x: Vec<f64> = perm
                .iter()
                .map(|&p| if p == col { 1.0 } else { 0.0 })
                .collect();
            for i in 0..n {
                for k in 0..i {
                    x[i] -= lu[(i, k)] * x[k];
                }
            }
            for i in (0..n).rev() {
                for k in (i + 1)..n {
                    x[i] -= lu[(i, k)] * x[k];
                }
                x[i] /= lu[(i, i)];
            }
            for i in 0..n {
                inv[(i, col)] = x[i];
            }
        }
        if inv.data.iter().any(|v| !v.is_finite()) {
            return Err(MatrixError::Singular);
        }
        Ok(inv)
    }

    fn require_finite(&self) -> Result<(), MatrixError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(MatrixError::NonFinite {
                row: pos / self.cols,
                col: pos % self.cols,
            }),
            None => Ok(()),
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.to_rows())
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = MatrixError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// All eigenvalues of the symmetrized input, ascending.
///
/// Cyclic Jacobi sweeps until the off-diagonal mass is negligible relative
/// to the Frobenius norm.
pub fn sym_eigenvalues(s: &Matrix) -> Result<Vec<f64>, MatrixError> {
    s.require_finite()?;
    let mut a = s.symmetrized()?;
    let n = a.rows;
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    let mut eig = a.diagonal();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// Largest eigenvalue of `(s + sᵀ) / 2`.
pub fn sym_eig_max(s: &Matrix) -> Result<f64, MatrixError> {
    Ok(*sym_eigenvalues(s)?.last().expect("nonempty"))
}

/// Singular values, descending.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>, MatrixError> {
    m.require_finite()?;
    let mt = m.transpose();
    // Gram matrix of the smaller side.
    let gram = if m.rows <= m.cols {
        m.matmul(&mt)?
    } else {
        mt.matmul(m)?
    };
    let mut sv: Vec<f64> = sym_eigenvalues(&gram)?
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    sv.reverse();
    Ok(sv)
}

/// Induced 2-norm: the largest singular value.
pub fn spectral_norm(m: &Matrix) -> Result<f64, MatrixError> {
    Ok(singular_values(m)?[0])
}

/// True iff the largest eigenvalue of the symmetrized matrix is below `-margin`.
pub fn is_neg_definite(s: &Matrix, margin: f64) -> Result<bool, MatrixError> {
    Ok(sym_eig_max(s)? < -margin)
}

/// Decides whether `[[a11, a12], [a12ᵀ, a22]] + margin·I ≺ 0` through the
/// Schur complement of the (shifted) `a22` block.
///
/// `a22` itself must be negative definite; anything else is a precondition
/// error rather than a `false` answer.
pub fn schur_nd_check(
    a11: &Matrix,
    a12: &Matrix,
    a22: &Matrix,
    margin: f64,
) -> Result<bool, MatrixError> {
    a11.require_square()?;
    a22.require_square()?;
    if a12.rows != a11.rows || a12.cols != a22.rows {
        return Err(MatrixError::DimensionMismatch {
            op: "schur_nd_check",
            left: a11.shape(),
            right: a12.shape(),
        });
    }
    if !is_neg_definite(a22, 0.0)? {
        return Err(MatrixError::Precondition(
            "lower-right block must be negative definite".into(),
        ));
    }
    let d = a22.symmetrized()?.shift_diag(margin);
    if !is_neg_definite(&d, 0.0)? {
        return Ok(false);
    }
    let d_inv = d.inverse()?;
    let schur = a11
        .symmetrized()?
        .shift_diag(margin)
        .sub(&a12.matmul(&d_inv)?.matmul(&a12.transpose())?)?;
    is_neg_definite(&schur, 0.0)
}
