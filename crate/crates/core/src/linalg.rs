//! Dense linear algebra for symmetric matrices.
//!
//! Everything downstream works with the modified Cholesky decomposition
//! `A = L diag(D)^-1 L^T`, where `L` is unit lower-triangular and `D` is a
//! positive vector. It is the LDL^T factorization with `D` holding the
//! reciprocals of the LDL^T pivots.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::graph::Dag;

/// Pivots at or below this value are treated as a loss of positive definiteness.
pub const DEFAULT_PIVOT_FLOOR: f64 = 1e-12;

/// Dense row-major matrix.
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
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(p: usize) -> Self {
        let mut m = Self::zeros(p, p);
        for i in 0..p {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged matrix literal");
            data.extend_from_slice(row.as_ref());
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
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

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `(1/n) Y^T Y` for a data matrix with observations in rows.
    pub fn gram_over_n(&self) -> SymMatrix {
        let (n, p) = (self.rows, self.cols);
        let mut s = Matrix::zeros(p, p);
        for r in 0..n {
            let row = self.row(r);
            for i in 0..p {
                let yi = row[i];
                if yi == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    s.data[i * p + j] += yi * row[j];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for i in 0..p {
            for j in 0..=i {
                let v = s.data[i * p + j] * inv_n;
                s.data[i * p + j] = v;
                s.data[j * p + i] = v;
            }
        }
        SymMatrix(s)
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column `j` of the output is column `idx[j]` of `self`.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Square symmetric matrix with exactly mirrored storage.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl SymMatrix {
    /// Validates symmetry to `tol` (relative to the largest entry) and then
    /// mirrors the lower triangle so the stored matrix is exactly symmetric.
    pub fn new(m: Matrix, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.rows,
                found: m.cols,
            });
        }
        if m.rows == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let scale = m.max_abs().max(1.0);
        let p = m.rows;
        let mut m = m;
        for i in 0..p {
            for j in 0..i {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > tol * scale {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        gap,
                    });
                }
                let v = m[(i, j)];
                m[(j, i)] = v;
            }
        }
        Ok(SymMatrix(m))
    }

    /// Symmetrizes as `(M + M^T) / 2`.
    pub fn symmetrize(m: &Matrix) -> Self {
        assert!(m.is_square() && m.rows > 0);
        SymMatrix(Matrix::from_fn(m.rows, m.cols, |i, j| {
            if i == j {
                m[(i, i)]
            } else {
                0.5 * (m[(i, j)] + m[(j, i)])
            }
        }))
    }

    pub fn identity(p: usize) -> Self {
        assert!(p > 0);
        SymMatrix(Matrix::identity(p))
    }

    pub fn diag(d: &[f64]) -> Self {
        assert!(!d.is_empty());
        SymMatrix(Matrix::diag(d))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows), 0.0)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &SymMatrix, s: f64) -> Result<SymMatrix> {
        if self.p() != other.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: other.p(),
            });
        }
        let data = self
            .0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| a + s * b)
            .collect();
        Ok(SymMatrix(Matrix {
            rows: self.p(),
            cols: self.p(),
            data,
        }))
    }

    pub fn add_ridge(&self, ridge: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.rows {
            m[(i, i)] += ridge;
        }
        SymMatrix(m)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.scale(s))
    }

    /// Simultaneous row/column reordering: `out[j][k] = self[idx[j]][idx[k]]`.
    pub fn reorder(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix(Matrix::from_fn(idx.len(), idx.len(), |j, k| {
            self.0[(idx[j], idx[k])]
        }))
    }

    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        // tr(AB) = sum_ij A_ij B_ji, and B is symmetric
        self.0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| a * b)
            .sum()
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Cholesky parameter `(L, D)` with `Omega = L diag(D)^-1 L^T`.
///
/// `l` is unit lower-triangular when produced by [`mcd`] or by the DAG-Wishart
/// estimators. After conjugation by a permutation it is only guaranteed to
/// carry a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyParam {
    pub l: Matrix,
    pub d: Vec<f64>,
}

impl CholeskyParam {
    pub fn p(&self) -> usize {
        self.d.len()
    }

    /// `L diag(D)^-1 L^T`.
    pub fn precision(&self) -> SymMatrix {
        compose(&self.l, &self.d)
    }

    pub fn is_unit_lower_triangular(&self) -> bool {
        let p = self.p();
        (0..p).all(|i| self.l[(i, i)] == 1.0 && (i + 1..p).all(|j| self.l[(i, j)] == 0.0))
    }
}

/// `L diag(D)^-1 L^T` for any square `L`. The result is exactly symmetric.
pub fn compose(l: &Matrix, d: &[f64]) -> SymMatrix {
    let p = d.len();
    assert_eq!(l.rows(), p);
    assert_eq!(l.cols(), p);
    let inv_d: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
    let mut out = Matrix::zeros(p, p);
    for i in 0..p {
        let li = l.row(i);
        for j in 0..=i {
            let lj = l.row(j);
            let mut acc = 0.0;
            for k in 0..p {
                acc += li[k] * inv_d[k] * lj[k];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    SymMatrix(out)
}

/// Unpivoted LDL^T factorization: `A = L diag(pivots) L^T`.
#[derive(Debug, Clone)]
pub(crate) struct Ldlt {
    pub l: Matrix,
    pub pivots: Vec<f64>,
}

impl Ldlt {
    pub fn factor(a: &Matrix, floor: f64, op: &'static str) -> Result<Self> {
        debug_assert!(a.is_square());
        let p = a.rows();
        let mut f = a.clone();
        let mut pivots = vec![0.0; p];
        // right-looking rank-1 updates on the lower triangle
        for j in 0..p {
            let d = f[(j, j)];
            if !(d > floor) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    op,
                    index: j,
                    pivot: d,
                });
            }
            pivots[j] = d;
            for i in j + 1..p {
                f[(i, j)] /= d;
            }
            for i in j + 1..p {
                let lid = f[(i, j)] * d;
                if lid == 0.0 {
                    continue;
                }
                for k in j + 1..=i {
                    let lk = f[(k, j)];
                    f[(i, k)] -= lid * lk;
                }
            }
        }
        for i in 0..p {
            f[(i, i)] = 1.0;
            for j in i + 1..p {
                f[(i, j)] = 0.0;
            }
        }
        Ok(Self { l: f, pivots })
    }

    pub fn logdet(&self) -> f64 {
        self.pivots.iter().map(|d| d.ln()).sum()
    }

    /// Inverse of the unit lower-triangular factor.
    fn l_inverse(&self) -> Matrix {
        let p = self.pivots.len();
        let mut inv = Matrix::identity(p);
        for j in 0..p {
            for i in j + 1..p {
                let mut acc = 0.0;
                for k in j..i {
                    acc += self.l[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -acc;
            }
        }
        inv
    }
}

/// Modified Cholesky decomposition with the default pivot floor.
pub fn mcd(a: &SymMatrix) -> Result<CholeskyParam> {
    mcd_with_floor(a, DEFAULT_PIVOT_FLOOR)
}

pub fn mcd_with_floor(a: &SymMatrix, floor: f64) -> Result<CholeskyParam> {
    let f = Ldlt::factor(a.as_matrix(), floor, "mcd")?;
    Ok(CholeskyParam {
        l: f.l,
        d: f.pivots.iter().map(|x| 1.0 / x).collect(),
    })
}

/// Inverse of a symmetric positive definite matrix via LDL^T.
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let f = Ldlt::factor(a.as_matrix(), DEFAULT_PIVOT_FLOOR, "spd_inverse")?;
    let linv = f.l_inverse();
    // A^-1 = L^-T diag(1/pivots) L^-1
    let p = a.p();
    let mut out = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let mut acc = 0.0;
            for k in i..p {
                acc += linv[(k, i)] * linv[(k, j)] / f.pivots[k];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    Ok(SymMatrix(out))
}

/// Log-determinant as the sum of log LDL^T pivots.
pub fn logdet(a: &SymMatrix) -> Result<f64> {
    Ok(Ldlt::factor(a.as_matrix(), DEFAULT_PIVOT_FLOOR, "logdet")?.logdet())
}

/// Blocks of `A` indexed by the parents of vertex `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentBlocks {
    /// `A[j][i]` for `j` in `pa_i`.
    pub col: Vec<f64>,
    /// `A` restricted to rows and columns in `pa_i`.
    pub block: Matrix,
    /// `[[A_ii, col^T], [col, block]]`.
    pub augmented: Matrix,
}

pub fn parent_blocks(a: &SymMatrix, dag: &Dag, i: usize) -> Result<ParentBlocks> {
    if dag.p() != a.p() {
        return Err(Error::DimensionMismatch {
            expected: a.p(),
            found: dag.p(),
        });
    }
    let pa = dag.parents(i)?;
    let col = pa.iter().map(|&j| a[(j, i)]).collect();
    let block = Matrix::from_fn(pa.len(), pa.len(), |r, c| a[(pa[r], pa[c])]);
    let idx: Vec<usize> = std::iter::once(i).chain(pa.iter().copied()).collect();
    let augmented = Matrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])]);
    Ok(ParentBlocks {
        col,
        block,
        augmented,
    })
}
