//! Dense linear algebra for the small matrices of this crate (d ≤ 4).
//!
//! Everything is generic over [`Scalar`] so the geometry layer can run the
//! same factorizations on dual numbers; pivoting and singularity decisions
//! always look at the innermost primal value.

use crate::fields::Scalar;

/// Singularity threshold on pivots / determinants.
pub const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is singular (|pivot| < {SINGULAR_EPS})")]
    Singular,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

pub type MatrixF = Matrix<f64>;

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::constant(0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::constant(1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: S) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, o: &Self) -> Self {
        debug_assert_eq!(self.cols, o.rows);
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..o.cols {
                    out[(i, j)] = out[(i, j)] + a * o[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        debug_assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = S::constant(0.0);
                for j in 0..self.cols {
                    acc = acc + self[(i, j)] * v[j];
                }
                acc
            })
            .collect()
    }

    /// Midpoint of two matrices.
    pub fn average(&self, o: &Self) -> Self {
        self.add(o).scale(S::constant(0.5))
    }

    /// LU factorization with partial pivoting (pivot choice on primal values).
    pub fn lu(&self) -> Result<Lu<S>, LinalgError> {
        assert_eq!(self.rows, self.cols, "LU of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for col in 0..n {
            let mut best = col;
            let mut best_abs = a[col * n + col].value().abs();
            for row in col + 1..n {
                let v = a[row * n + col].value().abs();
                if v > best_abs {
                    best = row;
                    best_abs = v;
                }
            }
            if best_abs < SINGULAR_EPS {
                return Err(LinalgError::Singular);
            }
            if best != col {
                for j in 0..n {
                    a.swap(col * n + j, best * n + j);
                }
                perm.swap(col, best);
                sign = -sign;
            }
            let pivot = a[col * n + col];
            for row in col + 1..n {
                let factor = a[row * n + col] / pivot;
                a[row * n + col] = factor;
                for j in col + 1..n {
                    a[row * n + j] = a[row * n + j] - factor * a[col * n + j];
                }
            }
        }
        Ok(Lu { n, a, perm, sign })
    }

    pub fn det(&self) -> Result<S, LinalgError> {
        match self.lu() {
            Ok(lu) => Ok(lu.det()),
            Err(LinalgError::Singular) => Ok(S::constant(0.0)),
            Err(e) => Err(e),
        }
    }

    pub fn inverse(&self) -> Result<Self, LinalgError> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        let mut col = vec![S::constant(0.0); n];
        for j in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = S::constant(if i == j { 1.0 } else { 0.0 });
            }
            let x = lu.solve(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        Ok(out)
    }

    /// Solve `self * x = b`.
    pub fn solve(&self, b: &[S]) -> Result<Vec<S>, LinalgError> {
        Ok(self.lu()?.solve(b))
    }

    /// Solve `self * X = B` columnwise.
    pub fn solve_matrix(&self, b: &Self) -> Result<Self, LinalgError> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut out = Self::zeros(n, b.cols);
        let mut col = vec![S::constant(0.0); n];
        for j in 0..b.cols {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let x = lu.solve(&col);
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.value().abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.value() * v.value())
            .sum::<f64>()
            .sqrt()
    }
}

impl<S: Scalar> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factors of a square matrix.
pub struct Lu<S> {
    n: usize,
    a: Vec<S>,
    perm: Vec<usize>,
    sign: f64,
}

impl<S: Scalar> Lu<S> {
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.a[i * n + j];
                x[i] = x[i] - l * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.a[i * n + j];
                x[i] = x[i] - u * x[j];
            }
            x[i] = x[i] / self.a[i * n + i];
        }
        x
    }

    pub fn det(&self) -> S {
        let mut d = S::constant(self.sign);
        for i in 0..self.n {
            d = d * self.a[i * self.n + i];
        }
        d
    }
}

impl MatrixF {
    /// Cholesky factorization; fails when the matrix is not (numerically)
    /// symmetric positive definite.
    pub fn cholesky(&self) -> Result<MatrixF, LinalgError> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = MatrixF::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self[(i, j)];
                for k in 0..j {
                    sum -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(LinalgError::NotPositiveDefinite);
                    }
                    l[(i, i)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Ok(l)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations;
    /// returns the eigenvalues and the matrix whose columns are the
    /// corresponding eigenvectors.
    pub fn sym_eigen(&self) -> (Vec<f64>, MatrixF) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut v = MatrixF::identity(n);
        for _sweep in 0..64 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a[(p, q)].abs();
                }
            }
            if off < 1e-14 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (a[(q, q)] - a[(p, p)]) / a[(p, q)];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        ((0..n).map(|i| a[(i, i)]).collect(), v)
    }

    /// Eigenvalues of a symmetric matrix.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        self.sym_eigen().0
    }

    /// Symmetric square root `V diag(√λ) Vᵀ` (negative eigenvalues are
    /// clamped to zero).
    pub fn sym_sqrt(&self) -> MatrixF {
        let n = self.rows;
        let (vals, vecs) = self.sym_eigen();
        let mut scaled = vecs.clone();
        for (j, &l) in vals.iter().enumerate() {
            let r = l.max(0.0).sqrt();
            for i in 0..n {
                scaled[(i, j)] *= r;
            }
        }
        scaled.matmul(&vecs.transpose())
    }

    /// Spectral norm via the symmetric eigenproblem of `AᵀA`.
    pub fn op_norm(&self) -> f64 {
        let ata = self.transpose().matmul(self);
        ata.sym_eigenvalues()
            .into_iter()
            .fold(0.0f64, f64::max)
            .max(0.0)
            .sqrt()
    }
}

/// Dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
