//! Dense row-major matrices with the small set of factorizations the method
//! needs: LU solves, one-sided Jacobi SVD, pseudo-inverse, Kronecker products,
//! the Woodbury-accelerated inverse application and the paired Sylvester solve.
//!
//! Everything here operates at desk scale (tens of rows); no attempt is made
//! at blocking or sparsity.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense matrix, entries stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::one(); rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "data length must match shape");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[T]) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "shape mismatch in elementwise op"
        );
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "inner dimensions must agree: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn frob_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    /// Column-major stacking vec(M) as an (rows*cols) x 1 matrix.
    pub fn vec_col(&self) -> Self {
        let mut data = Vec::with_capacity(self.rows * self.cols);
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self[(i, j)]);
            }
        }
        Matrix {
            rows: self.rows * self.cols,
            cols: 1,
            data,
        }
    }

    /// Inverse of [`vec_col`]: reshape a stacked column back into rows x cols.
    pub fn unvec_col(v: &Self, rows: usize, cols: usize) -> Self {
        assert_eq!(v.rows * v.cols, rows * cols, "vec length mismatch");
        assert_eq!(v.cols, 1, "expected a column vector");
        Self::from_fn(rows, cols, |i, j| v[(j * rows + i, 0)])
    }

    /// Kronecker product A (x) B.
    pub fn kron(&self, other: &Self) -> Self {
        let (ar, ac) = (self.rows, self.cols);
        let (br, bc) = (other.rows, other.cols);
        Self::from_fn(ar * br, ac * bc, |i, j| {
            self[(i / br, j / bc)] * other[(i % br, j % bc)]
        })
    }

    /// Solves A X = B by LU with partial pivoting. A must be square.
    pub fn lu_solve(a: &Self, b: &Self, context: &str) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NonSquare {
                rows: a.rows,
                cols: a.cols,
            });
        }
        assert_eq!(a.rows, b.rows, "rhs row count must match");
        let n = a.rows;
        let mut lu = a.clone();
        let mut x = b.clone();
        let scale = a.max_abs().max(T::one());
        let tiny = scale * T::epsilon() * T::c(n as f64);
        for k in 0..n {
            // pivot
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny {
                return Err(Error::Singular(context.to_string()));
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                for j in 0..x.cols {
                    let t = x[(k, j)];
                    x[(k, j)] = x[(p, j)];
                    x[(p, j)] = t;
                }
            }
            let piv = lu[(k, k)];
            for i in (k + 1)..n {
                let m = lu[(i, k)] / piv;
                lu[(i, k)] = m;
                for j in (k + 1)..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - m * v;
                }
                for j in 0..x.cols {
                    let v = x[(k, j)];
                    x[(i, j)] = x[(i, j)] - m * v;
                }
            }
        }
        // back substitution
        for j in 0..x.cols {
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in (i + 1)..n {
                    s = s - lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / lu[(i, i)];
            }
        }
        Ok(x)
    }

    /// Thin SVD, A = U diag(sigma) V'. Singular values descending.
    ///
    /// One-sided Jacobi on the taller orientation; accurate enough at desk
    /// scale for the 1e-10 tolerances used throughout.
    pub fn svd(&self) -> Svd<T> {
        if self.rows >= self.cols {
            svd_tall(self)
        } else {
            let s = svd_tall(&self.transpose());
            Svd {
                u: s.v,
                sigma: s.sigma,
                v: s.u,
            }
        }
    }

    pub fn singular_values(&self) -> Vec<T> {
        self.svd().sigma
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> Result<T> {
        self.check_finite("spectral_norm input")?;
        if self.rows == 0 || self.cols == 0 {
            return Ok(T::zero());
        }
        Ok(self.singular_values()[0])
    }

    /// sigma_max / sigma_min for a square matrix; `Singular` when sigma_min
    /// falls below the machine-scaled threshold.
    pub fn condition_number(&self) -> Result<Cond<T>> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        self.check_finite("condition_number input")?;
        let s = self.singular_values();
        let smax = s[0];
        let smin = s[s.len() - 1];
        if smin < T::singular_threshold() * smax || smax == T::zero() {
            Ok(Cond::Singular)
        } else {
            Ok(Cond::Finite(smax / smin))
        }
    }

    /// Moore-Penrose pseudo-inverse via the SVD, with a relative rank cutoff.
    pub fn pinv(&self) -> Self {
        if self.rows == 0 || self.cols == 0 {
            return Self::zeros(self.cols, self.rows);
        }
        let Svd { u, sigma, v } = self.svd();
        let smax = sigma[0];
        let cut = smax * T::singular_threshold();
        let k = sigma.len();
        let mut sinv = Self::zeros(k, k);
        for i in 0..k {
            if sigma[i] > cut {
                sinv[(i, i)] = T::one() / sigma[i];
            }
        }
        v.matmul(&sinv).matmul(&u.transpose())
    }

    /// Numerical rank with a relative threshold.
    pub fn rank(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        let s = self.singular_values();
        let cut = s[0] * T::singular_threshold();
        s.iter().filter(|&&x| x > cut).count()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Thin SVD factors.
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v: Matrix<T>,
}

/// Condition number outcome: finite ratio or a declared singular matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cond<T> {
    Finite(T),
    Singular,
}

impl<T: Scalar> Cond<T> {
    pub fn value(self) -> T {
        match self {
            Cond::Finite(v) => v,
            Cond::Singular => T::infinity(),
        }
    }

    pub fn is_singular(self) -> bool {
        matches!(self, Cond::Singular)
    }
}

fn svd_tall<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let tol = T::epsilon() * T::c(16.0);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = T::zero();
                let mut aqq = T::zero();
                let mut apq = T::zero();
                for i in 0..m {
                    let xp = w[(i, p)];
                    let xq = w[(i, q)];
                    app += xp * xp;
                    aqq += xq * xq;
                    apq += xp * xq;
                }
                let denom = (app * aqq).sqrt();
                if denom == T::zero() || apq.abs() <= tol * denom {
                    continue;
                }
                off = off.max(apq.abs() / denom);
                let zeta = (aqq - app) / (T::c(2.0) * apq);
                let t = if zeta >= T::zero() {
                    T::one() / (zeta + (T::one() + zeta * zeta).sqrt())
                } else {
                    -T::one() / (-zeta + (T::one() + zeta * zeta).sqrt())
                };
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                for i in 0..m {
                    let xp = w[(i, p)];
                    let xq = w[(i, q)];
                    w[(i, p)] = cs * xp - sn * xq;
                    w[(i, q)] = sn * xp + cs * xq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = cs * vp - sn * vq;
                    v[(i, q)] = sn * vp + cs * vq;
                }
            }
        }
        if off <= tol {
            break;
        }
    }
    // column norms are the singular values
    let mut order: Vec<usize> = (0..n).collect();
    let mut sig: Vec<T> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<T>().sqrt())
        .collect();
    order.sort_by(|&a, &b| sig[b].partial_cmp(&sig[a]).unwrap());
    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = sig[j];
        sigma.push(s);
        if s > T::zero() {
            for i in 0..m {
                u[(i, k)] = w[(i, j)] / s;
            }
        }
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
    }
    sig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Svd { u, sigma, v: vs }
}

/// Applies (I + s X X')^-1 to B through the k x k inner system
/// (I + s X'X), never forming the n x n inverse.
pub fn woodbury_apply<T: Scalar>(x: &Matrix<T>, s: T, b: &Matrix<T>) -> Result<Matrix<T>> {
    if x.rows() != b.rows() {
        return Err(Error::ShapeMismatch(format!(
            "woodbury_apply: X has {} rows, B has {}",
            x.rows(),
            b.rows()
        )));
    }
    if s < T::zero() {
        return Err(Error::InvalidConfig {
            field: "s".into(),
            message: "woodbury scale must be nonnegative".into(),
        });
    }
    if s == T::zero() || x.cols() == 0 {
        return Ok(b.clone());
    }
    let xt = x.transpose();
    let inner = Matrix::identity(x.cols()).add(&xt.matmul(x).scale(s));
    let xtb = xt.matmul(b);
    let solved = Matrix::lu_solve(&inner, &xtb, "woodbury inner matrix (I + s X'X)")?;
    // (I + sXX')^-1 B = B - s X (I + s X'X)^-1 X'B
    Ok(b.sub(&x.matmul(&solved).scale(s)))
}

/// Closed-form solve of the coupled pair
///   X1 = A X2 + B1,
///   X2 = -X1 cc' + B2,
/// through the Sylvester-type identity X = D - (I + c'c A)^-1 A D cc'
/// with D1 = B1 + A B2 and D2 = B2 - B1 cc'.
pub fn sylvester_pair_solve<T: Scalar>(
    a: &Matrix<T>,
    c: &Matrix<T>,
    b1: &Matrix<T>,
    b2: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    assert_eq!(c.cols(), 1, "c must be a column vector");
    let n = a.rows();
    assert!(a.is_square(), "A must be square");
    assert_eq!(b1.rows(), n);
    assert_eq!(b2.rows(), n);
    assert_eq!(b1.cols(), c.rows());
    assert_eq!(b2.cols(), c.rows());
    let cct = c.matmul(&c.transpose());
    let ctc = c.transpose().matmul(c)[(0, 0)];
    let d1 = b1.add(&a.matmul(b2));
    let d2 = b2.sub(&b1.matmul(&cct));
    let s = Matrix::identity(n).add(&a.scale(ctc));
    let solve_one = |d: &Matrix<T>| -> Result<Matrix<T>> {
        let ad = a.matmul(d);
        let inv_ad = Matrix::lu_solve(&s, &ad, "(I + c'c A)")?;
        Ok(d.sub(&inv_ad.matmul(&cct)))
    };
    Ok((solve_one(&d1)?, solve_one(&d2)?))
}
