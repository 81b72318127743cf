//! Dense column-major matrices and the exact-inverse oracle.
//!
//! The oracle factors `A` with partial-pivoting LU and solves for every
//! column of the identity. It is O(n³) and guarded by a size cap; it shares
//! no code with the sparse solvers it is used to check.

use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default largest order accepted by [`dense_inverse_diagonal`].
pub const DEFAULT_ORACLE_CAP: usize = 5000;

const PANEL: usize = 48;
const RHS_BLOCK: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[j * rows + i] = f(i, j);
            }
        }
        m
    }

    pub fn from_sparse(a: &CsrMatrix<T>) -> Self {
        let n = a.order();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut y = vec![T::zero(); self.rows];
        for (j, &xj) in x.iter().enumerate() {
            crate::scalar::axpy(xj, self.column(j), &mut y);
        }
        Ok(y)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for p in 0..self.cols {
                let b = other[(p, j)];
                if b != T::zero() {
                    crate::scalar::axpy(b, &self.data[p * self.rows..(p + 1) * self.rows], dst);
                }
            }
        }
        Ok(out)
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.rows + i]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.rows + i]
    }
}

/// Partial-pivoting LU of a dense square matrix, `P A = L U`, stored in place.
#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    lu: DenseMatrix<T>,
    /// `perm[i]` is the original row that ended up in row `i`.
    perm: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    /// Right-looking LU with column panels of width `PANEL` so the trailing
    /// update streams each panel of `L` many times from cache.
    pub fn factor(mut a: DenseMatrix<T>) -> Result<Self> {
        let n = a.rows;
        if n != a.cols {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.cols,
            });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut k0 = 0;
        while k0 < n {
            let k1 = (k0 + PANEL).min(n);
            // Factor the panel columns k0..k1, applying swaps to the whole row.
            for k in k0..k1 {
                let col = a.column(k);
                let (p, pmax) =
                    (k..n)
                        .map(|i| (i, col[i].abs()))
                        .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
                if pmax == T::zero() || !pmax.is_finite() {
                    return Err(Error::Singular(k));
                }
                if p != k {
                    perm.swap(p, k);
                    for j in 0..n {
                        a.data.swap(j * n + p, j * n + k);
                    }
                }
                let pivot = a[(k, k)];
                for v in &mut a.column_mut(k)[k + 1..] {
                    *v /= pivot;
                }
                // Update the rest of the panel only.
                let (left, right) = a.data.split_at_mut((k + 1) * n);
                let lcol = &left[k * n + k + 1..k * n + n];
                for j in k + 1..k1 {
                    let cj = &mut right[(j - k - 1) * n..(j - k) * n];
                    let ukj = cj[k];
                    if ukj != T::zero() {
                        crate::scalar::axpy(-ukj, lcol, &mut cj[k + 1..]);
                    }
                }
            }
            if k1 < n {
                // U12 = L11⁻¹ A12, then A22 -= L21 U12.
                let (left, right) = a.data.split_at_mut(k1 * n);
                for j in 0..n - k1 {
                    let cj = &mut right[j * n..(j + 1) * n];
                    for k in k0..k1 {
                        let ukj = cj[k];
                        if ukj != T::zero() {
                            let lcol = &left[k * n + k + 1..k * n + n];
                            crate::scalar::axpy(-ukj, lcol, &mut cj[k + 1..]);
                        }
                    }
                }
            }
            k0 = k1;
        }
        Ok(DenseLu { lu: a, perm })
    }

    pub fn order(&self) -> usize {
        self.lu.rows
    }

    /// Solves `A X = B` in place for a block of right-hand sides, each a column
    /// of `b` in original row order.
    fn solve_block(&self, b: &mut [Vec<T>]) {
        let n = self.order();
        for x in b.iter_mut() {
            let permuted: Vec<T> = self.perm.iter().map(|&p| x[p]).collect();
            *x = permuted;
        }
        // Forward, unit lower.
        for k in 0..n {
            let lcol = &self.lu.column(k)[k + 1..];
            for x in b.iter_mut() {
                let xk = x[k];
                if xk != T::zero() {
                    crate::scalar::axpy(-xk, lcol, &mut x[k + 1..]);
                }
            }
        }
        // Backward, upper.
        for k in (0..n).rev() {
            let ucol = self.lu.column(k);
            let ukk = ucol[k];
            for x in b.iter_mut() {
                x[k] /= ukk;
                let xk = x[k];
                if xk != T::zero() {
                    crate::scalar::axpy(-xk, &ucol[..k], &mut x[..k]);
                }
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.order() {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: b.len(),
            });
        }
        let mut block = vec![b.to_vec()];
        self.solve_block(&mut block);
        Ok(block.pop().expect("one column"))
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        let n = self.order();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut j0 = 0;
        while j0 < n {
            let j1 = (j0 + RHS_BLOCK).min(n);
            let mut block: Vec<Vec<T>> = (j0..j1)
                .map(|j| {
                    let mut e = vec![T::zero(); n];
                    e[j] = T::one();
                    e
                })
                .collect();
            self.solve_block(&mut block);
            for (j, x) in (j0..j1).zip(block) {
                inv.column_mut(j).copy_from_slice(&x);
            }
            j0 = j1;
        }
        inv
    }
}

/// Exact inverse of a sparse matrix computed densely, kept whole so variance
/// oracles can read off-diagonal entries.
#[derive(Clone, Debug)]
pub struct DenseInverse<T> {
    pub inverse: DenseMatrix<T>,
}

impl<T: Scalar> DenseInverse<T> {
    pub fn compute(a: &CsrMatrix<T>, cap: usize) -> Result<Self> {
        if a.order() > cap {
            return Err(Error::OracleCap { n: a.order(), cap });
        }
        let lu = DenseLu::factor(DenseMatrix::from_sparse(a))?;
        Ok(DenseInverse { inverse: lu.inverse() })
    }

    pub fn diagonal(&self) -> Vec<T> {
        self.inverse.diagonal()
    }

    pub fn trace(&self) -> T {
        self.inverse.trace()
    }
}

/// Exact `diag(A⁻¹)` by dense factorization, for orders up to `cap`.
pub fn dense_inverse_diagonal<T: Scalar>(a: &CsrMatrix<T>, cap: usize) -> Result<Vec<T>> {
    Ok(DenseInverse::compute(a, cap)?.diagonal())
}
