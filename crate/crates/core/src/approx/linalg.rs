//! Small dense kernels for the subspace iteration: Jacobi eigensolver and
//! Gram–Schmidt orthonormalization.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::{axpy, dot, norm2, Scalar};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues ascending and the matching orthonormal eigenvectors
/// as columns.
pub fn symmetric_eigen<T: Scalar>(a: &DenseMatrix<T>) -> Result<(Vec<T>, DenseMatrix<T>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.cols(),
        });
    }
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for j in 0..n {
            for i in 0..n {
                let x = w[(i, j)] * w[(i, j)];
                if i == j {
                    diag += x;
                } else {
                    off += x;
                }
            }
        }
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
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
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| w[(x, x)].partial_cmp(&w[(y, y)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| w[(k, k)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((values, vectors))
}

/// Orthonormalizes the columns in place (classical Gram–Schmidt, applied
/// twice). Columns that collapse are replaced via `refill`.
pub(crate) fn orthonormalize<T: Scalar>(q: &mut DenseMatrix<T>, mut refill: impl FnMut(&mut [T])) {
    let p = q.cols();
    for j in 0..p {
        for attempt in 0..3 {
            let original = norm2(q.column(j));
            for _pass in 0..2 {
                let mut coeffs = vec![T::zero(); j];
                for (k, c) in coeffs.iter_mut().enumerate() {
                    *c = dot(q.column(k), q.column(j));
                }
                for (k, &c) in coeffs.iter().enumerate() {
                    let qk = q.column(k).to_vec();
                    axpy(-c, &qk, q.column_mut(j));
                }
            }
            let nrm = norm2(q.column(j));
            if nrm > T::of(1e-10) * original && nrm > T::min_positive_value() {
                for x in q.column_mut(j) {
                    *x /= nrm;
                }
                break;
            }
            if attempt == 2 {
                // Give up on keeping full rank; leave a zero column.
                q.column_mut(j).iter_mut().for_each(|x| *x = T::zero());
            } else {
                refill(q.column_mut(j));
            }
        }
    }
}
