//! Approximations `M ≈ diag(A⁻¹)` and the residual view `E = A⁻¹ − Z⁻¹`.

mod bounds;
mod ilu;
mod linalg;
mod lowrank;

use std::fmt;

pub use bounds::{estimate_spectrum_interval, variational_bounds};
pub use ilu::{diag_inverse_from_ilu, ilu0, ilu_factorize, ilutp, IluFactors, IluKind};
pub use linalg::symmetric_eigen;
pub use lowrank::{diag_from_lowrank, smallest_singular_triplets, LowRankFactors, SvdOptions};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ApproxSource {
    Ilu,
    Svd,
    BoundsLower,
    BoundsUpper,
}

impl fmt::Display for ApproxSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApproxSource::Ilu => "ilu",
            ApproxSource::Svd => "svd",
            ApproxSource::BoundsLower => "bounds-lower",
            ApproxSource::BoundsUpper => "bounds-upper",
        })
    }
}

/// Approximate inverse diagonal together with the permutation that sorts it.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagApprox<T> {
    values: Vec<T>,
    /// `sort_perm[p]` is the original index holding the `p`-th smallest value.
    sort_perm: Vec<usize>,
    /// Inverse of `sort_perm`.
    position: Vec<usize>,
    source: ApproxSource,
}

impl<T: Scalar> DiagApprox<T> {
    /// Sorts `values` ascending; equal values keep their original order.
    pub fn new(values: Vec<T>, source: ApproxSource) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty diagonal approximation".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "diagonal approximation has non-finite entries".into(),
            ));
        }
        let mut sort_perm: Vec<usize> = (0..values.len()).collect();
        sort_perm.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
        let mut position = vec![0; values.len()];
        for (p, &i) in sort_perm.iter().enumerate() {
            position[i] = p;
        }
        Ok(DiagApprox {
            values,
            sort_perm,
            position,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `M` in original order.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn source(&self) -> ApproxSource {
        self.source
    }

    /// The sorting permutation `J`: sorted position → original index.
    pub fn sort_perm(&self) -> &[usize] {
        &self.sort_perm
    }

    /// `J⁻¹`: original index → sorted position.
    pub fn position_of(&self, index: usize) -> usize {
        self.position[index]
    }

    /// `M̂(p) = M(J(p))`.
    pub fn sorted_value(&self, p: usize) -> T {
        self.values[self.sort_perm[p]]
    }

    pub fn sorted(&self) -> Vec<T> {
        self.sort_perm.iter().map(|&i| self.values[i]).collect()
    }

    pub fn trace(&self) -> T {
        self.values.iter().copied().sum()
    }
}

/// An approximate inverse `Z⁻¹` whose action is cheap.
#[derive(Clone, Copy, Debug)]
pub enum ApproxInverse<'a, T> {
    Ilu(&'a IluFactors<T>),
    LowRank(&'a LowRankFactors<T>),
}

impl<T: Scalar> ApproxInverse<'_, T> {
    pub fn order(&self) -> usize {
        match self {
            ApproxInverse::Ilu(f) => f.order(),
            ApproxInverse::LowRank(f) => f.order(),
        }
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        match self {
            ApproxInverse::Ilu(f) => f.solve(x),
            ApproxInverse::LowRank(f) => f.apply(x),
        }
    }

    /// `Z⁻¹ eᵢ`.
    pub fn column(&self, i: usize) -> Result<Vec<T>> {
        let n = self.order();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        match self {
            ApproxInverse::Ilu(f) => {
                let mut e = vec![T::zero(); n];
                e[i] = T::one();
                f.solve(&e)
            }
            ApproxInverse::LowRank(f) => Ok(f.column(i)),
        }
    }

    /// Dense `Z⁻¹`, one column at a time.
    pub fn to_dense(&self) -> Result<DenseMatrix<T>> {
        let n = self.order();
        let mut z = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let c = self.column(j)?;
            z.column_mut(j).copy_from_slice(&c);
        }
        Ok(z)
    }
}

/// `E(:, i) = xᵢ − Z⁻¹ eᵢ` for a solved column `xᵢ = A⁻¹ eᵢ`.
pub fn residual_column<T: Scalar>(approx: ApproxInverse<'_, T>, x_i: &[T], i: usize) -> Result<Vec<T>> {
    let n = approx.order();
    if x_i.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x_i.len(),
        });
    }
    let z = approx.column(i)?;
    Ok(x_i.iter().zip(&z).map(|(&x, &z)| x - z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{CsrMatrix, DenseInverse, DEFAULT_ORACLE_CAP};

    #[test]
    fn sort_is_stable_and_consistent() {
        let d = DiagApprox::new(vec![3.0, 1.0, 2.0, 1.0], ApproxSource::Ilu).unwrap();
        assert_eq!(d.sort_perm(), &[1, 3, 2, 0]);
        assert_eq!(d.sorted(), vec![1.0, 1.0, 2.0, 3.0]);
        for i in 0..4 {
            assert_eq!(d.sort_perm()[d.position_of(i)], i);
        }
    }

    #[test]
    fn residual_column_two_by_two() {
        // Z = diag(A) for A = [[2,1],[1,2]]: E(:,0) = (2/3 - 1/2, -1/3).
        let a = CsrMatrix::<f64>::from_dense_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let z = CsrMatrix::<f64>::from_diagonal(&[2.0, 2.0]).unwrap();
        let f = ilu0(&z).unwrap();
        let inv = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap();
        let x0 = inv.inverse.column(0).to_vec();
        let e = residual_column(ApproxInverse::Ilu(&f), &x0, 0).unwrap();
        assert!((e[0] - (2.0 / 3.0 - 0.5)).abs() < 1e-15);
        assert!((e[1] + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn residual_column_vanishes_for_exact_inverse() {
        let a = CsrMatrix::<f64>::from_dense_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 4.0, 1.0], vec![0.0, 1.0, 4.0]])
            .unwrap();
        let f = ilu0(&a).unwrap();
        let inv = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap();
        for i in 0..3 {
            let e = residual_column(ApproxInverse::Ilu(&f), inv.inverse.column(i), i).unwrap();
            assert!(e.iter().all(|v| v.abs() < 1e-15));
        }
        assert!(matches!(
            residual_column(ApproxInverse::Ilu(&f), inv.inverse.column(0), 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
