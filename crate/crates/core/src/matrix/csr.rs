use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square sparse matrix in compressed sparse row form.
///
/// Column indices are sorted and unique within each row and every stored
/// value is finite. The matrix is immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    /// Columns inside a row may arrive unsorted; duplicates are rejected.
    pub fn new(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidStructure("order must be positive".into()));
        }
        if row_ptr.len() != n + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidStructure(
                "row_ptr must start at 0 and be nondecreasing".into(),
            ));
        }
        let nnz = row_ptr[n];
        if col_idx.len() != nnz || values.len() != nnz {
            return Err(Error::InvalidStructure(format!(
                "row_ptr declares {nnz} entries but col_idx/values have {}/{}",
                col_idx.len(),
                values.len()
            )));
        }
        if let Some(&c) = col_idx.iter().find(|&&c| c >= n) {
            return Err(Error::InvalidStructure(format!("column index {c} out of range")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidStructure("non-finite value".into()));
        }
        let mut m = CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        };
        m.sort_rows()?;
        Ok(m)
    }

    /// Builds a matrix from `(row, col, value)` triplets; repeated positions are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidStructure("order must be positive".into()));
        }
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= n || c >= n {
                return Err(Error::InvalidStructure(format!("entry ({r}, {c}) outside order {n}")));
            }
        }
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("non-empty") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(n, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n]).expect("identity is valid")
    }

    pub fn from_diagonal(diag: &[T]) -> Result<Self> {
        let n = diag.len();
        Self::new(n, (0..=n).collect(), (0..n).collect(), diag.to_vec())
    }

    /// Sparse copy of a dense row-major matrix, dropping exact zeros.
    pub fn from_dense_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut trip = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &trip)
    }

    fn sort_rows(&mut self) -> Result<()> {
        for i in 0..self.n {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let sorted = self.col_idx[lo..hi].windows(2).all(|w| w[0] < w[1]);
            if sorted {
                continue;
            }
            let mut pairs: Vec<(usize, T)> = (lo..hi).map(|k| (self.col_idx[k], self.values[k])).collect();
            pairs.sort_by_key(|p| p.0);
            if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidStructure(format!("duplicate column in row {i}")));
            }
            for (k, (c, v)) in (lo..hi).zip(pairs) {
                self.col_idx[k] = c;
                self.values[k] = v;
            }
        }
        Ok(())
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok((0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect())
    }

    /// `y = Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut y = vec![T::zero(); self.n];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (j, i, v)));
        }
        Self::from_triplets(self.n, &trip).expect("transpose of a valid matrix")
    }

    /// Exact structural and numerical symmetry check.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| self.get(j, i) == v)
        })
    }

    /// Lower and upper bandwidth.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            let (cols, _) = self.row(i);
            if let (Some(&first), Some(&last)) = (cols.first(), cols.last()) {
                kl = kl.max(i.saturating_sub(first));
                ku = ku.max(last.saturating_sub(i));
            }
        }
        (kl, ku)
    }

    /// Euclidean norm of each row.
    pub fn row_norms(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).1.iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect()
    }

    /// Maximum absolute row sum and maximum absolute column sum.
    pub fn inf_and_one_norms(&self) -> (T, T) {
        let mut col_sums = vec![T::zero(); self.n];
        let mut inf = T::zero();
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut s = T::zero();
            for (&j, &v) in cols.iter().zip(vals) {
                s += v.abs();
                col_sums[j] += v.abs();
            }
            inf = inf.max(s);
        }
        let one = col_sums.into_iter().fold(T::zero(), T::max);
        (inf, one)
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matvec() {
        let a = CsrMatrix::<f64>::identity(4);
        let x = vec![1.0, -2.0, 3.5, 0.25];
        assert_eq!(a.matvec(&x).unwrap(), x);
    }

    #[test]
    fn diagonal_matvec() {
        let a = CsrMatrix::<f64>::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let a = CsrMatrix::<f64>::identity(3);
        assert!(matches!(
            a.matvec(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn rejects_bad_structure() {
        assert!(CsrMatrix::<f64>::new(2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(CsrMatrix::<f64>::new(2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::<f64>::new(2, vec![0, 1, 2], vec![0, 2], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::<f64>::new(2, vec![0, 2, 2], vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::<f64>::new(1, vec![0, 1], vec![0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let a = CsrMatrix::new(2, vec![0, 2, 3], vec![1, 0, 1], vec![5.0, 1.0, 2.0]).unwrap();
        assert_eq!(a.row(0), (&[0usize, 1][..], &[1.0, 5.0][..]));
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::<f64>::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn transpose_product() {
        let a = CsrMatrix::<f64>::from_triplets(3, &[(0, 1, 2.0), (2, 0, -1.0), (1, 1, 3.0)]).unwrap();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(a.matvec_transpose(&x).unwrap(), a.transpose().matvec(&x).unwrap());
        assert!(!a.is_symmetric());
        assert_eq!(a.bandwidths(), (2, 1));
    }
}
