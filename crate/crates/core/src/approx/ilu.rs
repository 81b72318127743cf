//! Incomplete LU: ILU(0) on the pattern of `A`, and a threshold variant with
//! column pivoting (`A·Q ≈ L·U`).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{ApproxSource, DiagApprox};
use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IluKind {
    /// No fill beyond the pattern of `A`, no pivoting.
    Zero,
    /// Threshold dropping with column pivoting.
    Threshold,
}

/// Factors with `A·Q ≈ L·U`. `L` is unit lower triangular (ones stored),
/// `U` upper triangular; both are indexed by pivot position.
#[derive(Clone, Debug)]
pub struct IluFactors<T> {
    l: CsrMatrix<T>,
    u: CsrMatrix<T>,
    u_diag: Vec<T>,
    /// `perm[p]` is the original column eliminated at position `p`.
    perm: Vec<usize>,
    iperm: Vec<usize>,
    droptol: T,
    kind: IluKind,
}

impl<T: Scalar> IluFactors<T> {
    fn assemble(
        n: usize,
        l_rows: Vec<Vec<(usize, T)>>,
        u_rows: Vec<Vec<(usize, T)>>,
        perm: Vec<usize>,
        droptol: T,
        kind: IluKind,
    ) -> Result<Self> {
        let mut iperm = vec![0; n];
        for (p, &c) in perm.iter().enumerate() {
            iperm[c] = p;
        }
        let build = |rows: Vec<Vec<(usize, T)>>| -> Result<CsrMatrix<T>> {
            let mut row_ptr = Vec::with_capacity(n + 1);
            let mut col_idx = Vec::new();
            let mut values = Vec::new();
            row_ptr.push(0);
            for row in rows {
                for (c, v) in row {
                    col_idx.push(c);
                    values.push(v);
                }
                row_ptr.push(col_idx.len());
            }
            CsrMatrix::new(n, row_ptr, col_idx, values)
        };
        let l = build(l_rows)?;
        let u = build(u_rows)?;
        let u_diag: Vec<T> = (0..n).map(|i| u.get(i, i)).collect();
        if let Some(i) = u_diag.iter().position(|d| *d == T::zero()) {
            return Err(Error::Singular(i));
        }
        Ok(IluFactors {
            l,
            u,
            u_diag,
            perm,
            iperm,
            droptol,
            kind,
        })
    }

    pub fn order(&self) -> usize {
        self.perm.len()
    }

    pub fn l(&self) -> &CsrMatrix<T> {
        &self.l
    }

    pub fn u(&self) -> &CsrMatrix<T> {
        &self.u
    }

    /// Column permutation `Q` as position → original column.
    pub fn col_perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn droptol(&self) -> T {
        self.droptol
    }

    pub fn kind(&self) -> IluKind {
        self.kind
    }

    fn forward(&self, y: &mut [T], from: usize) {
        for i in from..y.len() {
            let (cols, vals) = self.l.row(i);
            let mut s = y[i];
            for (&k, &v) in cols.iter().zip(vals) {
                if k < i {
                    s -= v * y[k];
                }
            }
            y[i] = s;
        }
    }

    fn backward(&self, y: &mut [T], down_to: usize) {
        for i in (down_to..y.len()).rev() {
            let (cols, vals) = self.u.row(i);
            let mut s = y[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j > i {
                    s -= v * y[j];
                }
            }
            y[i] = s / self.u_diag[i];
        }
    }

    /// `Z⁻¹ b = Q·U⁻¹·L⁻¹·b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.order();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut y = b.to_vec();
        self.forward(&mut y, 0);
        self.backward(&mut y, 0);
        let mut x = vec![T::zero(); n];
        for (p, &c) in self.perm.iter().enumerate() {
            x[c] = y[p];
        }
        Ok(x)
    }

    /// `Z⁻ᵀ b = L⁻ᵀ·U⁻ᵀ·Qᵀ·b`.
    pub fn solve_transpose(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.order();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut y: Vec<T> = self.perm.iter().map(|&c| b[c]).collect();
        for i in 0..n {
            y[i] /= self.u_diag[i];
            let yi = y[i];
            let (cols, vals) = self.u.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j > i {
                    y[j] -= v * yi;
                }
            }
        }
        for i in (0..n).rev() {
            let yi = y[i];
            let (cols, vals) = self.l.row(i);
            for (&k, &v) in cols.iter().zip(vals) {
                if k < i {
                    y[k] -= v * yi;
                }
            }
        }
        Ok(y)
    }

    /// `diag(Z⁻¹)`, one pair of truncated triangular solves per index.
    pub fn inverse_diagonal(&self) -> Vec<T> {
        let n = self.order();
        let mut y = vec![T::zero(); n];
        let mut out = vec![T::zero(); n];
        for (i, o) in out.iter_mut().enumerate() {
            // L⁻¹eᵢ vanishes above row i; only positions ≥ iperm[i] of the
            // backward sweep feed entry i of the result.
            y.iter_mut().for_each(|v| *v = T::zero());
            y[i] = T::one();
            self.forward(&mut y, i);
            let p = self.iperm[i];
            self.backward(&mut y, p);
            *o = y[p];
        }
        out
    }
}

fn diagonal_positions<T: Scalar>(a: &CsrMatrix<T>) -> Result<Vec<usize>> {
    (0..a.order())
        .map(|i| {
            let (start, end) = (a.row_ptr()[i], a.row_ptr()[i + 1]);
            a.col_idx()[start..end]
                .binary_search(&i)
                .map(|off| start + off)
                .map_err(|_| Error::Singular(i))
        })
        .collect()
}

/// ILU(0): elimination restricted to the sparsity pattern of `a`.
pub fn ilu0<T: Scalar>(a: &CsrMatrix<T>) -> Result<IluFactors<T>> {
    let n = a.order();
    let row_ptr = a.row_ptr();
    let cols = a.col_idx();
    let diag = diagonal_positions(a)?;
    let mut vals = a.values().to_vec();
    let mut marker = vec![usize::MAX; n];
    for i in 0..n {
        let (start, end) = (row_ptr[i], row_ptr[i + 1]);
        for p in start..end {
            marker[cols[p]] = p;
        }
        for p in start..end {
            let k = cols[p];
            if k >= i {
                break;
            }
            let pivot = vals[diag[k]];
            if pivot == T::zero() {
                return Err(Error::Singular(k));
            }
            let lik = vals[p] / pivot;
            vals[p] = lik;
            for q in diag[k] + 1..row_ptr[k + 1] {
                let m = marker[cols[q]];
                if m != usize::MAX {
                    let u = vals[q];
                    vals[m] -= lik * u;
                }
            }
        }
        for p in start..end {
            marker[cols[p]] = usize::MAX;
        }
        if vals[diag[i]] == T::zero() {
            return Err(Error::Singular(i));
        }
    }
    let mut l_rows = Vec::with_capacity(n);
    let mut u_rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut l = Vec::new();
        let mut u = Vec::new();
        for p in row_ptr[i]..row_ptr[i + 1] {
            if cols[p] < i {
                l.push((cols[p], vals[p]));
            } else {
                u.push((cols[p], vals[p]));
            }
        }
        l.push((i, T::one()));
        l_rows.push(l);
        u_rows.push(u);
    }
    IluFactors::assemble(n, l_rows, u_rows, (0..n).collect(), T::zero(), IluKind::Zero)
}

/// Row-wise threshold ILU with column pivoting.
///
/// Entries smaller than `droptol·‖A(i,:)‖₂` are dropped from row `i` of both
/// factors (the pivot is always kept). The diagonal candidate is replaced by
/// the largest entry of the row when it falls below `pivot_threshold` times
/// that entry; `pivot_threshold = 0` disables pivoting.
pub fn ilutp<T: Scalar>(a: &CsrMatrix<T>, droptol: T, pivot_threshold: T) -> Result<IluFactors<T>> {
    if !droptol.is_finite() || droptol < T::zero() {
        return Err(Error::InvalidArgument(format!(
            "droptol must be a nonnegative number, got {droptol}"
        )));
    }
    if !(pivot_threshold >= T::zero() && pivot_threshold <= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "pivot threshold must lie in [0, 1], got {pivot_threshold}"
        )));
    }
    let n = a.order();
    let norms = a.row_norms();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut iperm: Vec<usize> = (0..n).collect();
    // U rows keep original column ids until positions are final.
    let mut u_rows: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
    let mut u_diag: Vec<T> = Vec::with_capacity(n);
    let mut l_rows: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);

    let mut w = vec![T::zero(); n];
    let mut in_row = vec![false; n];
    let mut nz: Vec<usize> = Vec::new();
    let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

    for i in 0..n {
        let tau = droptol * norms[i];
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            w[c] = v;
            in_row[c] = true;
            nz.push(c);
            if iperm[c] < i {
                heap.push(Reverse(iperm[c]));
            }
        }
        let mut l_row = Vec::new();
        while let Some(Reverse(k)) = heap.pop() {
            let c = perm[k];
            let v = w[c];
            w[c] = T::zero();
            if v == T::zero() {
                continue;
            }
            let lik = v / u_diag[k];
            if lik.abs() < tau {
                continue;
            }
            l_row.push((k, lik));
            for &(c2, u) in &u_rows[k] {
                if !in_row[c2] {
                    in_row[c2] = true;
                    nz.push(c2);
                    if iperm[c2] < i {
                        heap.push(Reverse(iperm[c2]));
                    }
                }
                w[c2] -= lik * u;
            }
        }

        let mut best: Option<(usize, T)> = None;
        for &c in &nz {
            if iperm[c] >= i && w[c] != T::zero() {
                let mag = w[c].abs();
                if best.is_none_or(|(_, m)| mag > m) {
                    best = Some((c, mag));
                }
            }
        }
        let Some((cmax, vmax)) = best else {
            return Err(Error::Singular(i));
        };
        if w[perm[i]].abs() < pivot_threshold * vmax {
            let q = iperm[cmax];
            perm.swap(i, q);
            iperm[perm[i]] = i;
            iperm[perm[q]] = q;
        }
        let pc = perm[i];
        let mut u_row = Vec::new();
        for &c in &nz {
            if c != pc && iperm[c] > i && w[c] != T::zero() && w[c].abs() >= tau {
                u_row.push((c, w[c]));
            }
        }
        u_diag.push(w[pc]);
        u_rows.push(u_row);
        l_rows.push(l_row);

        for &c in &nz {
            w[c] = T::zero();
            in_row[c] = false;
        }
        nz.clear();
    }

    let mut l_final = Vec::with_capacity(n);
    for (i, mut row) in l_rows.into_iter().enumerate() {
        row.push((i, T::one()));
        l_final.push(row);
    }
    let mut u_final = Vec::with_capacity(n);
    for (i, row) in u_rows.into_iter().enumerate() {
        let mut r: Vec<(usize, T)> = row.into_iter().map(|(c, v)| (iperm[c], v)).collect();
        r.push((i, u_diag[i]));
        u_final.push(r);
    }
    IluFactors::assemble(n, l_final, u_final, perm, droptol, IluKind::Threshold)
}

/// The threshold factorization with the usual full pivot threshold of 1.
pub fn ilu_factorize<T: Scalar>(a: &CsrMatrix<T>, droptol: T) -> Result<IluFactors<T>> {
    ilutp(a, droptol, T::one())
}

pub fn diag_inverse_from_ilu<T: Scalar>(f: &IluFactors<T>) -> Result<DiagApprox<T>> {
    DiagApprox::new(f.inverse_diagonal(), ApproxSource::Ilu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{dense_inverse_diagonal, gen_poisson2d, DenseMatrix, DEFAULT_ORACLE_CAP};

    fn product(f: &IluFactors<f64>) -> DenseMatrix<f64> {
        DenseMatrix::from_sparse(f.l())
            .matmul(&DenseMatrix::from_sparse(f.u()))
            .unwrap()
    }

    fn permuted(a: &CsrMatrix<f64>, perm: &[usize]) -> DenseMatrix<f64> {
        let d = DenseMatrix::from_sparse(a);
        DenseMatrix::<f64>::from_fn(a.order(), a.order(), |i, p| d[(i, perm[p])])
    }

    #[test]
    fn two_by_two_exact() {
        let a = CsrMatrix::<f64>::from_dense_rows(&[vec![4.0, 1.0], vec![1.0, 4.0]]).unwrap();
        for f in [ilu0(&a).unwrap(), ilu_factorize(&a, 0.0).unwrap()] {
            assert_eq!(f.u().get(1, 1), 3.75);
            assert_eq!(f.l().get(1, 0), 0.25);
            assert_eq!(f.l().get(0, 0), 1.0);
        }
    }

    #[test]
    fn diagonal_gives_identity_l() {
        let a = CsrMatrix::<f64>::from_diagonal(&[2.0, 5.0, 7.0]).unwrap();
        let f = ilu_factorize(&a, 1e-2).unwrap();
        assert_eq!(f.l().nnz(), 3);
        assert_eq!(f.u().to_dense_rows(), a.to_dense_rows());
    }

    #[test]
    fn tridiagonal_ilu0_is_complete() {
        let n = 8;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::<f64>::from_triplets(n, &t).unwrap();
        let lu = product(&ilu0(&a).unwrap());
        let d = DenseMatrix::from_sparse(&a);
        for i in 0..n {
            for j in 0..n {
                assert!((lu[(i, j)] - d[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_droptol_reproduces_permuted_matrix() {
        let rows = vec![
            vec![0.0, 2.0, 1.0, 0.0],
            vec![3.0, 0.0, 0.0, 1.0],
            vec![1.0, 1.0, 4.0, 0.0],
            vec![0.0, 5.0, 0.0, 2.0],
        ];
        let a = CsrMatrix::<f64>::from_dense_rows(&rows).unwrap();
        let f = ilu_factorize(&a, 0.0).unwrap();
        let lu = product(&f);
        let aq = permuted(&a, f.col_perm());
        for i in 0..4 {
            for j in 0..4 {
                assert!((lu[(i, j)] - aq[(i, j)]).abs() < 1e-12, "({i},{j})");
            }
        }
        // A zero leading diagonal forces pivoting.
        assert_ne!(f.col_perm()[0], 0);
        assert!(matches!(ilu0(&a), Err(Error::Singular(0))));
    }

    #[test]
    fn solves_match_inverse() {
        let rows = vec![vec![1.0, 2.0, 0.0], vec![3.0, 1.0, 1.0], vec![0.0, 1.0, 5.0]];
        let a = CsrMatrix::<f64>::from_dense_rows(&rows).unwrap();
        let f = ilu_factorize(&a, 0.0).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = f.solve(&b).unwrap();
        let r = a.matvec(&x).unwrap();
        let y = f.solve_transpose(&b).unwrap();
        let s = a.matvec_transpose(&y).unwrap();
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-13);
            assert!((s[i] - b[i]).abs() < 1e-13);
        }
        let oracle = dense_inverse_diagonal(&a, DEFAULT_ORACLE_CAP).unwrap();
        for (m, d) in f.inverse_diagonal().iter().zip(&oracle) {
            assert!((m - d).abs() < 1e-13);
        }
    }

    #[test]
    fn identity_factors_give_ones() {
        let f = ilu0(&CsrMatrix::<f64>::identity(4)).unwrap();
        let m = diag_inverse_from_ilu(&f).unwrap();
        assert_eq!(m.values(), &[1.0; 4]);
        assert_eq!(m.source(), ApproxSource::Ilu);
    }

    #[test]
    fn exact_two_by_two_diagonal() {
        let a = CsrMatrix::<f64>::from_dense_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let m = diag_inverse_from_ilu(&ilu0(&a).unwrap()).unwrap();
        for v in m.values() {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_on_poisson_drops_fill() {
        let a = gen_poisson2d::<f64>(10).unwrap();
        let full = ilu_factorize(&a, 0.0).unwrap();
        let dropped = ilu_factorize(&a, 1e-2).unwrap();
        assert!(dropped.l().nnz() + dropped.u().nnz() < full.l().nnz() + full.u().nnz());
        // No pivoting needed on a diagonally dominant M-matrix.
        assert!(dropped.col_perm().iter().enumerate().all(|(p, &c)| p == c));
    }

    #[test]
    fn rejects_bad_droptol() {
        let a = CsrMatrix::<f64>::identity(2);
        assert!(ilutp(&a, -1.0, 1.0).is_err());
        assert!(ilutp(&a, 0.0, 2.0).is_err());
    }
}
