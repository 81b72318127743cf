//! Banded LU with partial pivoting, used as the sparse direct solver.
//!
//! The matrix is optionally reordered with reverse Cuthill–McKee first, so
//! the factor fits in `n·(2·kl + ku + 1)` storage where `kl`/`ku` are the
//! bandwidths after reordering.

use std::collections::VecDeque;

use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    /// Column-major band storage with leading dimension `2·kl + ku + 1`.
    ab: Vec<T>,
    pivots: Vec<usize>,
    /// `order[new] = old`; identity when no reordering was applied.
    order: Vec<usize>,
    position: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    /// Factors `a`, reordering with RCM when that narrows the band.
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.order();
        let natural = a.bandwidths();
        let rcm = reverse_cuthill_mckee(a);
        let permuted = permute_symmetric(a, &rcm);
        let reordered = permuted.bandwidths();
        if reordered.0 + reordered.1 < natural.0 + natural.1 {
            Self::factor_with_order(&permuted, rcm)
        } else {
            Self::factor_with_order(a, (0..n).collect())
        }
    }

    /// Storage the factorization of `a` would need, without reordering.
    pub fn storage_estimate(a: &CsrMatrix<T>) -> usize {
        let (kl, ku) = a.bandwidths();
        a.order() * (2 * kl + ku + 1)
    }

    fn factor_with_order(a: &CsrMatrix<T>, order: Vec<usize>) -> Result<Self> {
        let n = a.order();
        let (kl, ku) = a.bandwidths();
        let kv = kl + ku;
        let ld = 2 * kl + ku + 1;
        let mut ab = vec![T::zero(); n * ld];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                ab[j * ld + kv + i - j] = v;
            }
        }
        let idx = |i: usize, j: usize| j * ld + kv + i - j;
        let mut pivots = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = j;
            let mut pmax = ab[idx(j, j)].abs();
            for i in j + 1..=j + km {
                let v = ab[idx(i, j)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            pivots[j] = p;
            if pmax == T::zero() || !pmax.is_finite() {
                return Err(Error::Singular(j));
            }
            ju = ju.max((p + ku).min(n - 1));
            if p != j {
                for c in j..=ju {
                    ab.swap(idx(p, c), idx(j, c));
                }
            }
            let pivot = ab[idx(j, j)];
            for i in j + 1..=j + km {
                ab[idx(i, j)] /= pivot;
            }
            for c in j + 1..=ju {
                let ujc = ab[idx(j, c)];
                if ujc == T::zero() {
                    continue;
                }
                for i in j + 1..=j + km {
                    let l = ab[idx(i, j)];
                    ab[idx(i, c)] -= l * ujc;
                }
            }
        }
        let mut position = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            ab,
            pivots,
            order,
            position,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    fn ld(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    /// Column `j` of `U` restricted to rows `max(0, j - kl - ku)..=j`.
    #[inline]
    fn u_column(&self, j: usize) -> (usize, &[T]) {
        let kv = self.kl + self.ku;
        let top = j.saturating_sub(kv);
        let base = j * self.ld() + kv;
        (top, &self.ab[base - (j - top)..=base])
    }

    #[inline]
    fn l_column(&self, j: usize) -> &[T] {
        let km = self.kl.min(self.n - 1 - j);
        let base = j * self.ld() + self.kl + self.ku;
        &self.ab[base + 1..=base + km]
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut x: Vec<T> = self.order.iter().map(|&old| b[old]).collect();
        for j in 0..self.n {
            let p = self.pivots[j];
            if p != j {
                x.swap(p, j);
            }
            let xj = x[j];
            if xj != T::zero() {
                for (xi, &l) in x[j + 1..].iter_mut().zip(self.l_column(j)) {
                    *xi -= l * xj;
                }
            }
        }
        for j in (0..self.n).rev() {
            let (top, ucol) = self.u_column(j);
            x[j] /= ucol[ucol.len() - 1];
            let xj = x[j];
            if xj != T::zero() {
                for (xi, &u) in x[top..j].iter_mut().zip(ucol) {
                    *xi -= u * xj;
                }
            }
        }
        Ok(self.position.iter().map(|&new| x[new]).collect())
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut x: Vec<T> = self.order.iter().map(|&old| b[old]).collect();
        for j in 0..self.n {
            let (top, ucol) = self.u_column(j);
            let s = dot(&ucol[..ucol.len() - 1], &x[top..j]);
            x[j] = (x[j] - s) / ucol[ucol.len() - 1];
        }
        for j in (0..self.n).rev() {
            let l = self.l_column(j);
            let s = dot(l, &x[j + 1..j + 1 + l.len()]);
            x[j] -= s;
            let p = self.pivots[j];
            if p != j {
                x.swap(p, j);
            }
        }
        Ok(self.position.iter().map(|&new| x[new]).collect())
    }
}

/// `B = P A Pᵀ` with `B[new_i][new_j] = A[order[new_i]][order[new_j]]`.
pub(crate) fn permute_symmetric<T: Scalar>(a: &CsrMatrix<T>, order: &[usize]) -> CsrMatrix<T> {
    let n = a.order();
    let mut position = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let mut trip = Vec::with_capacity(a.nnz());
    for (new_i, &old_i) in order.iter().enumerate() {
        let (cols, vals) = a.row(old_i);
        trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (new_i, position[j], v)));
    }
    CsrMatrix::from_triplets(n, &trip).expect("permutation of a valid matrix")
}

/// Reverse Cuthill–McKee ordering of the pattern of `A + Aᵀ`.
/// Each connected component starts from a pseudo-peripheral node.
pub(crate) fn reverse_cuthill_mckee<T: Scalar>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.order();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let bfs_levels = |start: usize, visited: &[bool]| -> (Vec<usize>, usize) {
        let mut level = vec![usize::MAX; n];
        let mut queue = VecDeque::from([start]);
        level[start] = 0;
        let mut last = start;
        while let Some(u) = queue.pop_front() {
            last = u;
            for &v in &adj[u] {
                if !visited[v] && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let depth = level[last];
        (level, depth)
    };

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start: repeatedly jump to a minimum-degree node
        // of the deepest level until eccentricity stops growing.
        let mut start = seed;
        let (mut levels, mut depth) = bfs_levels(start, &visited);
        loop {
            let candidate = (0..n)
                .filter(|&v| levels[v] == depth)
                .min_by_key(|&v| (degree[v], v))
                .expect("deepest level non-empty");
            let (l2, d2) = bfs_levels(candidate, &visited);
            if d2 > depth {
                start = candidate;
                levels = l2;
                depth = d2;
            } else {
                break;
            }
        }
        let _ = levels;
        let first = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = first;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (degree[v], v));
            for v in next {
                visited[v] = true;
                order.push(v);
            }
        }
    }
    order.reverse();
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gen_poisson2d;

    fn residual(a: &CsrMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.matvec(x).unwrap();
        ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn solves_poisson() {
        let a = gen_poisson2d::<f64>(9).unwrap();
        let lu = BandLu::factor(&a).unwrap();
        let b: Vec<f64> = (0..81).map(|i| (i as f64).sin()).collect();
        let x = lu.solve(&b).unwrap();
        assert!(residual(&a, &x, &b) < 1e-12);
    }

    #[test]
    fn pivoting_and_transpose() {
        // Zero diagonal forces row interchanges.
        let a = CsrMatrix::<f64>::from_dense_rows(&[
            vec![0.0, 2.0, 0.0, 1.0],
            vec![3.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 4.0],
            vec![1.0, 0.0, 5.0, 0.0],
        ])
        .unwrap();
        let lu = BandLu::factor(&a).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0];
        let x = lu.solve(&b).unwrap();
        assert!(residual(&a, &x, &b) < 1e-13);
        let xt = lu.solve_transpose(&b).unwrap();
        assert!(residual(&a.transpose(), &xt, &b) < 1e-13);
    }

    #[test]
    fn singular_detected() {
        let a = CsrMatrix::<f64>::from_dense_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(BandLu::factor(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn rcm_narrows_shuffled_band() {
        let a = gen_poisson2d::<f64>(8).unwrap();
        // scramble with a fixed permutation
        let scramble: Vec<usize> = (0..64).map(|i| (i * 37) % 64).collect();
        let b = permute_symmetric(&a, &scramble);
        let (kl, ku) = b.bandwidths();
        let rcm = reverse_cuthill_mckee(&b);
        let mut sorted = rcm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..64).collect::<Vec<_>>());
        let c = permute_symmetric(&b, &rcm);
        let (kl2, ku2) = c.bandwidths();
        assert!(kl2 + ku2 < kl + ku);
        let lu = BandLu::factor(&b).unwrap();
        let rhs = vec![1.0; 64];
        assert!(residual(&b, &lu.solve(&rhs).unwrap(), &rhs) < 1e-12);
    }
}
