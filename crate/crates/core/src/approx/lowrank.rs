//! Smallest singular triplets and the low-rank approximate inverse
//! `Z⁻¹ = V·Σ⁻¹·Uᵀ` built from them.
//!
//! The triplets come from block subspace iteration with `(AᵀA)⁻¹`, applied
//! through a banded LU of `A`, followed by Rayleigh–Ritz on `AᵀA`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{orthonormalize, symmetric_eigen};
use super::{ApproxSource, DiagApprox};
use crate::error::{Error, Result};
use crate::matrix::{BandLu, CsrMatrix, DenseMatrix};
use crate::scalar::{dot, norm2, Scalar};

#[derive(Clone, Debug)]
pub struct SvdOptions {
    /// Residual target relative to the largest singular value.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the random start block.
    pub seed: u64,
    /// Extra block columns beyond `k`; `None` picks `max(8, k/2)`.
    pub oversample: Option<usize>,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            tol: 1e-6,
            max_iter: 300,
            seed: 0x5eed,
            oversample: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LowRankFactors<T> {
    sigma: Vec<T>,
    u: DenseMatrix<T>,
    v: DenseMatrix<T>,
}

impl<T: Scalar> LowRankFactors<T> {
    /// Validates ascending positive `sigma` and unit-norm columns.
    pub fn new(sigma: Vec<T>, u: DenseMatrix<T>, v: DenseMatrix<T>) -> Result<Self> {
        let k = sigma.len();
        if k == 0 {
            return Err(Error::InvalidArgument("low-rank factors need rank at least 1".into()));
        }
        if u.cols() != k || v.cols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: u.cols().min(v.cols()),
            });
        }
        if u.rows() != v.rows() {
            return Err(Error::DimensionMismatch {
                expected: u.rows(),
                got: v.rows(),
            });
        }
        if sigma.iter().any(|s| !s.is_finite() || *s <= T::zero()) {
            return Err(Error::InvalidArgument(
                "singular values must be positive and finite".into(),
            ));
        }
        if sigma.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("singular values must be ascending".into()));
        }
        let tol = T::of(1e-8).max(T::epsilon() * T::of(100.0));
        for j in 0..k {
            for m in [&u, &v] {
                if (norm2(m.column(j)) - T::one()).abs() > tol {
                    return Err(Error::InvalidArgument(format!("singular vector {j} is not unit norm")));
                }
            }
        }
        Ok(LowRankFactors { sigma, u, v })
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn order(&self) -> usize {
        self.u.rows()
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    pub fn u(&self) -> &DenseMatrix<T> {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix<T> {
        &self.v
    }

    /// The `k` smallest triplets.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate rank {} factors to {k}",
                self.rank()
            )));
        }
        let n = self.order();
        Ok(LowRankFactors {
            sigma: self.sigma[..k].to_vec(),
            u: DenseMatrix::from_fn(n, k, |i, j| self.u[(i, j)]),
            v: DenseMatrix::from_fn(n, k, |i, j| self.v[(i, j)]),
        })
    }

    /// `V·Σ⁻¹·Uᵀ·x`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let n = self.order();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let mut out = vec![T::zero(); n];
        for j in 0..self.rank() {
            let c = dot(self.u.column(j), x) / self.sigma[j];
            for (o, &vij) in out.iter_mut().zip(self.v.column(j)) {
                *o += c * vij;
            }
        }
        Ok(out)
    }

    /// `Z⁻¹ eᵢ = V·Σ⁻¹·U(i,:)ᵀ`.
    pub fn column(&self, i: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.order()];
        for j in 0..self.rank() {
            let c = self.u[(i, j)] / self.sigma[j];
            for (o, &vij) in out.iter_mut().zip(self.v.column(j)) {
                *o += c * vij;
            }
        }
        out
    }

    pub fn inverse_diagonal(&self) -> Vec<T> {
        (0..self.order())
            .map(|i| {
                (0..self.rank())
                    .map(|j| self.v[(i, j)] * self.u[(i, j)] / self.sigma[j])
                    .sum()
            })
            .collect()
    }
}

/// Diagonal of `V·Σ⁻¹·Uᵀ`: `Mᵢ = Σⱼ V(i,j)·U(i,j)/σⱼ`.
pub fn diag_from_lowrank<T: Scalar>(f: &LowRankFactors<T>) -> Result<DiagApprox<T>> {
    if f.rank() == 0 {
        return Err(Error::InvalidArgument("rank 0 low-rank approximation".into()));
    }
    DiagApprox::new(f.inverse_diagonal(), ApproxSource::Svd)
}

fn largest_singular_value<T: Scalar>(a: &CsrMatrix<T>) -> Result<T> {
    let n = a.order();
    let mut x: Vec<T> = (0..n)
        .map(|i| T::one() + T::of(((i * 7919) % 13) as f64 / 13.0))
        .collect();
    let mut sigma = T::zero();
    for _ in 0..60 {
        let nrm = norm2(&x);
        if nrm == T::zero() {
            break;
        }
        x.iter_mut().for_each(|v| *v /= nrm);
        let ax = a.matvec(&x)?;
        sigma = norm2(&ax);
        x = a.matvec_transpose(&ax)?;
    }
    Ok(sigma)
}

/// The `k` smallest singular triplets of a nonsingular `a`, ascending.
///
/// Converged when every `‖Aᵀuⱼ − σⱼvⱼ‖ ≤ tol·σ_max` (`Avⱼ = σⱼuⱼ` holds by
/// construction).
pub fn smallest_singular_triplets<T: Scalar>(
    a: &CsrMatrix<T>,
    k: usize,
    opts: &SvdOptions,
) -> Result<LowRankFactors<T>> {
    let n = a.order();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= {n}, got k = {k}")));
    }
    let lu = BandLu::factor(a)?;
    let target = T::of(opts.tol) * largest_singular_value(a)?;
    let p = (k + opts.oversample.unwrap_or((k / 2).max(8))).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DenseMatrix::from_fn(n, p, |_, _| T::of(rng.random_range(-1.0..1.0)));
    let mut worst = T::infinity();
    for iter in 1..=opts.max_iter {
        let mut q = DenseMatrix::zeros(n, p);
        for j in 0..p {
            let y = lu.solve(&lu.solve_transpose(x.column(j))?)?;
            q.column_mut(j).copy_from_slice(&y);
        }
        orthonormalize(&mut q, |col| {
            col.iter_mut().for_each(|v| *v = T::of(rng.random_range(-1.0..1.0)))
        });

        let mut b = DenseMatrix::zeros(n, p);
        for j in 0..p {
            let aq = a.matvec(q.column(j))?;
            b.column_mut(j).copy_from_slice(&aq);
        }
        let h = DenseMatrix::from_fn(p, p, |r, c| dot(b.column(r), b.column(c)));
        let (_theta, w) = symmetric_eigen(&h)?;
        let v = q.matmul(&w)?;
        let av = b.matmul(&w)?;

        let mut triplets: Vec<(T, Vec<T>, Vec<T>)> = Vec::with_capacity(k);
        worst = T::zero();
        for j in 0..k {
            let sigma = norm2(av.column(j));
            if sigma == T::zero() {
                return Err(Error::Singular(j));
            }
            let mut vj = v.column(j).to_vec();
            let vn = norm2(&vj);
            vj.iter_mut().for_each(|e| *e /= vn);
            let sigma = sigma / vn;
            let mut uj: Vec<T> = av.column(j).iter().map(|&e| e / (sigma * vn)).collect();
            let atu = a.matvec_transpose(&uj)?;
            let r: Vec<T> = atu.iter().zip(&vj).map(|(&x, &y)| x - sigma * y).collect();
            worst = worst.max(norm2(&r));
            // Fix the sign so the largest component of v is positive.
            let (_, big) = vj.iter().fold(
                (T::zero(), T::zero()),
                |(m, s), &e| if e.abs() > m { (e.abs(), e) } else { (m, s) },
            );
            if big < T::zero() {
                vj.iter_mut().for_each(|e| *e = -*e);
                uj.iter_mut().for_each(|e| *e = -*e);
            }
            triplets.push((sigma, uj, vj));
        }
        log::debug!("subspace iteration {iter}: worst residual {worst} (target {target})");
        if worst <= target || p == n {
            triplets.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
            let sigma = triplets.iter().map(|t| t.0).collect();
            let u = DenseMatrix::from_fn(n, k, |i, j| triplets[j].1[i]);
            let vv = DenseMatrix::from_fn(n, k, |i, j| triplets[j].2[i]);
            return LowRankFactors::new(sigma, u, vv);
        }
        x = v;
    }
    Err(Error::SvdNoConvergence {
        iterations: opts.max_iter,
        worst_residual: worst.as_f64(),
        target: target.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gen_poisson2d, DenseInverse, DEFAULT_ORACLE_CAP};

    #[test]
    fn diagonal_matrix_axes() {
        let a = CsrMatrix::<f64>::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let f = smallest_singular_triplets(&a, 2, &SvdOptions::default()).unwrap();
        assert!((f.sigma()[0] - 1.0).abs() < 1e-12);
        assert!((f.sigma()[1] - 2.0).abs() < 1e-12);
        for j in 0..2 {
            assert!((f.v()[(j, j)].abs() - 1.0).abs() < 1e-10);
            assert!((f.u()[(j, j)].abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_left_equals_right_up_to_sign() {
        let a = gen_poisson2d::<f64>(6).unwrap();
        let f = smallest_singular_triplets(&a, 3, &SvdOptions::default()).unwrap();
        for j in 0..3 {
            let d = dot(f.u().column(j), f.v().column(j));
            assert!((d.abs() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn full_rank_reproduces_inverse_diagonal() {
        let rows = vec![
            vec![4.0, 1.0, 0.0, 2.0],
            vec![1.0, 3.0, 1.0, 0.0],
            vec![0.0, 2.0, 5.0, 1.0],
            vec![1.0, 0.0, 1.0, 6.0],
        ];
        let a = CsrMatrix::<f64>::from_dense_rows(&rows).unwrap();
        let f = smallest_singular_triplets(&a, 4, &SvdOptions::default()).unwrap();
        let oracle = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap().diagonal();
        let m = diag_from_lowrank(&f).unwrap();
        for (x, y) in m.values().iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn diag_one_ten_rank_one() {
        let a = CsrMatrix::<f64>::from_diagonal(&[1.0, 10.0]).unwrap();
        let f = smallest_singular_triplets(&a, 1, &SvdOptions::default()).unwrap();
        let m = diag_from_lowrank(&f).unwrap();
        assert!((m.values()[0] - 1.0).abs() < 1e-12);
        assert!(m.values()[1].abs() < 1e-12);
    }

    #[test]
    fn rejects_rank_zero() {
        let a = CsrMatrix::<f64>::identity(3);
        assert!(smallest_singular_triplets(&a, 0, &SvdOptions::default()).is_err());
        let f = smallest_singular_triplets(&a, 2, &SvdOptions::default()).unwrap();
        assert!(f.truncated(0).is_err());
        assert_eq!(f.truncated(1).unwrap().rank(), 1);
    }

    #[test]
    fn column_matches_apply() {
        let a = gen_poisson2d::<f64>(5).unwrap();
        let f = smallest_singular_triplets(&a, 4, &SvdOptions::default()).unwrap();
        let mut e = vec![0.0; 25];
        e[7] = 1.0;
        let x = f.apply(&e).unwrap();
        let y = f.column(7);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}
