//! Monte Carlo trace estimators and closed-form variances of their single
//! samples scaled by `1/s`.
//!
//! Every sample `j` draws from its own ChaCha8 stream (`seed`, stream `j`),
//! so results do not depend on evaluation order.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::ApproxInverse;
use crate::error::{Error, Result};
use crate::fitting::FitModel;
use crate::matrix::{BandLu, CsrMatrix, DenseMatrix};
use crate::scalar::{dot, Scalar};

/// Margin added to the default importance-sampling shift.
pub const SHIFT_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorStats<T> {
    pub estimate: T,
    pub sample_count: usize,
    /// Unbiased variance of the per-sample values (0 for a single sample).
    pub sample_variance: T,
    pub seed: u64,
}

impl<T: Scalar> EstimatorStats<T> {
    fn from_samples(values: &[T], seed: u64, offset: T) -> Self {
        let s = values.len();
        let mean = values.iter().copied().sum::<T>() / T::of_usize(s);
        let sample_variance = if s > 1 {
            values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::of_usize(s - 1)
        } else {
            T::zero()
        };
        EstimatorStats {
            estimate: mean - offset,
            sample_count: s,
            sample_variance,
            seed,
        }
    }
}

/// A square operator known only through its action.
pub trait LinearOperator<T> {
    fn order(&self) -> usize;
    fn apply(&self, x: &[T]) -> Result<Vec<T>>;
}

impl<T: Scalar> LinearOperator<T> for DenseMatrix<T> {
    fn order(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.matvec(x)
    }
}

impl<T: Scalar> LinearOperator<T> for CsrMatrix<T> {
    fn order(&self) -> usize {
        CsrMatrix::order(self)
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.matvec(x)
    }
}

/// `x ↦ A⁻¹x` through a banded LU of `A`.
pub struct InverseOperator<T> {
    lu: BandLu<T>,
}

impl<T: Scalar> InverseOperator<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        Ok(InverseOperator { lu: BandLu::factor(a)? })
    }
}

impl<T: Scalar> LinearOperator<T> for InverseOperator<T> {
    fn order(&self) -> usize {
        self.lu.order()
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.lu.solve(x)
    }
}

/// `x ↦ (A⁻¹ − Z⁻¹)x`.
pub struct ResidualOperator<'a, T> {
    pub inverse: &'a InverseOperator<T>,
    pub approx: ApproxInverse<'a, T>,
}

impl<T: Scalar> LinearOperator<T> for ResidualOperator<'_, T> {
    fn order(&self) -> usize {
        self.inverse.order()
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let a = self.inverse.apply(x)?;
        let z = self.approx.apply(x)?;
        Ok(a.iter().zip(&z).map(|(&p, &q)| p - q).collect())
    }
}

/// Access to individual diagonal entries, possibly computed on demand.
pub trait DiagonalAccess<T> {
    fn order(&self) -> usize;
    fn entry(&mut self, i: usize) -> Result<T>;
}

impl<T: Scalar> DiagonalAccess<T> for &[T] {
    fn order(&self) -> usize {
        self.len()
    }

    fn entry(&mut self, i: usize) -> Result<T> {
        self.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            n: self.len(),
        })
    }
}

/// Diagonal entries produced by a closure, e.g. one linear solve each.
pub struct FnDiagonal<F> {
    pub n: usize,
    pub f: F,
}

impl<T, F: FnMut(usize) -> Result<T>> DiagonalAccess<T> for FnDiagonal<F> {
    fn order(&self) -> usize {
        self.n
    }

    fn entry(&mut self, i: usize) -> Result<T> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        (self.f)(i)
    }
}

fn stream(seed: u64, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64);
    rng
}

fn check_samples(s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    Ok(())
}

/// Rademacher vector for sample `j`.
pub fn rademacher_vector<T: Scalar>(n: usize, seed: u64, j: usize) -> Vec<T> {
    let mut rng = stream(seed, j);
    (0..n)
        .map(|_| if rng.random::<bool>() { T::one() } else { -T::one() })
        .collect()
}

/// Mean of `zⱼᵀ·op(zⱼ)` over `s` Rademacher vectors.
pub fn hutchinson_trace<T: Scalar>(op: &impl LinearOperator<T>, s: usize, seed: u64) -> Result<EstimatorStats<T>> {
    check_samples(s)?;
    let n = op.order();
    let values = (0..s)
        .map(|j| {
            let z = rademacher_vector::<T>(n, seed, j);
            Ok(dot(&z, &op.apply(&z)?))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(EstimatorStats::from_samples(&values, seed, T::zero()))
}

/// Mean of `N·D_i` over `s` indices drawn uniformly without replacement.
pub fn unit_vector_trace<T: Scalar>(
    diag: &mut impl DiagonalAccess<T>,
    s: usize,
    seed: u64,
) -> Result<EstimatorStats<T>> {
    check_samples(s)?;
    let n = diag.order();
    if s > n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {s} distinct indices out of {n}"
        )));
    }
    let idx = rand::seq::index::sample(&mut stream(seed, 0), n, s);
    let scale = T::of_usize(n);
    let values = idx
        .iter()
        .map(|i| Ok(scale * diag.entry(i)?))
        .collect::<Result<Vec<T>>>()?;
    Ok(EstimatorStats::from_samples(&values, seed, T::zero()))
}

/// `max(0, −min(M) + ε, −min(known D) + ε)`.
pub fn default_shift<T: Scalar>(m: &[T], known_d: &[T]) -> T {
    let eps = T::of(SHIFT_EPS);
    let lo = |v: &[T]| v.iter().copied().fold(T::infinity(), T::min);
    let mut shift = T::zero();
    if !m.is_empty() {
        shift = shift.max(-lo(m) + eps);
    }
    if !known_d.is_empty() {
        shift = shift.max(-lo(known_d) + eps);
    }
    shift
}

/// Importance sampling with probabilities `Gᵢ ∝ Mᵢ + shift`, drawn with
/// replacement; the shift is removed from the reported trace.
pub fn importance_sampling_trace<T: Scalar>(
    diag: &mut impl DiagonalAccess<T>,
    m: &[T],
    s: usize,
    seed: u64,
    shift: Option<T>,
) -> Result<EstimatorStats<T>> {
    check_samples(s)?;
    let n = diag.order();
    if m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.len(),
        });
    }
    let shift = shift.unwrap_or_else(|| default_shift(m, &[]));
    let shifted: Vec<T> = m.iter().map(|&v| v + shift).collect();
    if let Some(i) = shifted.iter().position(|v| v.is_nan() || *v <= T::zero()) {
        return Err(Error::InvalidArgument(format!("shifted M[{i}] is not positive")));
    }
    let total: T = shifted.iter().copied().sum();
    let dist = WeightedIndex::new(shifted.iter().map(|v| v.as_f64()))
        .map_err(|e| Error::InvalidArgument(format!("importance weights: {e}")))?;
    let values = (0..s)
        .map(|j| {
            let i = dist.sample(&mut stream(seed, j));
            Ok(total * (diag.entry(i)? + shift) / shifted[i])
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(EstimatorStats::from_samples(&values, seed, T::of_usize(n) * shift))
}

/// `(2/s)(‖B‖_F² − Σ Bᵢᵢ²)` on the symmetric part of `B`.
pub fn exact_variance_hutchinson<T: Scalar>(b: &DenseMatrix<T>, s: usize) -> T {
    let n = b.rows();
    let half = T::of(0.5);
    let mut off = T::zero();
    for j in 0..n {
        for i in 0..n {
            if i != j {
                let v = half * (b[(i, j)] + b[(j, i)]);
                off += v * v;
            }
        }
    }
    T::of(2.0) * off / T::of_usize(s)
}

/// `(N²/s)·Var(D)` with the population variance.
pub fn exact_variance_unit<T: Scalar>(d: &[T], s: usize) -> T {
    let n = T::of_usize(d.len());
    let mean = d.iter().copied().sum::<T>() / n;
    let var = d.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    n * n * var / T::of_usize(s)
}

/// `(1/s)(Tr(M)·Σ Dᵢ²/Mᵢ − Tr(D)²)` for positive weights `M`.
pub fn exact_variance_importance<T: Scalar>(d: &[T], m: &[T], s: usize) -> T {
    let tm: T = m.iter().copied().sum();
    let td: T = d.iter().copied().sum();
    let second: T = d.iter().zip(m).map(|(&di, &mi)| di * di / mi).sum();
    (tm * second - td * td) / T::of_usize(s)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualVariances<T> {
    pub hutch_e: T,
    pub unit_e: T,
    pub unit_efit: T,
}

/// Variances of Hutchinson and unit-vector sampling on `E = A⁻¹ − Z⁻¹`, and
/// of unit-vector sampling on `D − f(M)`.
pub fn exact_variance_residuals<T: Scalar>(
    ainv: &DenseMatrix<T>,
    zinv: &DenseMatrix<T>,
    f: &FitModel<T>,
    m: &[T],
    s: usize,
) -> Result<ResidualVariances<T>> {
    let e = ainv.sub(zinv)?;
    let d = ainv.diagonal();
    if m.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: m.len(),
        });
    }
    let efit: Vec<T> = d.iter().zip(m).map(|(&di, &mi)| di - f.eval(mi)).collect();
    Ok(ResidualVariances {
        hutch_e: exact_variance_hutchinson(&e, s),
        unit_e: exact_variance_unit(&e.diagonal(), s),
        unit_efit: exact_variance_unit(&efit, s),
    })
}
