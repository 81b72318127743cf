//! Elementwise lower/upper bounds on `(A⁻¹)ᵢᵢ` for symmetric positive
//! definite `A` from an enclosing interval `[λ_min, λ_max]` of its spectrum.

use super::lowrank::{smallest_singular_triplets, SvdOptions};
use super::{ApproxSource, DiagApprox};
use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;
use crate::scalar::Scalar;

/// `(lower, upper)` bound vectors. `s_ii` is the squared row norm.
pub fn variational_bounds<T: Scalar>(
    a: &CsrMatrix<T>,
    lambda_min: T,
    lambda_max: T,
) -> Result<(DiagApprox<T>, DiagApprox<T>)> {
    if !a.is_symmetric() {
        return Err(Error::Unsupported("variational bounds need a symmetric matrix".into()));
    }
    if !(lambda_min > T::zero() && lambda_min <= lambda_max) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < lambda_min <= lambda_max, got {lambda_min} and {lambda_max}"
        )));
    }
    let (lo, hi) = (lambda_min, lambda_max);
    let norms = a.row_norms();
    let diag = a.diagonal();
    let mut lower = Vec::with_capacity(a.order());
    let mut upper = Vec::with_capacity(a.order());
    for (i, (&aii, &rn)) in diag.iter().zip(&norms).enumerate() {
        let s = rn * rn;
        let term = |num: T, den: T| -> Result<T> {
            if num == T::zero() {
                Ok(T::zero())
            } else if den > T::zero() {
                Ok(num / den)
            } else {
                Err(Error::InvalidArgument(format!(
                    "spectrum estimates [{lo}, {hi}] do not enclose the spectrum (row {i})"
                )))
            }
        };
        let l = T::one() / hi + term((hi - aii) * (hi - aii), hi * (hi * aii - s))?;
        let u = T::one() / lo - term((aii - lo) * (aii - lo), lo * (s - lo * aii))?;
        lower.push(l);
        upper.push(u);
    }
    Ok((
        DiagApprox::new(lower, ApproxSource::BoundsLower)?,
        DiagApprox::new(upper, ApproxSource::BoundsUpper)?,
    ))
}

/// An interval enclosing the spectrum of a symmetric positive definite `a`:
/// the Gershgorin upper bound, and the computed smallest singular value
/// lowered by twice its residual tolerance (at most halved).
pub fn estimate_spectrum_interval<T: Scalar>(a: &CsrMatrix<T>) -> Result<(T, T)> {
    let mut hi = T::zero();
    for i in 0..a.order() {
        let (_, vals) = a.row(i);
        let r: T = vals.iter().map(|v| v.abs()).sum();
        hi = hi.max(r);
    }
    // A wide block: the bottom of the spectrum is often tightly clustered.
    let opts = SvdOptions {
        oversample: Some(24),
        ..SvdOptions::default()
    };
    let sigma = smallest_singular_triplets(a, 1, &opts)?.sigma()[0];
    // Residuals are below tol·σ_max and σ_max <= hi here.
    let lo = (sigma - T::of(2.0 * opts.tol) * hi).max(sigma / T::of(2.0));
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_extremes_are_exact() {
        let d = [2.0, 3.0, 5.0];
        let a = CsrMatrix::<f64>::from_diagonal(&d).unwrap();
        let (lo, up) = variational_bounds(&a, 2.0, 5.0).unwrap();
        for (i, &di) in d.iter().enumerate() {
            assert!(lo.values()[i] <= 1.0 / di + 1e-15);
            assert!(up.values()[i] >= 1.0 / di - 1e-15);
        }
        assert!((lo.values()[0] - 0.5).abs() < 1e-15 && (up.values()[0] - 0.5).abs() < 1e-15);
        assert!((lo.values()[2] - 0.2).abs() < 1e-15 && (up.values()[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn identity_bounds_are_one() {
        let a = CsrMatrix::<f64>::identity(4);
        let (lo, up) = variational_bounds(&a, 1.0, 1.0).unwrap();
        assert!(lo.values().iter().chain(up.values()).all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_nonsymmetric() {
        let a = CsrMatrix::<f64>::from_dense_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(variational_bounds(&a, 1.0, 3.0), Err(Error::Unsupported(_))));
    }
}
