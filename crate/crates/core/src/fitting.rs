//! Models `D ≈ f(M)`: least-squares line or monotone piecewise cubic
//! Hermite interpolation (PCHIP), and the trace `Σ f(Mᵢ)`.

use std::fmt;

use crate::approx::DiagApprox;
use crate::error::{Error, Result};
use crate::sampling::FitSampleSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearModel<T> {
    pub b: T,
    pub c: T,
}

impl<T: Scalar> LinearModel<T> {
    pub fn eval(&self, x: T) -> T {
        self.b * x + self.c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PchipModel<T> {
    x: Vec<T>,
    y: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> PchipModel<T> {
    /// Interpolant through strictly increasing `x`.
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::TooFewKnots(x.len()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("knots must be finite".into()));
        }
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "knot abscissae must be strictly increasing".into(),
            ));
        }
        let d = pchip_slopes(&x, &y);
        Ok(PchipModel { x, y, d })
    }

    pub fn knots_x(&self) -> &[T] {
        &self.x
    }

    pub fn knots_y(&self) -> &[T] {
        &self.y
    }

    pub fn derivs(&self) -> &[T] {
        &self.d
    }

    /// Cubic Hermite evaluation; constant beyond the end knots.
    pub fn eval(&self, x: T) -> T {
        let last = self.x.len() - 1;
        if x <= self.x[0] {
            return self.y[0];
        }
        if x >= self.x[last] {
            return self.y[last];
        }
        let k = match self.x.binary_search_by(|v| v.partial_cmp(&x).expect("finite knots")) {
            Ok(j) => return self.y[j],
            Err(j) => j - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let delta = (self.y[k + 1] - self.y[k]) / h;
        let s = x - self.x[k];
        let c = (T::of(3.0) * delta - T::of(2.0) * self.d[k] - self.d[k + 1]) / h;
        let b = (self.d[k] - T::of(2.0) * delta + self.d[k + 1]) / (h * h);
        self.y[k] + s * (self.d[k] + s * (c + s * b))
    }
}

/// Shape-preserving slopes: weighted harmonic mean of adjacent secants at
/// interior knots, three-point one-sided formula at the ends.
fn pchip_slopes<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<T> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![del[0]; 2];
    }
    let mut d = vec![T::zero(); n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > T::zero() {
            let w1 = T::of(2.0) * h[k] + h[k - 1];
            let w2 = h[k] + T::of(2.0) * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn end_slope<T: Scalar>(h0: T, h1: T, del0: T, del1: T) -> T {
    let d = ((T::of(2.0) * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() || del0 == T::zero() {
        T::zero()
    } else if del0.signum() != del1.signum() && d.abs() > T::of(3.0) * del0.abs() {
        T::of(3.0) * del0
    } else {
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitModel<T> {
    Linear(LinearModel<T>),
    Pchip(PchipModel<T>),
}

impl<T: Scalar> FitModel<T> {
    pub fn eval(&self, x: T) -> T {
        match self {
            FitModel::Linear(m) => m.eval(x),
            FitModel::Pchip(m) => m.eval(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FitKind {
    Linear,
    Pchip,
}

impl fmt::Display for FitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitKind::Linear => "linear",
            FitKind::Pchip => "pchip",
        })
    }
}

pub fn eval_model<T: Scalar>(f: &FitModel<T>, x: T) -> T {
    f.eval(x)
}

/// Least-squares line through `(m, d)`, computed from centred data.
pub fn fit_linear<T: Scalar>(m: &[T], d: &[T]) -> Result<LinearModel<T>> {
    if m.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            got: d.len(),
        });
    }
    if m.len() < 2 {
        return Err(Error::TooFewKnots(m.len()));
    }
    let k = T::of_usize(m.len());
    let mm = m.iter().copied().sum::<T>() / k;
    let dm = d.iter().copied().sum::<T>() / k;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in m.iter().zip(d) {
        sxx += (x - mm) * (x - mm);
        sxy += (x - mm) * (y - dm);
    }
    if sxx == T::zero() {
        return Err(Error::RankDeficient);
    }
    let b = sxy / sxx;
    Ok(LinearModel { b, c: dm - b * mm })
}

/// PCHIP through `(M̂(s), D(J(s)))` for the selected positions `s`.
///
/// `d_vals` is aligned with `samples.sorted()`. Equal `M̂` values keep the
/// first sample.
pub fn fit_pchip<T: Scalar>(approx: &DiagApprox<T>, samples: &FitSampleSet, d_vals: &[T]) -> Result<PchipModel<T>> {
    let (x, y) = dedup_knots(approx, samples, d_vals)?;
    PchipModel::new(x, y)
}

fn dedup_knots<T: Scalar>(approx: &DiagApprox<T>, samples: &FitSampleSet, d_vals: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if d_vals.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: d_vals.len(),
        });
    }
    let mut x: Vec<T> = Vec::with_capacity(samples.len());
    let mut y: Vec<T> = Vec::with_capacity(samples.len());
    for (&p, &dv) in samples.sorted().iter().zip(d_vals) {
        if p >= approx.len() {
            return Err(Error::IndexOutOfRange {
                index: p,
                n: approx.len(),
            });
        }
        let xv = approx.sorted_value(p);
        if x.last() != Some(&xv) {
            x.push(xv);
            y.push(dv);
        }
    }
    Ok((x, y))
}

/// Fits the requested model. When the data cannot support it (a single
/// distinct `M` value) the fit degrades to the constant `mean(D)`.
pub fn fit_model<T: Scalar>(
    kind: FitKind,
    approx: &DiagApprox<T>,
    samples: &FitSampleSet,
    d_vals: &[T],
) -> Result<FitModel<T>> {
    let constant = || {
        let c = d_vals.iter().copied().sum::<T>() / T::of_usize(d_vals.len().max(1));
        FitModel::Linear(LinearModel { b: T::zero(), c })
    };
    match kind {
        FitKind::Pchip => {
            let (x, y) = dedup_knots(approx, samples, d_vals)?;
            if x.len() < 2 {
                return Ok(constant());
            }
            Ok(FitModel::Pchip(PchipModel::new(x, y)?))
        }
        FitKind::Linear => {
            let m: Vec<T> = samples.sorted().iter().map(|&p| approx.sorted_value(p)).collect();
            match fit_linear(&m, d_vals) {
                Err(Error::RankDeficient) => Ok(constant()),
                r => r.map(FitModel::Linear),
            }
        }
    }
}

/// `Σᵢ f(Mᵢ)`.
pub fn trace_from_fit<T: Scalar>(f: &FitModel<T>, m: &[T]) -> T {
    m.iter().map(|&x| f.eval(x)).sum()
}

/// `Dᵢ − f(Mᵢ)` for probed `(i, Dᵢ)` pairs, none of which may be in `s_fit`.
pub fn fitted_residual<T: Scalar>(f: &FitModel<T>, m: &[T], probes: &[(usize, T)], s_fit: &[usize]) -> Result<Vec<T>> {
    probes
        .iter()
        .map(|&(i, d)| {
            if i >= m.len() {
                return Err(Error::IndexOutOfRange { index: i, n: m.len() });
            }
            if s_fit.contains(&i) {
                return Err(Error::ProbeOverlap(i));
            }
            Ok(d - f.eval(m[i]))
        })
        .collect()
}
