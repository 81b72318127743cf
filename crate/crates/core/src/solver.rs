//! Exact diagonal entries `Dᵢ = eᵢᵀA⁻¹eᵢ` by solving `A·x = eᵢ`.
//!
//! Up to the direct-solve cap the banded LU is used; above it, conjugate
//! gradients for symmetric matrices and BiCGSTAB otherwise, both optionally
//! preconditioned with ILU factors.

use std::cell::{Cell, OnceCell};

use crate::approx::{IluFactors, IluKind};
use crate::error::{Error, Result};
use crate::matrix::{BandLu, CsrMatrix, DEFAULT_ORACLE_CAP};
use crate::scalar::{axpy, dot, norm2, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Auto,
    Direct,
    Cg,
    BiCgStab,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Bound on `‖A·x − eᵢ‖₂`.
    pub tol: f64,
    pub method: SolveMethod,
    /// `Auto` solves directly up to this order.
    pub direct_cap: usize,
    /// Iteration cap for the Krylov methods; `None` means `max(1000, 10·n)`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            method: SolveMethod::Auto,
            direct_cap: DEFAULT_ORACLE_CAP,
            max_iter: None,
        }
    }
}

/// Column `x = A⁻¹eᵢ` and its diagonal entry.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSolve<T> {
    pub index: usize,
    pub x: Vec<T>,
    pub d: T,
    pub residual_norm: T,
}

/// Column solver bound to one matrix; counts the solves it performs.
pub struct ColumnSolver<'a, T> {
    a: &'a CsrMatrix<T>,
    precond: Option<&'a IluFactors<T>>,
    opts: SolverOptions,
    method: SolveMethod,
    direct: OnceCell<BandLu<T>>,
    solves: Cell<usize>,
}

impl<'a, T: Scalar> ColumnSolver<'a, T> {
    pub fn new(a: &'a CsrMatrix<T>, precond: Option<&'a IluFactors<T>>, opts: SolverOptions) -> Result<Self> {
        if opts.tol.is_nan() || opts.tol < 1e-14 {
            return Err(Error::InvalidArgument(format!(
                "solver tolerance must be >= 1e-14, got {}",
                opts.tol
            )));
        }
        if let Some(p) = precond {
            if p.order() != a.order() {
                return Err(Error::DimensionMismatch {
                    expected: a.order(),
                    got: p.order(),
                });
            }
        }
        let method = match opts.method {
            SolveMethod::Auto if a.order() <= opts.direct_cap => SolveMethod::Direct,
            SolveMethod::Auto if a.is_symmetric() && precond.is_none_or(|p| p.kind() == IluKind::Zero) => {
                SolveMethod::Cg
            }
            SolveMethod::Auto => SolveMethod::BiCgStab,
            m => m,
        };
        Ok(ColumnSolver {
            a,
            precond,
            opts,
            method,
            direct: OnceCell::new(),
            solves: Cell::new(0),
        })
    }

    /// The method `Auto` resolved to.
    pub fn method(&self) -> SolveMethod {
        self.method
    }

    /// Number of columns solved so far.
    pub fn solve_count(&self) -> usize {
        self.solves.get()
    }

    pub fn solve(&self, index: usize) -> Result<ColumnSolve<T>> {
        let n = self.a.order();
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
        let mut e = vec![T::zero(); n];
        e[index] = T::one();
        let tol = T::of(self.opts.tol);
        let x = match self.method {
            SolveMethod::Direct => self.solve_direct(&e)?,
            SolveMethod::Cg => self.krylov(&e, index, cg)?,
            SolveMethod::BiCgStab | SolveMethod::Auto => self.krylov(&e, index, bicgstab)?,
        };
        let residual_norm = residual(self.a, &x, &e)?;
        if residual_norm > tol {
            return Err(Error::NoConvergence {
                column: index,
                iterations: 0,
                residual: residual_norm.as_f64(),
            });
        }
        self.solves.set(self.solves.get() + 1);
        Ok(ColumnSolve {
            index,
            d: x[index],
            x,
            residual_norm,
        })
    }

    /// Solves each index in order; indices must be distinct.
    pub fn solve_columns(&self, indices: &[usize]) -> Result<Vec<ColumnSolve<T>>> {
        let mut seen = vec![false; self.a.order()];
        for &i in indices {
            if i >= seen.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    n: seen.len(),
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("index {i} requested twice")));
            }
        }
        indices.iter().map(|&i| self.solve(i)).collect()
    }

    fn solve_direct(&self, e: &[T]) -> Result<Vec<T>> {
        let lu = match self.direct.get() {
            Some(lu) => lu,
            None => {
                let lu = BandLu::factor(self.a)?;
                self.direct.get_or_init(|| lu)
            }
        };
        let tol = T::of(self.opts.tol);
        let mut x = lu.solve(e)?;
        // A couple of refinement steps for ill-conditioned inputs.
        for _ in 0..3 {
            let ax = self.a.matvec(&x)?;
            let r: Vec<T> = e.iter().zip(&ax).map(|(&b, &y)| b - y).collect();
            if norm2(&r) <= tol {
                break;
            }
            let dx = lu.solve(&r)?;
            axpy(T::one(), &dx, &mut x);
        }
        Ok(x)
    }

    fn krylov(&self, e: &[T], index: usize, method: KrylovFn<T>) -> Result<Vec<T>> {
        let n = self.a.order();
        let max_iter = self.opts.max_iter.unwrap_or((10 * n).max(1000));
        let tol = T::of(self.opts.tol);
        let mut x = vec![T::zero(); n];
        let mut used = 0;
        // Restart from the current iterate when the recurrence residual has
        // drifted from the true one.
        for _ in 0..4 {
            let (it, _) = method(self.a, self.precond, e, &mut x, tol * T::of(0.5), max_iter - used)?;
            used += it;
            let r = residual(self.a, &x, e)?;
            if r <= tol {
                return Ok(x);
            }
            if used >= max_iter {
                return Err(Error::NoConvergence {
                    column: index,
                    iterations: used,
                    residual: r.as_f64(),
                });
            }
        }
        let r = residual(self.a, &x, e)?;
        Err(Error::NoConvergence {
            column: index,
            iterations: used,
            residual: r.as_f64(),
        })
    }
}

/// Solves the listed columns with default options apart from `tol`.
pub fn solve_columns<T: Scalar>(
    a: &CsrMatrix<T>,
    indices: &[usize],
    tol: f64,
    precond: Option<&IluFactors<T>>,
) -> Result<Vec<ColumnSolve<T>>> {
    ColumnSolver::new(
        a,
        precond,
        SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )?
    .solve_columns(indices)
}

type KrylovFn<T> = fn(&CsrMatrix<T>, Option<&IluFactors<T>>, &[T], &mut [T], T, usize) -> Result<(usize, T)>;

fn residual<T: Scalar>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> Result<T> {
    let ax = a.matvec(x)?;
    Ok(norm2(&b.iter().zip(&ax).map(|(&p, &q)| p - q).collect::<Vec<T>>()))
}

fn precondition<T: Scalar>(p: Option<&IluFactors<T>>, r: &[T]) -> Result<Vec<T>> {
    match p {
        Some(f) => f.solve(r),
        None => Ok(r.to_vec()),
    }
}

fn cg<T: Scalar>(
    a: &CsrMatrix<T>,
    p: Option<&IluFactors<T>>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<(usize, T)> {
    let ax = a.matvec(x)?;
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&b, &y)| b - y).collect();
    let mut rn = norm2(&r);
    if rn <= tol {
        return Ok((0, rn));
    }
    let mut z = precondition(p, &r)?;
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ad = a.matvec(&d)?;
        let dad = dot(&d, &ad);
        if dad == T::zero() {
            return Ok((it, rn));
        }
        let alpha = rz / dad;
        axpy(alpha, &d, x);
        axpy(-alpha, &ad, &mut r);
        rn = norm2(&r);
        if rn <= tol {
            return Ok((it, rn));
        }
        z = precondition(p, &r)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (di, &zi) in d.iter_mut().zip(&z) {
            *di = zi + beta * *di;
        }
    }
    Ok((max_iter, rn))
}

fn bicgstab<T: Scalar>(
    a: &CsrMatrix<T>,
    p: Option<&IluFactors<T>>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<(usize, T)> {
    let n = b.len();
    let ax = a.matvec(x)?;
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&b, &y)| b - y).collect();
    let mut rn = norm2(&r);
    if rn <= tol {
        return Ok((0, rn));
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut v = vec![T::zero(); n];
    let mut dir = vec![T::zero(); n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() {
            return Ok((it, rn));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            dir[i] = r[i] + beta * (dir[i] - omega * v[i]);
        }
        let dir_hat = precondition(p, &dir)?;
        v = a.matvec(&dir_hat)?;
        let rv = dot(&r_hat, &v);
        if rv == T::zero() {
            return Ok((it, rn));
        }
        alpha = rho / rv;
        let s: Vec<T> = r.iter().zip(&v).map(|(&ri, &vi)| ri - alpha * vi).collect();
        axpy(alpha, &dir_hat, x);
        let sn = norm2(&s);
        if sn <= tol {
            return Ok((it, sn));
        }
        let s_hat = precondition(p, &s)?;
        let t = a.matvec(&s_hat)?;
        let tt = dot(&t, &t);
        omega = if tt == T::zero() { T::zero() } else { dot(&t, &s) / tt };
        axpy(omega, &s_hat, x);
        for i in 0..n {
            r[i] = s[i] - omega * t[i];
        }
        rn = norm2(&r);
        if rn <= tol || omega == T::zero() {
            return Ok((it, rn));
        }
    }
    Ok((max_iter, rn))
}
