//! The dynamic fitting loop: grow the fitting set one point per step, refit,
//! estimate the variances of the Monte Carlo alternatives from the solved
//! columns, and track the relative trace error.

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::approx::{
    diag_from_lowrank, diag_inverse_from_ilu, estimate_spectrum_interval, ilu0, ilu_factorize, residual_column,
    smallest_singular_triplets, variational_bounds, ApproxInverse, DiagApprox, IluFactors, LowRankFactors, SvdOptions,
};
use crate::error::{Error, Result};
use crate::estimators::exact_variance_hutchinson;
use crate::fitting::{fit_model, fitted_residual, trace_from_fit, FitKind, FitModel};
use crate::matrix::{CsrMatrix, DenseInverse, DEFAULT_ORACLE_CAP};
use crate::report::CompareRow;
use crate::sampling::{grow_fit_points_with, select_fit_points_with, FitSampleSet, SplitRule, DEFAULT_REL_THRESHOLD};
use crate::scalar::{dot, Scalar};
use crate::solver::{ColumnSolve, ColumnSolver, SolverOptions};

/// First step of the loop; the error monitor starts one step later.
pub const FIRST_STEP: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IluMethod {
    /// ILU(0).
    Zero,
    /// Threshold ILU with column pivoting and the given drop tolerance.
    Threshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ApproxMethod {
    Ilu(IluMethod),
    /// Low-rank inverse from `2·i` smallest singular triplets at step `i`.
    Svd,
    /// Lower variational bound.
    Bounds,
}

impl fmt::Display for ApproxMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ApproxMethod::Ilu(IluMethod::Zero) => f.write_str("ilu0"),
            ApproxMethod::Ilu(IluMethod::Threshold(t)) => write!(f, "ilutp(droptol={t})"),
            ApproxMethod::Svd => f.write_str("svd"),
            ApproxMethod::Bounds => f.write_str("bounds"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DynamicConfig {
    pub approx: ApproxMethod,
    pub model: FitKind,
    pub max_pts: usize,
    /// Size of the holdout probe set.
    pub s_mc: usize,
    pub solver: SolverOptions,
    pub svd: SvdOptions,
    pub seed: u64,
    pub rel_threshold: f64,
    pub split_rule: SplitRule,
    /// Prefer the fitted trace once the monitored error is at most this.
    pub target_rel_error: Option<f64>,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            approx: ApproxMethod::Ilu(IluMethod::Threshold(1e-2)),
            model: FitKind::Pchip,
            max_pts: 20,
            s_mc: 10,
            solver: SolverOptions::default(),
            svd: SvdOptions::default(),
            seed: 0,
            rel_threshold: DEFAULT_REL_THRESHOLD,
            split_rule: SplitRule::default(),
            target_rel_error: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Followup {
    FittedTrace,
    McUnitOnEfit,
    McHutchOnE,
    McHutchOnAinv,
}

impl fmt::Display for Followup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Followup::FittedTrace => "fitted-trace",
            Followup::McUnitOnEfit => "mc-unit-on-Efit",
            Followup::McHutchOnE => "mc-hutch-on-E",
            Followup::McHutchOnAinv => "mc-hutch-on-Ainv",
        })
    }
}

/// Variance estimates at one step.
///
/// `v1`, `v2` are scaled for a budget of `s = |S_fit ∪ S_mc|` samples and
/// `v3` by `N²/(s_mc − 1)`; the `per_sample` triple is the single-sample
/// variance of each method, which is what [`Followup`] selection compares.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceEstimates<T> {
    pub v1: T,
    pub v2: Option<T>,
    pub v3: Option<T>,
    pub per_sample: [Option<T>; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord<T> {
    pub i: usize,
    pub k_i: usize,
    pub trace_fit: T,
    pub var: VarianceEstimates<T>,
    pub trace_err_est: Option<T>,
    pub trace_err_actual: Option<T>,
}

#[derive(Clone, Debug)]
pub struct DynamicTrajectory<T> {
    pub records: Vec<StepRecord<T>>,
    pub config: DynamicConfig,
    pub chosen_followup: Option<Followup>,
    pub s_fit: Vec<usize>,
    pub s_mc: Vec<usize>,
    /// Linear solves performed over the whole run.
    pub solves: usize,
    /// Set when a step failed; `records` holds the steps before it.
    pub aborted: Option<String>,
}

impl<T: Scalar> DynamicTrajectory<T> {
    pub fn final_trace(&self) -> Option<T> {
        self.records.last().map(|r| r.trace_fit)
    }
}

/// One monitor step: `temp` is `|T_i − T_{i−1}|/|T_i|`, `prev` is the
/// monitored error at `i − 1`.
pub fn next_trace_err<T: Scalar>(prev: T, temp: T, i: usize) -> T {
    let q = T::of_usize(i - 1) / T::of_usize(i);
    if prev == T::zero() || temp / prev >= q.powi(4) {
        temp
    } else {
        prev * q.powf(T::of(2.25))
    }
}

/// Monitored relative error at the last step for fitted traces `T_5..T_i`.
pub fn monitor_trace_error<T: Scalar>(trace_fits: &[T]) -> Result<T> {
    if trace_fits.len() < 2 {
        return Err(Error::InvalidArgument(
            "the error monitor needs traces from at least two steps".into(),
        ));
    }
    if let Some(j) = trace_fits.iter().position(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "trace at step {} is not finite",
            FIRST_STEP + j
        )));
    }
    let step = |j: usize| FIRST_STEP + j;
    if trace_fits[0] == T::zero() {
        return Err(Error::ZeroTrace(step(0)));
    }
    let mut err = (trace_fits[1] - trace_fits[0]).abs() / trace_fits[0].abs();
    for j in 2..trace_fits.len() {
        if trace_fits[j] == T::zero() {
            return Err(Error::ZeroTrace(step(j)));
        }
        let temp = (trace_fits[j] - trace_fits[j - 1]).abs() / trace_fits[j].abs();
        err = next_trace_err(err, temp, step(j));
    }
    Ok(err)
}

/// Variance estimates from solved columns over `S_fit ∪ S_mc`.
///
/// `residual_cols` are the matching columns of `E` (absent when the
/// approximation has no cheap inverse); `probes` are `(i, Dᵢ)` over the
/// holdout indices not in `s_fit`.
pub fn estimate_variances<T: Scalar>(
    columns: &[&ColumnSolve<T>],
    residual_cols: Option<&[Vec<T>]>,
    probes: &[(usize, T)],
    f: &FitModel<T>,
    m: &[T],
    s_fit: &[usize],
    n: usize,
) -> Result<VarianceEstimates<T>> {
    let s = columns.len();
    if s == 0 {
        return Err(Error::InvalidArgument("no solved columns".into()));
    }
    let nn = T::of_usize(n);
    let two_n = T::of(2.0) * nn;
    let fs = T::of_usize(s);
    let sum_a: T = columns.iter().map(|c| dot(&c.x, &c.x) - c.d * c.d).sum();
    let sum_e = match residual_cols {
        Some(cols) => {
            if cols.len() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    got: cols.len(),
                });
            }
            Some(
                cols.iter()
                    .zip(columns)
                    .map(|(e, c)| dot(e, e) - e[c.index] * e[c.index])
                    .sum::<T>(),
            )
        }
        None => None,
    };
    let (v3, unit) = if probes.len() >= 2 {
        let r = fitted_residual(f, m, probes, s_fit)?;
        let k = T::of_usize(r.len());
        let mean = r.iter().copied().sum::<T>() / k;
        let var = r.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (k - T::one());
        (Some(nn * nn / (k - T::one()) * var), Some(nn * nn * var))
    } else {
        (None, None)
    };
    Ok(VarianceEstimates {
        v1: two_n / (fs * fs) * sum_a,
        v2: sum_e.map(|e| two_n / (fs * fs) * e),
        v3,
        per_sample: [unit, sum_e.map(|e| two_n / fs * e), Some(two_n / fs * sum_a)],
    })
}

fn choose_followup<T: Scalar>(last: &StepRecord<T>, target: Option<f64>) -> Followup {
    if let (Some(t), Some(est)) = (target, last.trace_err_est) {
        if est.as_f64() <= t {
            return Followup::FittedTrace;
        }
    }
    let options = [Followup::McUnitOnEfit, Followup::McHutchOnE, Followup::McHutchOnAinv];
    let mut best = Followup::McHutchOnAinv;
    let mut best_v = f64::INFINITY;
    for (opt, v) in options.iter().zip(last.var.per_sample) {
        if let Some(v) = v {
            if v.as_f64() < best_v {
                best_v = v.as_f64();
                best = *opt;
            }
        }
    }
    best
}

fn build_source<T: Scalar>(
    a: &CsrMatrix<T>,
    method: ApproxMethod,
    svd_rank: usize,
    svd: &SvdOptions,
) -> Result<Source<T>> {
    Ok(match method {
        ApproxMethod::Ilu(method) => {
            let f = match method {
                IluMethod::Zero => ilu0(a)?,
                IluMethod::Threshold(t) => ilu_factorize(a, T::of(t))?,
            };
            let m = diag_inverse_from_ilu(&f)?;
            Source::Ilu(Box::new(f), m)
        }
        ApproxMethod::Svd => Source::Svd(smallest_singular_triplets(a, svd_rank, svd)?),
        ApproxMethod::Bounds => {
            let (lo, hi) = estimate_spectrum_interval(a)?;
            Source::Bounds(variational_bounds(a, lo, hi)?.0)
        }
    })
}

enum Source<T> {
    Ilu(Box<IluFactors<T>>, DiagApprox<T>),
    Svd(LowRankFactors<T>),
    Bounds(DiagApprox<T>),
}

struct Run<'a, T> {
    a: &'a CsrMatrix<T>,
    cfg: &'a DynamicConfig,
    columns: HashMap<usize, ColumnSolve<T>>,
    ilu_residuals: HashMap<usize, Vec<T>>,
}

impl<T: Scalar> Run<'_, T> {
    fn ensure_solved(&mut self, solver: &ColumnSolver<'_, T>, indices: &[usize]) -> Result<()> {
        for &i in indices {
            if let Entry::Vacant(slot) = self.columns.entry(i) {
                slot.insert(solver.solve(i)?);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        i: usize,
        source: &Source<T>,
        solver: &ColumnSolver<'_, T>,
        prev: Option<&FitSampleSet>,
        s_mc: &mut Vec<usize>,
        oracle_trace: Option<T>,
    ) -> Result<(FitSampleSet, StepRecord<T>)> {
        let n = self.a.order();
        let truncated;
        let (approx, inverse): (DiagApprox<T>, Option<ApproxInverse<'_, T>>) = match source {
            Source::Ilu(f, m) => (m.clone(), Some(ApproxInverse::Ilu(f))),
            Source::Bounds(m) => (m.clone(), None),
            Source::Svd(full) => {
                truncated = full.truncated((2 * i).min(full.rank()))?;
                (
                    crate::approx::diag_from_lowrank(&truncated)?,
                    Some(ApproxInverse::LowRank(&truncated)),
                )
            }
        };
        let set = match prev {
            None => select_fit_points_with(&approx, i, self.cfg.rel_threshold, self.cfg.split_rule)?,
            // Growth can overshoot by the endpoints when M̂ changes.
            Some(p) if p.len() >= i => p.remapped(&approx)?,
            Some(p) => grow_fit_points_with(p, &approx, i, self.cfg.rel_threshold, self.cfg.split_rule)?,
        };
        if prev.is_none() {
            *s_mc = draw_holdout(n, set.original(), self.cfg.s_mc, self.cfg.seed);
            self.ensure_solved(solver, s_mc)?;
        }
        self.ensure_solved(solver, set.original())?;

        let d_vals: Vec<T> = set.original().iter().map(|j| self.columns[j].d).collect();
        let f = fit_model(self.cfg.model, &approx, &set, &d_vals)?;
        let trace_fit = trace_from_fit(&f, approx.values());

        let union: BTreeSet<usize> = set.original().iter().chain(s_mc.iter()).copied().collect();
        let cols: Vec<&ColumnSolve<T>> = union.iter().map(|j| &self.columns[j]).collect();
        let residuals = match (&inverse, source) {
            (Some(inv), Source::Ilu(..)) => {
                let mut out = Vec::with_capacity(cols.len());
                for c in &cols {
                    if let Entry::Vacant(slot) = self.ilu_residuals.entry(c.index) {
                        slot.insert(residual_column(*inv, &c.x, c.index)?);
                    }
                    out.push(self.ilu_residuals[&c.index].clone());
                }
                Some(out)
            }
            (Some(inv), _) => Some(
                cols.iter()
                    .map(|c| residual_column(*inv, &c.x, c.index))
                    .collect::<Result<Vec<_>>>()?,
            ),
            (None, _) => None,
        };
        let fit_members: BTreeSet<usize> = set.original().iter().copied().collect();
        let probes: Vec<(usize, T)> = s_mc
            .iter()
            .filter(|j| !fit_members.contains(j))
            .map(|&j| (j, self.columns[&j].d))
            .collect();
        let var = estimate_variances(
            &cols,
            residuals.as_deref(),
            &probes,
            &f,
            approx.values(),
            set.original(),
            n,
        )?;
        let trace_err_actual = oracle_trace.map(|t| (trace_fit - t).abs() / t.abs());
        let record = StepRecord {
            i,
            k_i: set.len(),
            trace_fit,
            var,
            trace_err_est: None,
            trace_err_actual,
        };
        Ok((set, record))
    }
}

/// Holdout indices drawn without replacement from outside `exclude`.
fn draw_holdout(n: usize, exclude: &[usize], s_mc: usize, seed: u64) -> Vec<usize> {
    let excluded: BTreeSet<usize> = exclude.iter().copied().collect();
    let pool: Vec<usize> = (0..n).filter(|i| !excluded.contains(i)).collect();
    let k = s_mc.min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), k)
        .iter()
        .map(|p| pool[p])
        .collect();
    picked.sort_unstable();
    picked
}

/// Runs the loop for steps `5..=max_pts`. `oracle_trace`, when known, fills
/// the actual relative error column.
///
/// Setup failures are returned as errors; a failure inside the loop returns
/// the steps completed so far with [`DynamicTrajectory::aborted`] set.
pub fn run_dynamic<T: Scalar>(
    a: &CsrMatrix<T>,
    cfg: &DynamicConfig,
    oracle_trace: Option<T>,
) -> Result<DynamicTrajectory<T>> {
    let n = a.order();
    if n < FIRST_STEP {
        return Err(Error::InvalidArgument(format!(
            "matrix order {n} is below the first step size {FIRST_STEP}"
        )));
    }
    if cfg.max_pts < FIRST_STEP {
        return Err(Error::InvalidArgument(format!(
            "max_pts must be at least {FIRST_STEP}, got {}",
            cfg.max_pts
        )));
    }
    if cfg.s_mc < 2 {
        return Err(Error::InvalidArgument(format!(
            "the probe set needs at least 2 indices, got {}",
            cfg.s_mc
        )));
    }
    let max_pts = if cfg.max_pts > n {
        log::warn!("max_pts {} exceeds n = {n}; clamping", cfg.max_pts);
        n
    } else {
        cfg.max_pts
    };

    let source = build_source(a, cfg.approx, (2 * max_pts).min(n), &cfg.svd)?;
    let precond = match &source {
        Source::Ilu(f, _) => Some(&**f),
        _ => None,
    };
    let solver = ColumnSolver::new(a, precond, cfg.solver.clone())?;
    let mut run = Run {
        a,
        cfg,
        columns: HashMap::new(),
        ilu_residuals: HashMap::new(),
    };
    let mut records: Vec<StepRecord<T>> = Vec::new();
    let mut s_mc = Vec::new();
    let mut set: Option<FitSampleSet> = None;
    let mut aborted = None;
    for i in FIRST_STEP..=max_pts {
        match run.step(i, &source, &solver, set.as_ref(), &mut s_mc, oracle_trace) {
            Ok((next, mut rec)) => {
                if let Some(prev) = records.last() {
                    if rec.trace_fit == T::zero() || prev.trace_fit == T::zero() {
                        aborted = Some(Error::ZeroTrace(i).to_string());
                        break;
                    }
                    let temp = (rec.trace_fit - prev.trace_fit).abs();
                    rec.trace_err_est = Some(match prev.trace_err_est {
                        None => temp / prev.trace_fit.abs(),
                        Some(e) => next_trace_err(e, temp / rec.trace_fit.abs(), i),
                    });
                }
                log::info!("step {i}: {} points, trace {}", rec.k_i, rec.trace_fit);
                records.push(rec);
                set = Some(next);
            }
            Err(e) => {
                log::error!("step {i} failed: {e}");
                aborted = Some(e.to_string());
                break;
            }
        }
    }
    let chosen_followup = match (&aborted, records.last()) {
        (None, Some(last)) => Some(choose_followup(last, cfg.target_rel_error)),
        _ => None,
    };
    Ok(DynamicTrajectory {
        records,
        config: cfg.clone(),
        chosen_followup,
        s_fit: set.map(|s| s.original().to_vec()).unwrap_or_default(),
        s_mc,
        solves: solver.solve_count(),
        aborted,
    })
}

#[derive(Clone, Debug)]
pub struct CompareOptions {
    pub fit_points: usize,
    /// Sample budget the Hutchinson errors are quoted for.
    pub samples: usize,
    pub svd: SvdOptions,
    pub rel_threshold: f64,
    pub split_rule: SplitRule,
    pub oracle_cap: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            fit_points: 20,
            samples: 20,
            svd: SvdOptions::default(),
            rel_threshold: DEFAULT_REL_THRESHOLD,
            split_rule: SplitRule::default(),
            oracle_cap: DEFAULT_ORACLE_CAP,
        }
    }
}

/// Per approximation: relative trace error of the fitted model, and the
/// standard deviation of Hutchinson on `A⁻¹` and on `E` at `opts.samples`
/// samples relative to the trace. Needs the dense inverse of `a`.
///
/// The SVD source uses `2·fit_points` triplets; bounds have no `E` column.
pub fn compare_approximations<T: Scalar>(
    a: &CsrMatrix<T>,
    methods: &[ApproxMethod],
    opts: &CompareOptions,
) -> Result<Vec<CompareRow<T>>> {
    if opts.samples == 0 {
        return Err(Error::InvalidArgument("sample budget must be at least 1".into()));
    }
    let n = a.order();
    let oracle = DenseInverse::compute(a, opts.oracle_cap)?;
    let d = oracle.diagonal();
    let trace = oracle.trace().abs();
    let hutch_ainv = exact_variance_hutchinson(&oracle.inverse, opts.samples).sqrt() / trace;
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let source = build_source(a, method, (2 * opts.fit_points).min(n), &opts.svd)?;
        let lowrank_m;
        let (m, zinv) = match &source {
            Source::Ilu(f, m) => (m, Some(ApproxInverse::Ilu(f))),
            Source::Svd(f) => {
                lowrank_m = diag_from_lowrank(f)?;
                (&lowrank_m, Some(ApproxInverse::LowRank(f)))
            }
            Source::Bounds(m) => (m, None),
        };
        let set = select_fit_points_with(m, opts.fit_points, opts.rel_threshold, opts.split_rule)?;
        let d_vals: Vec<T> = set.original().iter().map(|&i| d[i]).collect();
        let f = fit_model(FitKind::Pchip, m, &set, &d_vals)?;
        let fit = trace_from_fit(&f, m.values());
        let hutch_e = match zinv {
            Some(z) => {
                let e = oracle.inverse.sub(&z.to_dense()?)?;
                Some(exact_variance_hutchinson(&e, opts.samples).sqrt() / trace)
            }
            None => None,
        };
        rows.push(CompareRow {
            source: method.to_string(),
            pchip_rel_err: (fit - oracle.trace()).abs() / trace,
            hutch_ainv_rel_err: hutch_ainv,
            hutch_e_rel_err: hutch_e,
        });
    }
    Ok(rows)
}
