//! Larger checks against independent oracles: nalgebra decompositions and
//! the dense inverse.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use diagfit::approx::{
    diag_from_lowrank, diag_inverse_from_ilu, ilu0, smallest_singular_triplets, variational_bounds, SvdOptions,
};
use diagfit::dynamics::{
    compare_approximations, estimate_variances, run_dynamic, ApproxMethod, CompareOptions, DynamicConfig, Followup,
    IluMethod,
};
use diagfit::estimators::{exact_variance_hutchinson, exact_variance_residuals, exact_variance_unit};
use diagfit::fitting::{fit_model, FitKind};
use diagfit::matrix::{gen_heatflow, gen_poisson2d, CsrMatrix, DenseInverse, DEFAULT_ORACLE_CAP};
use diagfit::sampling::{grow_fit_points, select_fit_points, DEFAULT_REL_THRESHOLD};
use diagfit::solver::{ColumnSolver, SolveMethod, SolverOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_nalgebra(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let rows = a.to_dense_rows();
    DMatrix::from_fn(a.order(), a.order(), |i, j| rows[i][j])
}

fn poisson50() -> &'static (CsrMatrix<f64>, Vec<f64>) {
    static CELL: OnceLock<(CsrMatrix<f64>, Vec<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let a = gen_poisson2d(50).unwrap();
        let d = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap().diagonal();
        (a, d)
    })
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    for (k, &i) in idx.iter().enumerate() {
        r[i] = k as f64;
    }
    r
}

#[test]
fn poisson_matvec_matches_dense() {
    let a = gen_poisson2d::<f64>(3).unwrap();
    let ones = vec![1.0; 9];
    let dense = to_nalgebra(&a) * nalgebra::DVector::from_element(9, 1.0);
    let got = a.matvec(&ones).unwrap();
    for (g, w) in got.iter().zip(dense.iter()) {
        assert_eq!(g, w);
    }
}

#[test]
fn dense_inverse_matches_nalgebra() {
    let a = gen_heatflow::<f64>(7, 0.4).unwrap();
    let inv = to_nalgebra(&a).try_inverse().unwrap();
    let d = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap().diagonal();
    for (i, di) in d.iter().enumerate() {
        assert!((di - inv[(i, i)]).abs() < 1e-13);
    }
}

#[test]
fn solver_columns_match_oracle() {
    let a = gen_poisson2d::<f64>(30).unwrap();
    let d = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap().diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let idx: Vec<usize> = rand::seq::index::sample(&mut rng, a.order(), 20).into_vec();
    let f = ilu0(&a).unwrap();
    for method in [SolveMethod::Direct, SolveMethod::Cg, SolveMethod::BiCgStab] {
        let opts = SolverOptions {
            method,
            tol: 1e-10,
            ..SolverOptions::default()
        };
        let solver = ColumnSolver::new(&a, Some(&f), opts).unwrap();
        for c in solver.solve_columns(&idx).unwrap() {
            assert!((c.d - d[c.index]).abs() < 1e-8, "{method:?} column {}", c.index);
        }
        assert_eq!(solver.solve_count(), 20);
    }
}

#[test]
fn smallest_singular_values_match_nalgebra() {
    let a = gen_poisson2d::<f64>(20).unwrap();
    let f = smallest_singular_triplets(&a, 5, &SvdOptions::default()).unwrap();
    let mut sv: Vec<f64> = to_nalgebra(&a).singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    for (got, want) in f.sigma().iter().zip(&sv) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
    // Nonsymmetric input as well.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 40;
    let mut trip = Vec::new();
    for i in 0..n {
        trip.push((i, i, 3.0 + rng.random_range(0.0..1.0)));
        trip.push((i, (i + 1) % n, rng.random_range(-1.0..1.0)));
        trip.push((i, (i + 7) % n, rng.random_range(-1.0..1.0)));
    }
    let b = CsrMatrix::from_triplets(n, &trip).unwrap();
    let f = smallest_singular_triplets(&b, 4, &SvdOptions::default()).unwrap();
    let mut sv: Vec<f64> = to_nalgebra(&b).singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    for (got, want) in f.sigma().iter().zip(&sv) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn variational_bounds_bracket_the_diagonal() {
    let a = gen_poisson2d::<f64>(10).unwrap();
    let eig = to_nalgebra(&a).symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let d = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap().diagonal();
    let (lower, upper) = variational_bounds(&a, lo, hi).unwrap();
    for (i, di) in d.iter().enumerate() {
        assert!(
            lower.values()[i] <= di + 1e-12 && *di <= upper.values()[i] + 1e-12,
            "row {i}"
        );
    }
}

#[test]
fn ilu0_diagonal_follows_the_inverse() {
    let (a, d) = poisson50();
    let m = diag_inverse_from_ilu(&ilu0(a).unwrap()).unwrap();
    let (tm, td) = (m.trace(), d.iter().sum::<f64>());
    assert!((tm - td).abs() <= 0.5 * td, "Tr(M) {tm} vs Tr(D) {td}");
    assert!(pearson(m.values(), d) > 0.5);
}

#[test]
fn selected_points_are_nearly_monotone_in_d() {
    let (a, d) = poisson50();
    let f = smallest_singular_triplets(a, 40, &SvdOptions::default()).unwrap();
    let m = diag_from_lowrank(&f).unwrap();
    let s = select_fit_points(&m, 20, DEFAULT_REL_THRESHOLD).unwrap();
    let dv: Vec<f64> = s.original().iter().map(|&i| d[i]).collect();
    let order: Vec<f64> = (0..dv.len()).map(|k| k as f64).collect();
    let rho = pearson(&ranks(&dv), &order);
    assert!(rho > 0.9, "Spearman {rho}");
}

#[test]
fn growth_after_one_more_singular_pair() {
    let a = gen_poisson2d::<f64>(20).unwrap();
    let f = smallest_singular_triplets(&a, 12, &SvdOptions::default()).unwrap();
    let m5 = diag_from_lowrank(&f.truncated(10).unwrap()).unwrap();
    let m6 = diag_from_lowrank(&f.truncated(11).unwrap()).unwrap();
    let prev = select_fit_points(&m5, 5, DEFAULT_REL_THRESHOLD).unwrap();
    let next = grow_fit_points(&prev, &m6, 6, DEFAULT_REL_THRESHOLD).unwrap();
    let before: BTreeSet<_> = prev.original().iter().collect();
    let after: BTreeSet<_> = next.original().iter().collect();
    assert!(before.is_subset(&after));
    assert!(after.len() >= 6);
}

#[test]
fn fitting_reduces_diagonal_variance() {
    let a = gen_poisson2d::<f64>(20).unwrap();
    let oracle = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap();
    let d = oracle.diagonal();
    let f = ilu0(&a).unwrap();
    let m = diag_inverse_from_ilu(&f).unwrap();
    let s = select_fit_points(&m, 20, DEFAULT_REL_THRESHOLD).unwrap();
    let dv: Vec<f64> = s.original().iter().map(|&i| d[i]).collect();
    let model = fit_model(FitKind::Pchip, &m, &s, &dv).unwrap();
    let zinv = diagfit::approx::ApproxInverse::Ilu(&f).to_dense().unwrap();
    let v = exact_variance_residuals(&oracle.inverse, &zinv, &model, m.values(), 1).unwrap();
    assert!(v.unit_efit < exact_variance_unit(&d, 1));
}

#[test]
fn v1_from_all_columns_matches_closed_form() {
    let a = gen_poisson2d::<f64>(30).unwrap();
    let n = a.order();
    let oracle = DenseInverse::compute(&a, DEFAULT_ORACLE_CAP).unwrap();
    let solver = ColumnSolver::new(&a, None, SolverOptions::default()).unwrap();
    let all: Vec<usize> = (0..n).collect();
    let cols = solver.solve_columns(&all).unwrap();
    let refs: Vec<_> = cols.iter().collect();
    let m = diag_inverse_from_ilu(&ilu0(&a).unwrap()).unwrap();
    let model = diagfit::fitting::FitModel::Linear(diagfit::fitting::LinearModel { b: 1.0, c: 0.0 });
    let v = estimate_variances(&refs, None, &[], &model, m.values(), &all, n).unwrap();
    let exact = exact_variance_hutchinson(&oracle.inverse, n);
    assert!((v.v1 - exact).abs() <= 0.3 * exact, "{} vs {exact}", v.v1);
}

#[test]
fn dynamic_poisson_svd_meets_tolerance() {
    let (a, d) = poisson50();
    let tr: f64 = d.iter().sum();
    let cfg = DynamicConfig {
        approx: ApproxMethod::Svd,
        max_pts: 20,
        ..DynamicConfig::default()
    };
    let t = run_dynamic(a, &cfg, Some(tr)).unwrap();
    assert!(t.aborted.is_none());
    assert_eq!(t.records.len(), 16);
    let err = (t.final_trace().unwrap() - tr).abs() / tr;
    assert!(err <= 5e-2, "{err}");
    // Every solved column belongs to the final fitting or probe set.
    let union: BTreeSet<usize> = t.s_fit.iter().chain(&t.s_mc).copied().collect();
    assert_eq!(t.solves, union.len());
}

#[test]
fn dynamic_heatflow_prefers_fitted_residual_sampling() {
    let a = gen_heatflow::<f64>(50, 0.25).unwrap();
    let cfg = DynamicConfig {
        max_pts: 20,
        ..DynamicConfig::default()
    };
    let t = run_dynamic(&a, &cfg, None).unwrap();
    let last = t.records.last().unwrap();
    let [efit, _, ainv] = last.var.per_sample;
    assert!(efit.unwrap() < ainv.unwrap());
    assert_eq!(t.chosen_followup, Some(Followup::McUnitOnEfit));
    let union: BTreeSet<usize> = t.s_fit.iter().chain(&t.s_mc).copied().collect();
    assert_eq!(t.solves, union.len());
}

#[test]
fn dynamic_ilu0_on_heatflow_keeps_fit_growing() {
    let a = gen_heatflow::<f64>(20, 0.25).unwrap();
    let cfg = DynamicConfig {
        approx: ApproxMethod::Ilu(IluMethod::Zero),
        max_pts: 15,
        ..DynamicConfig::default()
    };
    let t = run_dynamic(&a, &cfg, None).unwrap();
    assert!(t.records.windows(2).all(|w| w[1].k_i > w[0].k_i));
    assert!(t
        .records
        .iter()
        .skip(1)
        .all(|r| r.trace_err_est.is_some_and(|e| e >= 0.0)));
}

#[test]
fn comparison_rows_are_finite_and_repeatable() {
    let a = gen_poisson2d::<f64>(20).unwrap();
    let methods = [
        ApproxMethod::Ilu(IluMethod::Zero),
        ApproxMethod::Svd,
        ApproxMethod::Bounds,
    ];
    let rows = compare_approximations(&a, &methods, &CompareOptions::default()).unwrap();
    assert_eq!(
        rows,
        compare_approximations(&a, &methods, &CompareOptions::default()).unwrap()
    );
    for r in &rows {
        assert!(r.pchip_rel_err.is_finite() && r.hutch_ainv_rel_err.is_finite());
    }
    assert!(rows[2].hutch_e_rel_err.is_none());
}
