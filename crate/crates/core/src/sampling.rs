//! Fitting-point selection on the sorted approximation `M̂`.
//!
//! Positions are 0-based here: position `p` of `M̂` holds `M(J(p))`.
//! Starting from both endpoints, the interval with the largest trapezoid
//! error is split where the largest triangle is cut off; every fifth
//! point bisects the widest interval instead. Once the largest error falls
//! below `rel_threshold·initErr`, the remaining budget is spent bisecting
//! the widest intervals.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use crate::approx::DiagApprox;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_REL_THRESHOLD: f64 = 1e-3;

/// Selected fitting indices in sorted and original order.
#[derive(Clone, Debug, PartialEq)]
pub struct FitSampleSet {
    sorted: Vec<usize>,
    original: Vec<usize>,
    /// Pending `(left, right, error)` intervals when selection stopped.
    queue_state: Vec<(usize, usize, f64)>,
}

impl FitSampleSet {
    /// Ascending positions in `M̂`.
    pub fn sorted(&self) -> &[usize] {
        &self.sorted
    }

    /// `J` applied to [`sorted`](Self::sorted), in the same order.
    pub fn original(&self) -> &[usize] {
        &self.original
    }

    pub fn queue_state(&self) -> &[(usize, usize, f64)] {
        &self.queue_state
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Same indices, positioned under a different approximation.
    pub fn remapped<T: Scalar>(&self, approx: &DiagApprox<T>) -> Result<Self> {
        let n = approx.len();
        if let Some(&bad) = self.original.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        let positions = self.original.iter().map(|&i| approx.position_of(i)).collect();
        Ok(Self::from_positions(positions, approx, Vec::new()))
    }

    fn from_positions<T: Scalar>(
        positions: BTreeSet<usize>,
        approx: &DiagApprox<T>,
        queue_state: Vec<(usize, usize, f64)>,
    ) -> Self {
        let sorted: Vec<usize> = positions.into_iter().collect();
        let original = sorted.iter().map(|&p| approx.sort_perm()[p]).collect();
        FitSampleSet {
            sorted,
            original,
            queue_state,
        }
    }
}

/// Which extremum of the split criterion picks the split point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SplitRule {
    /// Largest criterion value: the split cutting off the largest triangle,
    /// which removes the most trapezoid error.
    #[default]
    MaxArea,
    /// Smallest criterion value. Tends to split right next to an endpoint.
    MinArea,
}

/// Split criterion at `t` for the interval `[l, r]`: twice the area of the
/// triangle with corners at `l`, `t` and `r`.
fn split_value<T: Scalar>(m: &[T], l: usize, r: usize, t: usize) -> T {
    let (fl, fr, ft) = (T::of_usize(l), T::of_usize(r), T::of_usize(t));
    ((m[l] - m[r]) * (fl - fr) - (m[l] - m[t]) * (fl - ft) - (m[t] - m[r]) * (ft - fr)).abs()
}

/// [`trapezoid_split_with`] under the default rule.
pub fn trapezoid_split<T: Scalar>(m_hat: &[T], l: usize, r: usize) -> Result<(usize, T)> {
    trapezoid_split_with(m_hat, l, r, SplitRule::default())
}

/// Interior point of `[l, r]` chosen by `rule`, with its criterion value.
/// Ties go to the smallest `t`.
pub fn trapezoid_split_with<T: Scalar>(m_hat: &[T], l: usize, r: usize, rule: SplitRule) -> Result<(usize, T)> {
    if r >= m_hat.len() {
        return Err(Error::IndexOutOfRange {
            index: r,
            n: m_hat.len(),
        });
    }
    if r < l + 2 {
        return Err(Error::InvalidArgument(format!(
            "interval [{l}, {r}] has no interior point"
        )));
    }
    let mut best = (l + 1, split_value(m_hat, l, r, l + 1));
    for t in l + 2..r {
        let v = split_value(m_hat, l, r, t);
        let better = match rule {
            SplitRule::MaxArea => v > best.1,
            SplitRule::MinArea => v < best.1,
        };
        if better {
            best = (t, v);
        }
    }
    Ok(best)
}

/// Trapezoid estimate of `Σ M̂` using only the selected positions.
pub fn trapezoid_estimate<T: Scalar>(m_hat: &[T], positions: &[usize]) -> T {
    let mut est: T = positions.iter().map(|&p| m_hat[p]).sum();
    for w in positions.windows(2) {
        est += T::of_usize(w[1] - w[0] - 1) * (m_hat[w[0]] + m_hat[w[1]]) / T::of(2.0);
    }
    est
}

struct Prefix<T>(Vec<T>);

impl<T: Scalar> Prefix<T> {
    fn new(m: &[T]) -> Self {
        let mut p = Vec::with_capacity(m.len() + 1);
        let mut acc = T::zero();
        p.push(acc);
        for &v in m {
            acc += v;
            p.push(acc);
        }
        Prefix(p)
    }

    /// `|Σ_{l<j<r} M̂(j) − (r−l−1)(M̂(l)+M̂(r))/2|`: the error of replacing
    /// the interior of `[l, r]` by its chord.
    fn interval_error(&self, m: &[T], l: usize, r: usize) -> T {
        let interior = self.0[r] - self.0[l + 1];
        (interior - T::of_usize(r - l - 1) * (m[l] + m[r]) / T::of(2.0)).abs()
    }
}

#[derive(PartialEq)]
struct Entry {
    err: f64,
    left: usize,
    right: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .total_cmp(&other.err)
            .then_with(|| Reverse(self.left).cmp(&Reverse(other.left)))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Selection<'a, T> {
    m: &'a [T],
    prefix: Prefix<T>,
    points: BTreeSet<usize>,
    heap: BinaryHeap<Entry>,
}

impl<T: Scalar> Selection<'_, T> {
    fn is_current(&self, l: usize, r: usize) -> bool {
        self.points.contains(&l) && self.points.range(l + 1..).next() == Some(&r)
    }

    fn insert(&mut self, t: usize, l: usize, r: usize) {
        self.points.insert(t);
        for (a, b) in [(l, t), (t, r)] {
            if b >= a + 2 {
                let err = self.prefix.interval_error(self.m, a, b).as_f64();
                self.heap.push(Entry { err, left: a, right: b });
            }
        }
    }

    /// Widest current interval with an interior point; ties by left end.
    fn widest(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut it = self.points.iter();
        let mut prev = *it.next()?;
        for &p in it {
            if p - prev >= 2 && best.is_none_or(|(l, r)| p - prev > r - l) {
                best = Some((prev, p));
            }
            prev = p;
        }
        best
    }

    fn bisect_widest(&mut self) -> bool {
        match self.widest() {
            Some((l, r)) => {
                self.insert((l + r) / 2, l, r);
                true
            }
            None => false,
        }
    }

    fn peek_current(&mut self) -> Option<&Entry> {
        while let Some(top) = self.heap.peek() {
            if self.is_current(top.left, top.right) {
                break;
            }
            self.heap.pop();
        }
        self.heap.peek()
    }
}

/// Greedy fitting-point selection on the sorted approximation.
///
/// `max_pts` larger than `n` is clamped to `n`.
pub fn select_fit_points<T: Scalar>(
    approx: &DiagApprox<T>,
    max_pts: usize,
    rel_threshold: f64,
) -> Result<FitSampleSet> {
    select_fit_points_with(approx, max_pts, rel_threshold, SplitRule::default())
}

pub fn select_fit_points_with<T: Scalar>(
    approx: &DiagApprox<T>,
    max_pts: usize,
    rel_threshold: f64,
    rule: SplitRule,
) -> Result<FitSampleSet> {
    let n = approx.len();
    if n < 2 {
        return Err(Error::InvalidArgument("point selection needs n >= 2".into()));
    }
    if max_pts < 2 {
        return Err(Error::InvalidArgument(format!(
            "max_pts must be at least 2, got {max_pts}"
        )));
    }
    if rel_threshold.is_nan() || rel_threshold < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "rel_threshold must be nonnegative, got {rel_threshold}"
        )));
    }
    let max_pts = if max_pts > n {
        log::warn!("max_pts {max_pts} exceeds n = {n}; clamping");
        n
    } else {
        max_pts
    };
    let m = approx.sorted();
    let mut sel = Selection {
        m: &m,
        prefix: Prefix::new(&m),
        points: BTreeSet::new(),
        heap: BinaryHeap::new(),
    };
    sel.points.insert(0);
    sel.insert(n - 1, 0, n - 1);
    sel.points.insert(n - 1);
    let init_err = sel.prefix.interval_error(&m, 0, n - 1).as_f64();
    let threshold = rel_threshold * init_err;

    while sel.points.len() < max_pts {
        let Some(top) = sel.peek_current() else { break };
        if top.err <= threshold {
            break;
        }
        let Entry { left, right, .. } = sel.heap.pop().expect("peeked");
        let (t, _) = trapezoid_split_with(&m, left, right, rule)?;
        sel.insert(t, left, right);
        if sel.points.len().is_multiple_of(5) && sel.points.len() < max_pts {
            sel.bisect_widest();
        }
    }
    while sel.points.len() < max_pts {
        if !sel.bisect_widest() {
            break;
        }
    }
    let mut queue_state = Vec::new();
    while let Some(e) = sel.heap.pop() {
        if sel.is_current(e.left, e.right) {
            queue_state.push((e.left, e.right, e.err));
        }
    }
    Ok(FitSampleSet::from_positions(sel.points, approx, queue_state))
}

/// Grows `prev` to `target` points under a possibly updated `approx`,
/// keeping every index of `prev`.
///
/// A fresh selection of size `target` is made; each index of `prev` (by
/// its sorted position under `approx`) removes the closest fresh position,
/// ties to the smaller one, and the rest is merged in. Fresh endpoints are
/// only removed by an exact match, so the result can exceed `target` when
/// the endpoints of `M̂` moved away from `prev`.
pub fn grow_fit_points<T: Scalar>(
    prev: &FitSampleSet,
    approx: &DiagApprox<T>,
    target: usize,
    rel_threshold: f64,
) -> Result<FitSampleSet> {
    grow_fit_points_with(prev, approx, target, rel_threshold, SplitRule::default())
}

pub fn grow_fit_points_with<T: Scalar>(
    prev: &FitSampleSet,
    approx: &DiagApprox<T>,
    target: usize,
    rel_threshold: f64,
    rule: SplitRule,
) -> Result<FitSampleSet> {
    if target <= prev.len() {
        return Err(Error::InvalidArgument(format!(
            "target {target} must exceed the current {} points",
            prev.len()
        )));
    }
    let n = approx.len();
    if let Some(&bad) = prev.original().iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, n });
    }
    let fresh = select_fit_points_with(approx, target, rel_threshold, rule)?;
    let mut pool: BTreeSet<usize> = fresh.sorted().iter().copied().collect();
    let mut kept: Vec<usize> = prev.original().iter().map(|&i| approx.position_of(i)).collect();
    kept.sort_unstable();
    for &p in &kept {
        if pool.remove(&p) {
            continue;
        }
        let below = pool.range(1..p).next_back().copied().filter(|&q| q != 0 && q != n - 1);
        let above = pool.range(p..n - 1).next().copied().filter(|&q| q != 0);
        let pick = match (below, above) {
            (Some(b), Some(a)) => Some(if p - b <= a - p { b } else { a }),
            (b, a) => b.or(a),
        };
        if let Some(q) = pick {
            pool.remove(&q);
        }
    }
    pool.extend(kept);
    Ok(FitSampleSet::from_positions(pool, approx, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::ApproxSource;
    use proptest::prelude::*;

    fn approx(v: Vec<f64>) -> DiagApprox<f64> {
        DiagApprox::new(v, ApproxSource::Svd).unwrap()
    }

    fn brute(m: &[f64], l: usize, r: usize, rule: SplitRule) -> (usize, f64) {
        let vals: Vec<(usize, f64)> = (l + 1..r)
            .map(|t| {
                let (a, b, c) = (l as f64, r as f64, t as f64);
                (
                    t,
                    ((m[l] - m[r]) * (a - b) - (m[l] - m[t]) * (a - c) - (m[t] - m[r]) * (c - b)).abs(),
                )
            })
            .collect();
        let target = match rule {
            SplitRule::MaxArea => vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max),
            SplitRule::MinArea => vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min),
        };
        *vals.iter().find(|v| v.1 == target).unwrap()
    }

    #[test]
    fn split_on_small_step() {
        // Candidates t = 1: |0 - 0 - 1| = 1.
        let (t, err) = trapezoid_split(&[0.0, 0.0, 1.0], 0, 2).unwrap();
        assert_eq!(t, 1);
        assert_eq!(err, 1.0);
        assert!(trapezoid_split(&[0.0, 1.0], 0, 1).is_err());
    }

    #[test]
    fn linear_data_trips_threshold_immediately() {
        let m: Vec<f64> = (0..50).map(|i| 2.0 * i as f64 + 1.0).collect();
        let s = select_fit_points(&approx(m), 10, DEFAULT_REL_THRESHOLD).unwrap();
        // Pure bisection of [0, 49].
        assert_eq!(s.sorted(), &[0, 6, 12, 18, 24, 30, 36, 42, 45, 49]);
    }

    #[test]
    fn step_data_third_point() {
        let s = select_fit_points(&approx(vec![0.0, 0.0, 0.0, 10.0, 10.0]), 3, DEFAULT_REL_THRESHOLD).unwrap();
        // Criterion values over t = 1, 2, 3 are 10, 20, 10.
        assert_eq!(s.sorted(), &[0, 2, 4]);
        let m = [0.0, 0.0, 0.0, 10.0, 10.0];
        assert_eq!(trapezoid_split_with(&m, 0, 4, SplitRule::MinArea).unwrap(), (1, 10.0));
    }

    #[test]
    fn clamps_to_n() {
        let s = select_fit_points(&approx(vec![3.0, 1.0, 2.0]), 10, DEFAULT_REL_THRESHOLD).unwrap();
        assert_eq!(s.sorted(), &[0, 1, 2]);
        assert_eq!(s.original(), &[1, 2, 0]);
    }

    #[test]
    fn grow_by_one_keeps_previous() {
        let m: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 + (i as f64).sqrt()).collect();
        let a = approx(m);
        let prev = select_fit_points(&a, 8, DEFAULT_REL_THRESHOLD).unwrap();
        let next = grow_fit_points(&prev, &a, 9, DEFAULT_REL_THRESHOLD).unwrap();
        assert_eq!(next.len(), 9);
        assert!(prev.original().iter().all(|i| next.original().contains(i)));
        assert!(grow_fit_points(&prev, &a, 8, DEFAULT_REL_THRESHOLD).is_err());
    }

    proptest! {
        #[test]
        fn split_matches_scan(m in prop::collection::vec(-5i32..5, 3..40)) {
            let m: Vec<f64> = m.into_iter().map(f64::from).collect();
            let n = m.len();
            prop_assert_eq!(trapezoid_split(&m, 0, n - 1).unwrap(), brute(&m, 0, n - 1, SplitRule::MaxArea));
            let min = trapezoid_split_with(&m, 0, n - 1, SplitRule::MinArea).unwrap();
            prop_assert_eq!(min, brute(&m, 0, n - 1, SplitRule::MinArea));
        }

        #[test]
        fn endpoints_and_size(m in prop::collection::vec(0.0f64..1.0, 2..120), k in 2usize..40) {
            let a = approx(m);
            let s = select_fit_points(&a, k, DEFAULT_REL_THRESHOLD).unwrap();
            let n = a.len();
            prop_assert_eq!(s.len(), k.min(n));
            prop_assert_eq!(s.sorted()[0], 0);
            prop_assert_eq!(*s.sorted().last().unwrap(), n - 1);
            prop_assert!(s.sorted().windows(2).all(|w| w[0] < w[1]));
            for (&p, &i) in s.sorted().iter().zip(s.original()) {
                prop_assert_eq!(a.position_of(i), p);
            }
        }

        #[test]
        fn all_points_give_exact_trace(m in prop::collection::vec(0.0f64..1.0, 2..60)) {
            let a = approx(m);
            let s = select_fit_points(&a, a.len(), 0.0).unwrap();
            let est = trapezoid_estimate(&a.sorted(), s.sorted());
            prop_assert!((est - a.trace()).abs() < 1e-12);
        }

        #[test]
        fn growth_retains_and_hits_target(
            m in prop::collection::vec(0.0f64..1.0, 30..120),
            noise in prop::collection::vec(-0.05f64..0.05, 120),
            k in 3usize..15,
        ) {
            let a = approx(m.clone());
            let prev = select_fit_points(&a, k, DEFAULT_REL_THRESHOLD).unwrap();
            let b = approx(m.iter().zip(&noise).map(|(x, e)| x + e).collect());
            let next = grow_fit_points(&prev, &b, k + 1, DEFAULT_REL_THRESHOLD).unwrap();
            prop_assert!(prev.original().iter().all(|i| next.original().contains(i)));
            prop_assert!(next.len() > k);
            let n = a.len();
            prop_assert!(next.sorted().contains(&0) && next.sorted().contains(&(n - 1)));
        }

        #[test]
        fn sorted_values_are_lipschitz(m in prop::collection::vec(-10.0f64..10.0, 2..80)) {
            let s = approx(m).sorted();
            let delta = s.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            for i in 0..s.len() {
                for j in 0..s.len() {
                    prop_assert!((s[i] - s[j]).abs() <= delta * (i as f64 - j as f64).abs() + 1e-12);
                }
            }
        }
    }
}
