//! Fraction of variance explained and the transition filter built on it.
//!
//! For returns `R` and value predictions `V` over a batch,
//! `vex = 1 − Σ(R_t − V_t)² / Σ(R_t − ⟨R⟩)²`. A value of 1 means the value
//! function explains the returns perfectly, 0 means it does no better than
//! the batch mean, and negative values mean it does worse.
//!
//! The filter keeps a visited state when the predicted vex at that state is
//! large relative to the running median of earlier predictions:
//! `|vex(s_t)| / (|median(vex(s_0..t−1))| + ε₀) ≥ ρ`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Default filter threshold.
pub const DEFAULT_RHO: f64 = 0.3;
/// Default Laplace term added to the median magnitude.
pub const DEFAULT_EPS0: f64 = 1e-8;
/// Value reported when the returns have zero spread but the predictions miss.
pub const DEGENERATE_SENTINEL: f64 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VexBatchStat {
    pub vex: f64,
    pub sample_count: usize,
    pub return_mean: f64,
    /// All returns were equal, so the ratio was undefined.
    pub degenerate: bool,
}

/// Batch fraction of variance explained.
///
/// When every return is identical the ratio is undefined; the result is then
/// 1 for a perfect prediction and [`DEGENERATE_SENTINEL`] otherwise.
pub fn vex_of_batch(returns: &[f64], values: &[f64]) -> Result<VexBatchStat> {
    if returns.is_empty() {
        return Err(Error::Usage("variance explained of an empty batch".into()));
    }
    if returns.len() != values.len() {
        return Err(Error::Dimension {
            context: "vex values",
            expected: returns.len(),
            got: values.len(),
        });
    }
    // Welford accumulation for the spread of the returns.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut sse = 0.0;
    for (k, (&r, &v)) in returns.iter().zip(values).enumerate() {
        let d = r - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (r - mean);
        sse += (r - v) * (r - v);
    }
    let first = returns[0];
    let degenerate = returns.iter().all(|&r| r == first);
    let vex = if degenerate {
        if sse == 0.0 {
            1.0
        } else {
            DEGENERATE_SENTINEL
        }
    } else {
        1.0 - sse / m2
    };
    Ok(VexBatchStat {
        vex,
        sample_count: returns.len(),
        return_mean: if degenerate { first } else { mean },
        degenerate,
    })
}

/// Adjusted variance explained `1 − (1 − vex)(n − 1)/(n − p − 1)` for `n`
/// samples and `p` predictors.
pub fn adjusted_vex(vex: f64, n: usize, p: usize) -> Result<f64> {
    if n <= p + 1 {
        return Err(Error::Usage(format!(
            "adjusted variance explained needs n > p + 1, got n = {n}, p = {p}"
        )));
    }
    Ok(1.0 - (1.0 - vex) * (n - 1) as f64 / (n - p - 1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Exact running median over everything inserted so far.
#[derive(Clone, Debug, Default)]
pub struct MedianTracker {
    // Lower half; its top is the largest value of the lower half.
    low: BinaryHeap<Key>,
    high: BinaryHeap<Reverse<Key>>,
}

impl MedianTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.low.len() + self.high.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.low.clear();
        self.high.clear();
    }

    pub fn insert(&mut self, x: f64) {
        match self.low.peek() {
            Some(top) if x > top.0 => self.high.push(Reverse(Key(x))),
            _ => self.low.push(Key(x)),
        }
        if self.low.len() > self.high.len() + 1 {
            let k = self.low.pop().unwrap();
            self.high.push(Reverse(k));
        } else if self.high.len() > self.low.len() {
            let Reverse(k) = self.high.pop().unwrap();
            self.low.push(k);
        }
    }

    /// Median of the inserted values, averaging the two central values for
    /// even counts. An empty tracker reports 0.
    pub fn median(&self) -> f64 {
        match (self.low.peek(), self.high.peek()) {
            (None, _) => 0.0,
            (Some(lo), Some(Reverse(hi))) if self.low.len() == self.high.len() => {
                (lo.0 + hi.0) / 2.0
            }
            (Some(lo), _) => lo.0,
        }
    }
}

/// Which central statistic of past predictions the filter compares against.
#[derive(Clone, Debug)]
pub enum ReferenceTracker {
    Median(MedianTracker),
    Mean { sum: f64, count: usize },
}

impl ReferenceTracker {
    pub fn median() -> Self {
        ReferenceTracker::Median(MedianTracker::new())
    }

    pub fn mean() -> Self {
        ReferenceTracker::Mean { sum: 0.0, count: 0 }
    }

    pub fn insert(&mut self, x: f64) {
        match self {
            ReferenceTracker::Median(m) => m.insert(x),
            ReferenceTracker::Mean { sum, count } => {
                *sum += x;
                *count += 1;
            }
        }
    }

    /// Current reference value; 0 before any insertion.
    pub fn center(&self) -> f64 {
        match self {
            ReferenceTracker::Median(m) => m.median(),
            ReferenceTracker::Mean { count: 0, .. } => 0.0,
            ReferenceTracker::Mean { sum, count } => sum / *count as f64,
        }
    }

    pub fn clear(&mut self) {
        match self {
            ReferenceTracker::Median(m) => m.clear(),
            ReferenceTracker::Mean { sum, count } => {
                *sum = 0.0;
                *count = 0;
            }
        }
    }
}

/// `|prediction| / (|reference| + ε₀) ≥ ρ`.
pub fn passes_filter(prediction: f64, reference: f64, rho: f64, eps0: f64) -> bool {
    prediction.abs() / (reference.abs() + eps0) >= rho
}

/// Filter verdict for one visited state against the tracker's current
/// reference. The caller inserts `prediction` afterwards.
pub fn accept_transition(prediction: f64, tracker: &ReferenceTracker, rho: f64, eps0: f64) -> bool {
    rho <= 0.0 || passes_filter(prediction, tracker.center(), rho, eps0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(r: &[f64], v: &[f64]) -> f64 {
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let sse: f64 = r.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        let sst: f64 = r.iter().map(|a| (a - mean).powi(2)).sum();
        1.0 - sse / sst
    }

    fn sort_median(xs: &[f64]) -> f64 {
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        }
    }

    #[test]
    fn anchor_cases() {
        let r = [1.0, 2.0, 3.0];
        assert_eq!(vex_of_batch(&r, &r).unwrap().vex, 1.0);
        assert_eq!(vex_of_batch(&r, &[2.0; 3]).unwrap().vex, 0.0);
        assert_eq!(vex_of_batch(&r, &[0.0; 3]).unwrap().vex, -6.0);
    }

    #[test]
    fn degenerate_batches_use_the_sentinel() {
        let s = vex_of_batch(&[2.0; 4], &[2.0; 4]).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.vex, 1.0);
        let s = vex_of_batch(&[2.0; 4], &[1.0; 4]).unwrap();
        assert_eq!(s.vex, DEGENERATE_SENTINEL);
        assert_eq!(s.return_mean, 2.0);
    }

    #[test]
    fn empty_and_ragged_inputs_are_errors() {
        assert!(matches!(vex_of_batch(&[], &[]), Err(Error::Usage(_))));
        assert!(vex_of_batch(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn adjusted_cases() {
        assert_eq!(adjusted_vex(1.0, 20, 3).unwrap(), 1.0);
        assert!((adjusted_vex(0.0, 11, 1).unwrap() + 1.0 / 9.0).abs() < 1e-15);
        assert!((adjusted_vex(0.42, 1_000_000, 1).unwrap() - 0.42).abs() < 1e-6);
        assert!(matches!(adjusted_vex(0.5, 2, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn filter_examples() {
        let t = ReferenceTracker::median();
        assert!(accept_transition(0.0, &t, 0.0, DEFAULT_EPS0));
        assert!(passes_filter(0.5, 0.5, 0.3, 1e-8));
        assert!(!passes_filter(0.01, 0.5, 0.3, 1e-8));
        // Empty tracker: reference 0, so any non-zero prediction passes.
        assert!(accept_transition(1e-6, &t, 0.3, 1e-8));
    }

    #[test]
    fn median_examples() {
        let mut m = MedianTracker::new();
        assert_eq!(m.median(), 0.0);
        m.insert(3.0);
        assert_eq!(m.median(), 3.0);
        let mut m = MedianTracker::new();
        for x in [1.0, 10.0, 2.0] {
            m.insert(x);
        }
        assert_eq!(m.median(), 2.0);
        m.insert(4.0);
        assert_eq!(m.median(), 3.0);
    }

    #[test]
    fn mean_reference() {
        let mut t = ReferenceTracker::mean();
        assert_eq!(t.center(), 0.0);
        for x in [1.0, 2.0, 6.0] {
            t.insert(x);
        }
        assert_eq!(t.center(), 3.0);
        t.clear();
        assert_eq!(t.center(), 0.0);
    }

    fn batch() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..64).prop_flat_map(|n| {
            (
                proptest::collection::vec(-100.0..100.0f64, n),
                proptest::collection::vec(-100.0..100.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_two_pass_and_is_at_most_one((r, v) in batch()) {
            let s = vex_of_batch(&r, &v).unwrap();
            let want = two_pass(&r, &v);
            prop_assert!((s.vex - want).abs() <= 1e-10 * want.abs().max(1.0));
            prop_assert!(s.vex <= 1.0 + 1e-12);
        }

        #[test]
        fn permutation_shift_and_scale_invariance(
            (r, v) in batch(),
            shift in -50.0..50.0f64,
            scale in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64],
            rot in 0usize..64,
        ) {
            let base = vex_of_batch(&r, &v).unwrap().vex;
            let k = rot % r.len();
            let (mut rp, mut vp) = (r.clone(), v.clone());
            rp.rotate_left(k);
            vp.rotate_left(k);
            rp.swap(0, r.len() - 1);
            vp.swap(0, r.len() - 1);
            let tol = 1e-9 * base.abs().max(1.0);
            prop_assert!((vex_of_batch(&rp, &vp).unwrap().vex - base).abs() <= tol);
            let rs: Vec<f64> = r.iter().map(|x| x + shift).collect();
            let vs: Vec<f64> = v.iter().map(|x| x + shift).collect();
            prop_assert!((vex_of_batch(&rs, &vs).unwrap().vex - base).abs() <= tol);
            let rc: Vec<f64> = r.iter().map(|x| x * scale).collect();
            let vc: Vec<f64> = v.iter().map(|x| x * scale).collect();
            prop_assert!((vex_of_batch(&rc, &vc).unwrap().vex - base).abs() <= tol);
        }

        #[test]
        fn median_matches_sort_on_every_prefix(xs in proptest::collection::vec(-1e3..1e3f64, 1..300)) {
            let mut m = MedianTracker::new();
            for (i, &x) in xs.iter().enumerate() {
                m.insert(x);
                prop_assert_eq!(m.median(), sort_median(&xs[..=i]));
            }
        }

        #[test]
        fn raising_rho_never_turns_reject_into_accept(
            pred in -2.0..2.0f64,
            reference in -2.0..2.0f64,
            rho_lo in 0.0..3.0f64,
            bump in 0.0..3.0f64,
        ) {
            let lo = passes_filter(pred, reference, rho_lo, DEFAULT_EPS0);
            let hi = passes_filter(pred, reference, rho_lo + bump, DEFAULT_EPS0);
            prop_assert!(lo || !hi);
        }
    }
}
