//! Partition-based order statistics.
//!
//! `select_nth_in_place` is an iterative quickselect with three-way
//! partitioning, so runs of equal values collapse in one pass. Pivots are the
//! median of three until a split keeps more than three quarters of the range
//! a few times in a row; after that a pseudorandom pivot is used.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};

const INSERTION_CUTOFF: usize = 16;
const BAD_SPLITS_BEFORE_RANDOM: u32 = 3;

/// Order-statistic thresholds for one covariate tail pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailThresholds {
    /// `u_(r)`, the r-th smallest value.
    pub lower: f64,
    /// `u_(n-r+1)`, the r-th largest value.
    pub upper: f64,
    pub r: usize,
}

/// Returns the `k`-th smallest value (1-based) without touching `values`.
pub fn kth_smallest(values: &[f64], k: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > values.len() {
        return Err(Error::IndexOutOfRange { k, len: values.len() });
    }
    let mut scratch = values.to_vec();
    Ok(select_nth_in_place(&mut scratch, k - 1))
}

/// Returns `(u_(r), u_(n-r+1))` for `values`, leaving the input untouched.
pub fn tail_thresholds(values: &[f64], r: usize) -> Result<TailThresholds> {
    let mut scratch = values.to_vec();
    tail_thresholds_in_place(&mut scratch, r)
}

/// Like [`tail_thresholds`] but permutes `scratch`.
pub fn tail_thresholds_in_place(scratch: &mut [f64], r: usize) -> Result<TailThresholds> {
    let n = scratch.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if r == 0 {
        return Err(Error::IndexOutOfRange { k: 0, len: n });
    }
    if r > n {
        return Err(Error::QuotaTooLarge { r, len: n });
    }
    if let Some(t) = prefiltered_tails(scratch, r) {
        return Ok(t);
    }
    let lo_idx = r - 1;
    let hi_idx = n - r;
    let lower = select_nth_in_place(scratch, lo_idx);
    // After selection everything at or beyond lo_idx is >= lower, so the
    // upper order statistic can be found in that suffix.
    let upper = if hi_idx >= lo_idx {
        select_nth_in_place(&mut scratch[lo_idx..], hi_idx - lo_idx)
    } else {
        select_nth_in_place(&mut scratch[..=lo_idx], hi_idx)
    };
    Ok(TailThresholds { lower, upper, r })
}

const PREFILTER_MIN_LEN: usize = 4096;
const PREFILTER_SAMPLE: usize = 512;

/// Tail thresholds for small `r` from one filtering pass.
///
/// Cutoffs come from order statistics of an evenly strided sample, placed a
/// few standard deviations past the expected position of `u_(r)`. Every value
/// at or below the lower cutoff is collected; if at least `r` are, the `r`
/// smallest values all lie in that set and its `r`-th smallest is exact. The
/// upper tail is symmetric. Returns `None` when the sample guess misses or
/// the candidate sets are not small, and the caller does full selection.
fn prefiltered_tails(v: &[f64], r: usize) -> Option<TailThresholds> {
    let n = v.len();
    if n < PREFILTER_MIN_LEN || r * 16 > n {
        return None;
    }
    let step = n / PREFILTER_SAMPLE;
    let mut sample: Vec<f64> = (0..PREFILTER_SAMPLE).map(|i| v[i * step + step / 2]).collect();
    sample.sort_unstable_by(f64::total_cmp);
    let expected = r as f64 * PREFILTER_SAMPLE as f64 / n as f64;
    let pos = (expected + 3.0 * expected.sqrt() + 2.0).ceil() as usize;
    if 2 * pos >= PREFILTER_SAMPLE {
        return None;
    }
    let (lo_cut, hi_cut) = (sample[pos], sample[PREFILTER_SAMPLE - 1 - pos]);
    if lo_cut >= hi_cut {
        return None;
    }

    let cap = n / 8;
    let mut low = Vec::with_capacity(4 * pos * step);
    let mut high = Vec::with_capacity(4 * pos * step);
    for &x in v {
        if x <= lo_cut {
            low.push(x);
        } else if x >= hi_cut {
            high.push(x);
        }
    }
    if low.len() < r || high.len() < r || low.len() > cap || high.len() > cap {
        return None;
    }
    let lower = select_nth_in_place(&mut low, r - 1);
    let m = high.len();
    let upper = select_nth_in_place(&mut high, m - r);
    Some(TailThresholds { lower, upper, r })
}

/// Rearranges `v` so that `v[k]` holds the value it would have after sorting,
/// with nothing larger before it and nothing smaller after it. `k` is 0-based.
///
/// Panics if `k >= v.len()`. Values must be free of NaN.
pub fn select_nth_in_place(v: &mut [f64], k: usize) -> f64 {
    assert!(k < v.len(), "select index {k} out of bounds for {}", v.len());
    let mut lo = 0;
    let mut hi = v.len();
    let mut bad_splits = 0u32;
    let mut rng: Option<SmallRng> = None;

    loop {
        let len = hi - lo;
        if len <= INSERTION_CUTOFF {
            insertion_sort(&mut v[lo..hi]);
            return v[k];
        }

        let pivot = if bad_splits < BAD_SPLITS_BEFORE_RANDOM {
            median_of_three(v[lo], v[lo + len / 2], v[hi - 1])
        } else {
            let rng = rng.get_or_insert_with(|| SmallRng::seed_from_u64(len as u64));
            v[lo + rng.random_range(0..len)]
        };

        let (lt, gt) = partition3(&mut v[lo..hi], pivot);
        let (lt, gt) = (lo + lt, lo + gt);

        if k < lt {
            hi = lt;
        } else if k >= gt {
            lo = gt;
        } else {
            return pivot;
        }

        if (hi - lo) * 4 > len * 3 {
            bad_splits += 1;
        } else {
            bad_splits = 0;
        }
    }
}

/// Dutch-flag partition: returns `(lt, gt)` with `v[..lt] < pivot`,
/// `v[lt..gt] == pivot`, `v[gt..] > pivot`.
fn partition3(v: &mut [f64], pivot: f64) -> (usize, usize) {
    let mut lt = 0;
    let mut i = 0;
    let mut gt = v.len();
    while i < gt {
        let x = v[i];
        if x < pivot {
            v.swap(lt, i);
            lt += 1;
            i += 1;
        } else if x > pivot {
            gt -= 1;
            v.swap(i, gt);
        } else {
            i += 1;
        }
    }
    (lt, gt)
}

fn median_of_three(a: f64, b: f64, c: f64) -> f64 {
    if a < b {
        if b < c {
            b
        } else if a < c {
            c
        } else {
            a
        }
    } else if a < c {
        a
    } else if b < c {
        c
    } else {
        b
    }
}

fn insertion_sort(v: &mut [f64]) {
    for i in 1..v.len() {
        let x = v[i];
        let mut j = i;
        while j > 0 && v[j - 1] > x {
            v[j] = v[j - 1];
            j -= 1;
        }
        v[j] = x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sorted(values: &[f64]) -> Vec<f64> {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        s
    }

    #[test]
    fn spec_examples() {
        assert_eq!(kth_smallest(&[5.0, 1.0, 4.0, 2.0, 3.0], 2).unwrap(), 2.0);
        assert_eq!(kth_smallest(&[7.0], 1).unwrap(), 7.0);
        assert_eq!(kth_smallest(&[3.0, 3.0, 3.0, 1.0], 3).unwrap(), 3.0);
    }

    #[test]
    fn thresholds_examples() {
        let t = tail_thresholds(&[0.0, 0.25, 0.5, 0.75, 1.0], 2).unwrap();
        assert_eq!((t.lower, t.upper), (0.25, 0.75));
        let t = tail_thresholds(&[1.0, 2.0], 1).unwrap();
        assert_eq!((t.lower, t.upper), (1.0, 2.0));
        let t = tail_thresholds(&[4.0; 6], 2).unwrap();
        assert_eq!((t.lower, t.upper), (4.0, 4.0));
    }

    #[test]
    fn thresholds_when_tails_cross() {
        // r larger than half the vector: lower is above upper.
        let t = tail_thresholds(&[3.0, 1.0, 2.0], 3).unwrap();
        assert_eq!((t.lower, t.upper), (3.0, 1.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(kth_smallest(&[], 1), Err(Error::EmptyInput)));
        assert!(matches!(kth_smallest(&[1.0], 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(kth_smallest(&[1.0], 2), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(tail_thresholds(&[1.0, 2.0], 3), Err(Error::QuotaTooLarge { r: 3, len: 2 })));
    }

    #[test]
    fn input_is_not_permuted() {
        let v = vec![9.0, 1.0, 8.0, 2.0, 7.0];
        let before = v.clone();
        let _ = kth_smallest(&v, 3).unwrap();
        let _ = tail_thresholds(&v, 2).unwrap();
        assert_eq!(v, before);
    }

    #[test]
    fn prefilter_on_structured_inputs() {
        let ascending: Vec<f64> = (0..50_000).map(f64::from).collect();
        let sawtooth: Vec<f64> = (0..50_000).map(|i| f64::from(i % 97)).collect();
        let spike: Vec<f64> = (0..50_000).map(|i| if i % 1000 == 0 { 1e9 } else { 0.0 }).collect();
        for v in [ascending, sawtooth, spike] {
            let s = sorted(&v);
            for r in [1, 5, 40, 3000] {
                let t = tail_thresholds(&v, r).unwrap();
                assert_eq!((t.lower, t.upper), (s[r - 1], s[v.len() - r]));
            }
        }
    }

    #[test]
    fn adversarial_inputs() {
        let ascending: Vec<f64> = (0..5000).map(f64::from).collect();
        let descending: Vec<f64> = ascending.iter().rev().copied().collect();
        let organ: Vec<f64> = (0..2500).chain((0..2500).rev()).map(f64::from).collect();
        for v in [ascending, descending, organ] {
            let s = sorted(&v);
            for k in [1, 2, 17, 2500, 4999, 5000] {
                assert_eq!(kth_smallest(&v, k).unwrap(), s[k - 1]);
            }
        }
    }

    proptest! {
        #[test]
        fn agrees_with_sort(v in prop::collection::vec(-1e6f64..1e6, 1..400), pick in 0usize..10_000) {
            let s = sorted(&v);
            let k = pick % v.len() + 1;
            prop_assert_eq!(kth_smallest(&v, k).unwrap(), s[k - 1]);
        }

        #[test]
        fn prefiltered_thresholds_are_exact(
            v in prop::collection::vec(-1e3f64..1e3, 4096..12_000),
            r in 1usize..300,
            levels in 0u32..3,
        ) {
            // Coarse rounding creates heavy ties at the cutoffs.
            let v: Vec<f64> = match levels {
                0 => v,
                1 => v.iter().map(|x| x.round()).collect(),
                _ => v.iter().map(|x| (x / 200.0).round()).collect(),
            };
            let s = sorted(&v);
            let t = tail_thresholds(&v, r).unwrap();
            prop_assert_eq!(t.lower, s[r - 1]);
            prop_assert_eq!(t.upper, s[v.len() - r]);
        }

        #[test]
        fn duplicate_heavy(v in prop::collection::vec(0u8..4, 1..300), r in 1usize..50) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let r = r.min(v.len());
            let t = tail_thresholds(&v, r).unwrap();
            let below = v.iter().filter(|&&x| x < t.lower).count();
            let at_or_below = v.iter().filter(|&&x| x <= t.lower).count();
            prop_assert!(below < r && at_or_below >= r);
            let above = v.iter().filter(|&&x| x > t.upper).count();
            let at_or_above = v.iter().filter(|&&x| x >= t.upper).count();
            prop_assert!(above < r && at_or_above >= r);
        }
    }
}
