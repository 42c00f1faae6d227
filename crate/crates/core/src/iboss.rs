//! Single-block IBOSS selection.
//!
//! For each covariate in turn, the rows not yet selected are gathered, the
//! r-th smallest and r-th largest of their values become thresholds, and a
//! sequential scan takes up to `r` rows at or below the lower threshold and
//! up to `r` rows at or above the upper one. Ties are resolved by scan order,
//! and a row that qualifies for both tails goes to the lower tail first.
//! The scan stops as soon as `k` rows are held.

use crate::data::{DataBlock, SelectionResult};
use crate::error::{Error, Result};
use crate::quickselect::tail_thresholds_in_place;

/// Subdata size and the derived per-tail quota `r = ceil(k / 2p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IbossParams {
    pub k: usize,
    pub r: usize,
}

impl IbossParams {
    pub fn new(k: usize, p: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("subdata size k must be positive".into()));
        }
        if p == 0 {
            return Err(Error::InvalidParameter("need at least one covariate".into()));
        }
        Ok(Self {
            k,
            r: tail_quota(k, p),
        })
    }

    /// True when `r` matches `ceil(k / 2p)`.
    pub fn is_consistent(&self, p: usize) -> bool {
        p > 0 && self.r == tail_quota(self.k, p)
    }
}

pub fn tail_quota(k: usize, p: usize) -> usize {
    k.div_ceil(2 * p)
}

/// Rows picked from one block, in local (block-relative) index space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalSelection {
    pub rows: Vec<usize>,
    pub per_covariate_counts: Vec<(usize, usize)>,
    pub degenerate_covariates: Vec<usize>,
}

/// Runs the selection on one in-memory block and reports global indices.
pub fn iboss_select(block: &DataBlock, k: usize) -> Result<SelectionResult> {
    let local = select_local(block, k)?;
    Ok(to_global(block, local, k))
}

pub(crate) fn to_global(block: &DataBlock, local: LocalSelection, k: usize) -> SelectionResult {
    let mut indices: Vec<usize> = local.rows.iter().map(|&i| block.global_index(i)).collect();
    indices.sort_unstable();
    SelectionResult {
        indices,
        requested_k: k,
        per_covariate_counts: local.per_covariate_counts,
        degenerate_covariates: local.degenerate_covariates,
    }
}

/// Selection in block-relative row indices, sorted ascending.
pub fn select_local(block: &DataBlock, k: usize) -> Result<LocalSelection> {
    let n = block.rows();
    let p = block.n_covariates();
    let params = IbossParams::new(k, p)?;
    if k > n {
        return Err(Error::QuotaInfeasible { k, rows: n });
    }
    let r = params.r;

    let mut selected: Vec<usize> = Vec::with_capacity(k + 2 * r);
    let mut scratch: Vec<f64> = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(p);
    let mut degenerate = Vec::new();

    for j in 0..p {
        if selected.len() >= k {
            counts.push((0, 0));
            continue;
        }
        selected.sort_unstable();
        let column = block.column(j);

        // Merge scan against the sorted selection to collect the remaining values.
        scratch.clear();
        let mut s = 0;
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, &v) in column.iter().enumerate() {
            if s < selected.len() && selected[s] == i {
                s += 1;
            } else {
                scratch.push(v);
                min = min.min(v);
                max = max.max(v);
            }
        }
        if min == max {
            degenerate.push(j);
        }

        // With fewer remaining rows than r both thresholds admit every row.
        let quota = r.min(scratch.len());
        let t = tail_thresholds_in_place(&mut scratch, quota)?;

        let before = selected.len();
        let (mut taken_lower, mut taken_upper) = (0usize, 0usize);
        let mut s = 0;
        for (i, &v) in column.iter().enumerate() {
            if selected.len() >= k || (taken_lower >= r && taken_upper >= r) {
                break;
            }
            if s < before && selected[s] == i {
                s += 1;
            } else if taken_lower < r && v <= t.lower {
                selected.push(i);
                taken_lower += 1;
            } else if taken_upper < r && v >= t.upper {
                selected.push(i);
                taken_upper += 1;
            }
        }
        counts.push((taken_lower, taken_upper));
    }

    selected.sort_unstable();
    Ok(LocalSelection {
        rows: selected,
        per_covariate_counts: counts,
        degenerate_covariates: degenerate,
    })
}
