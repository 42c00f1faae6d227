//! Divide-and-conquer selection and estimation across row blocks.
//!
//! Each block is reduced independently with subdata size `ceil(k / B)`; the
//! per-block subdata are either pooled into one least squares fit or fitted
//! separately and combined with inverse-covariance weights.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{balanced_sizes, DataBlock, OlsFit, SelectionResult};
use crate::error::{Error, Result};
use crate::estimation::{ols_fit, symmetrize};
use crate::iboss::{select_local, tail_quota, to_global};

/// How rows are assigned to blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partitioning {
    /// Consecutive row ranges in storage order.
    Sequential,
    /// A seeded permutation of rows, chunked into consecutive ranges.
    RandomShuffle { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DncParams {
    pub k: usize,
    /// Number of partitions `B`.
    pub blocks: usize,
    /// Rows per block, `ceil(N / B)`.
    pub rows_per_block: usize,
    /// Per-tail, per-block quota `ceil(k / 2pB)`.
    pub r_b: usize,
    pub partitioning: Partitioning,
    /// Upper bound on worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl DncParams {
    /// Validates the quota guard: `k / (2pB) < 1` is an error.
    pub fn new(k: usize, blocks: usize, n_rows: usize, p: usize, partitioning: Partitioning) -> Result<Self> {
        if blocks == 0 || p == 0 || k == 0 {
            return Err(Error::InvalidParameter("k, B and p must all be positive".into()));
        }
        if k < 2 * p * blocks {
            return Err(Error::QuotaUnderflow { k, p, blocks });
        }
        Ok(Self {
            k,
            blocks,
            rows_per_block: n_rows.div_ceil(blocks),
            r_b: tail_quota(k, p * blocks),
            partitioning,
            threads: None,
        })
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads.max(1));
        self
    }

    /// Subdata size requested from every block.
    pub fn k_b(&self) -> usize {
        self.k.div_ceil(self.blocks)
    }
}

/// Inverse-covariance weighted combination of per-block fits.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFit {
    pub beta: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub per_block_fits: Vec<OlsFit>,
}

/// Combined selection plus the per-block pieces it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DncSelection {
    pub combined: SelectionResult,
    pub per_block: Vec<SelectionResult>,
}

/// Maps `f` over blocks, in parallel when allowed, preserving block order.
pub(crate) fn map_blocks<T, F>(blocks: &[DataBlock], threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&DataBlock) -> Result<T> + Sync + Send,
{
    match threads {
        Some(1) => blocks.iter().map(&f).collect(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| blocks.par_iter().map(&f).collect())
        }
        None => blocks.par_iter().map(&f).collect(),
    }
}

fn check_blocks(blocks: &[DataBlock], params: &DncParams) -> Result<usize> {
    if blocks.len() != params.blocks {
        return Err(Error::InvalidParameter(format!(
            "expected {} blocks, got {}",
            params.blocks,
            blocks.len()
        )));
    }
    let p = blocks[0].n_covariates();
    if params.k < 2 * p * params.blocks {
        return Err(Error::QuotaUnderflow { k: params.k, p, blocks: params.blocks });
    }
    let k_b = params.k_b();
    for (b, block) in blocks.iter().enumerate() {
        if block.n_covariates() != p {
            return Err(Error::DimensionMismatch { expected: p, found: block.n_covariates() });
        }
        if block.rows() < k_b {
            return Err(Error::BlockTooSmall { block: b, rows: block.rows(), needed: k_b });
        }
    }
    Ok(k_b)
}

/// Union of the per-block selections, in global indices.
pub fn run_dnc_select(blocks: &[DataBlock], params: &DncParams) -> Result<SelectionResult> {
    Ok(run_dnc_select_detailed(blocks, params)?.combined)
}

pub fn run_dnc_select_detailed(blocks: &[DataBlock], params: &DncParams) -> Result<DncSelection> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k_b = check_blocks(blocks, params)?;
    let per_block = map_blocks(blocks, params.threads, |block| {
        select_local(block, k_b).map(|local| to_global(block, local, k_b))
    })?;
    let combined = combine_selections(&per_block, params.k, blocks[0].n_covariates());
    Ok(DncSelection { combined, per_block })
}

/// Merges disjoint per-block selections; tail counts are summed.
pub fn combine_selections(per_block: &[SelectionResult], k: usize, p: usize) -> SelectionResult {
    let mut indices: Vec<usize> = per_block.iter().flat_map(|s| s.indices.iter().copied()).collect();
    indices.sort_unstable();
    let mut counts = vec![(0usize, 0usize); p];
    let mut degenerate = Vec::new();
    for s in per_block {
        for (acc, &(lo, hi)) in counts.iter_mut().zip(&s.per_covariate_counts) {
            acc.0 += lo;
            acc.1 += hi;
        }
        degenerate.extend_from_slice(&s.degenerate_covariates);
    }
    degenerate.sort_unstable();
    degenerate.dedup();
    SelectionResult {
        indices,
        requested_k: k,
        per_covariate_counts: counts,
        degenerate_covariates: degenerate,
    }
}

/// Gathers the rows of `selection` from `blocks` into one block, in block order.
pub fn gather_subdata(blocks: &[DataBlock], selection: &SelectionResult) -> Result<DataBlock> {
    let mut pieces = Vec::with_capacity(blocks.len());
    for block in blocks {
        let mine: Vec<usize> = selection
            .indices
            .iter()
            .copied()
            .filter(|&g| block.local_indices(&[g]).is_some())
            .collect();
        let local = block
            .local_indices(&mine)
            .ok_or_else(|| Error::InvalidParameter("selection does not match blocks".into()))?;
        pieces.push(block.subset(&local));
    }
    DataBlock::concat(&pieces)
}

/// Pools the selected rows of all blocks and fits one least squares model.
pub fn run_dnc_pooled_fit(
    blocks: &[DataBlock],
    params: &DncParams,
    sigma2: Option<f64>,
) -> Result<(DncSelection, OlsFit)> {
    let selection = run_dnc_select_detailed(blocks, params)?;
    let mut pieces = Vec::with_capacity(blocks.len());
    for (block, sel) in blocks.iter().zip(&selection.per_block) {
        let local = block
            .local_indices(&sel.indices)
            .ok_or_else(|| Error::InvalidParameter("selection does not match block".into()))?;
        pieces.push(block.subset(&local));
    }
    let subdata = DataBlock::concat(&pieces)?;
    let y = subdata.responses().ok_or(Error::MissingResponses)?;
    let fit = ols_fit(&subdata.design_matrix(), y, sigma2)?;
    Ok((selection, fit))
}

/// Fits each block's subdata separately and combines the estimates with
/// inverse-covariance weights.
///
/// With a common known `sigma2` the result equals the pooled fit; with
/// `None`, each block's covariance uses its own residual variance.
pub fn run_dnc_aggregate(blocks: &[DataBlock], params: &DncParams, sigma2: Option<f64>) -> Result<AggregatedFit> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k_b = check_blocks(blocks, params)?;
    let fits = map_blocks(blocks, params.threads, |block| {
        let local = select_local(block, k_b)?;
        let sub = block.subset(&local.rows);
        let y = sub.responses().ok_or(Error::MissingResponses)?;
        ols_fit(&sub.design_matrix(), y, sigma2).map_err(|e| Error::SingularBlockFit {
            block: block.block_index(),
            source: Box::new(e),
        })
    })?;
    aggregate_fits(fits)
}

/// `beta = (sum M_b)^{-1} sum M_b beta_b` with `M_b = cov_b^{-1}`, summed in
/// block order.
pub fn aggregate_fits(fits: Vec<OlsFit>) -> Result<AggregatedFit> {
    let first = fits.first().ok_or(Error::EmptyInput)?;
    let d = first.beta.len();
    let mut info = DMatrix::zeros(d, d);
    let mut weighted = DVector::zeros(d);
    for (b, fit) in fits.iter().enumerate() {
        if fit.beta.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: fit.beta.len() });
        }
        let m = fit
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularBlockFit {
                block: b,
                source: Box::new(Error::SingularDesign { rcond: 0.0 }),
            })?
            .inverse();
        weighted += &m * &fit.beta;
        info += m;
    }
    symmetrize(&mut info);
    let chol = info.cholesky().ok_or(Error::SingularDesign { rcond: 0.0 })?;
    let beta = chol.solve(&weighted);
    let mut cov = chol.inverse();
    symmetrize(&mut cov);
    Ok(AggregatedFit { beta, cov, per_block_fits: fits })
}

/// A seeded permutation of `0..n_rows` cut into `blocks` consecutive chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAssignment {
    pub order: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl BlockAssignment {
    /// Rows of block `b` as they appear in the permutation.
    pub fn block(&self, b: usize) -> &[usize] {
        let start: usize = self.sizes[..b].iter().sum();
        &self.order[start..start + self.sizes[b]]
    }

    /// Block number of every row.
    pub fn block_of_rows(&self) -> Vec<usize> {
        let mut owner = vec![0; self.order.len()];
        let mut at = 0;
        for (b, &len) in self.sizes.iter().enumerate() {
            for &row in &self.order[at..at + len] {
                owner[row] = b;
            }
            at += len;
        }
        owner
    }

    /// Rows of each block sorted ascending, the order in which an out-of-core
    /// scatter writes them.
    pub fn sorted_blocks(&self) -> Vec<Vec<usize>> {
        (0..self.sizes.len())
            .map(|b| {
                let mut rows = self.block(b).to_vec();
                rows.sort_unstable();
                rows
            })
            .collect()
    }
}

/// Deterministic pseudorandom assignment of rows to `blocks` blocks whose
/// sizes differ by at most one.
pub fn shuffle_assignment(n_rows: usize, blocks: usize, seed: u64) -> Result<BlockAssignment> {
    if blocks == 0 || blocks > n_rows {
        return Err(Error::InvalidParameter(format!(
            "cannot assign {n_rows} rows to {blocks} nonempty blocks"
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    Ok(BlockAssignment { order, sizes: balanced_sizes(n_rows, blocks) })
}

/// Forms in-memory blocks from a full dataset held as one block.
pub fn partition_in_memory(data: &DataBlock, blocks: usize, partitioning: Partitioning) -> Result<Vec<DataBlock>> {
    match partitioning {
        Partitioning::Sequential => data.partition_balanced(blocks),
        Partitioning::RandomShuffle { seed } => {
            let assignment = shuffle_assignment(data.rows(), blocks, seed)?;
            assignment
                .sorted_blocks()
                .into_iter()
                .enumerate()
                .map(|(b, rows)| {
                    let mut block = data.subset(&rows);
                    block = block.with_placement(b, 0);
                    Ok(block)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::design_matrix;
    use crate::iboss::iboss_select;

    fn column_block(values: &[f64], offset: usize, index: usize) -> DataBlock {
        DataBlock::new(DMatrix::from_column_slice(values.len(), 1, values), None)
            .unwrap()
            .with_placement(index, offset)
    }

    #[test]
    fn two_block_golden() {
        let blocks = vec![
            column_block(&[0.0, 1.0, 2.0, 3.0], 0, 0),
            column_block(&[10.0, 11.0, 12.0, 13.0], 4, 1),
        ];
        let params = DncParams::new(4, 2, 8, 1, Partitioning::Sequential).unwrap();
        assert_eq!((params.k_b(), params.r_b), (2, 1));
        let s = run_dnc_select(&blocks, &params).unwrap();
        assert_eq!(s.indices, vec![0, 3, 4, 7]);
    }

    #[test]
    fn single_block_matches_iboss() {
        let vals: Vec<f64> = (0..40).map(|i| ((i * 37) % 41) as f64).collect();
        let block = column_block(&vals, 0, 0);
        let params = DncParams::new(10, 1, 40, 1, Partitioning::Sequential).unwrap();
        assert_eq!(run_dnc_select(std::slice::from_ref(&block), &params).unwrap(), iboss_select(&block, 10).unwrap());
    }

    #[test]
    fn minimal_quota_takes_one_per_tail() {
        // k = 2pB: every block contributes one row per tail per covariate.
        let z = DMatrix::from_fn(60, 2, |i, j| ((i * 13 + j * 29) % 61) as f64 + 0.01 * j as f64);
        let data = DataBlock::new(z, None).unwrap();
        let blocks = data.partition_balanced(3).unwrap();
        let params = DncParams::new(12, 3, 60, 2, Partitioning::Sequential).unwrap();
        assert_eq!(params.r_b, 1);
        let d = run_dnc_select_detailed(&blocks, &params).unwrap();
        for s in &d.per_block {
            assert_eq!(s.per_covariate_counts, vec![(1, 1), (1, 1)]);
        }
        assert_eq!(d.combined.len(), 12);
    }

    #[test]
    fn quota_underflow_guard() {
        assert!(matches!(
            DncParams::new(10, 3, 100, 2, Partitioning::Sequential),
            Err(Error::QuotaUnderflow { k: 10, p: 2, blocks: 3 })
        ));
    }

    #[test]
    fn block_too_small() {
        let blocks = vec![column_block(&[0.0, 1.0, 2.0, 3.0], 0, 0), column_block(&[5.0], 4, 1)];
        let params = DncParams::new(4, 2, 5, 1, Partitioning::Sequential).unwrap();
        assert!(matches!(run_dnc_select(&blocks, &params), Err(Error::BlockTooSmall { block: 1, .. })));
    }

    #[test]
    fn shuffle_is_deterministic_and_balanced() {
        let a = shuffle_assignment(4, 4, 9).unwrap();
        assert_eq!(a.sizes, vec![1, 1, 1, 1]);
        assert_eq!(a, shuffle_assignment(4, 4, 9).unwrap());
        let b = shuffle_assignment(1000, 7, 3).unwrap();
        let mut sorted = b.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..1000).collect::<Vec<_>>());
        assert_ne!(b.order, shuffle_assignment(1000, 7, 4).unwrap().order);
        let owner = b.block_of_rows();
        assert_eq!(owner[b.block(3)[0]], 3);
    }

    #[test]
    fn equal_design_blocks_average() {
        let z = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 4.0]);
        let x = design_matrix(&z);
        let f1 = ols_fit(&x, &DVector::from_vec(vec![1.0, 2.0, 2.5, 5.0]), Some(1.0)).unwrap();
        let f2 = ols_fit(&x, &DVector::from_vec(vec![0.0, 1.5, 3.0, 3.0]), Some(1.0)).unwrap();
        let mean = (&f1.beta + &f2.beta) / 2.0;
        let agg = aggregate_fits(vec![f1, f2]).unwrap();
        assert!((agg.beta - mean).amax() < 1e-12);
    }

    #[test]
    fn single_fit_aggregate_is_identity() {
        let z = DMatrix::from_row_slice(5, 1, &[0.0, 1.0, 2.0, 4.0, 7.0]);
        let fit = ols_fit(&design_matrix(&z), &DVector::from_vec(vec![1.0, 2.0, 2.5, 5.0, 9.0]), None).unwrap();
        let agg = aggregate_fits(vec![fit.clone()]).unwrap();
        assert!((agg.beta - &fit.beta).amax() < 1e-12);
        assert!((agg.cov - &fit.cov).amax() < 1e-12);
    }
}
