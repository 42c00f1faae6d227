//! Comparators: uniform Poisson subsampling and full-data divide-and-conquer OLS.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DataBlock, SelectionResult};
use crate::dnc::{aggregate_fits, map_blocks, AggregatedFit};
use crate::error::{Error, Result};
use crate::estimation::ols_fit;

/// Each row is kept independently with probability `target_size / rows`.
///
/// Row `i` of block `b` always consumes the `i`-th draw of stream `b` under
/// `seed`, so the outcome does not depend on block processing order.
pub fn poisson_subsample(block: &DataBlock, target_size: usize, seed: u64) -> Result<SelectionResult> {
    let rows = block.rows();
    if target_size > rows {
        return Err(Error::QuotaInfeasible { k: target_size, rows });
    }
    let rate = if rows == 0 { 0.0 } else { target_size as f64 / rows as f64 };
    let mut s = poisson_with_rate(block, rate, seed);
    s.requested_k = target_size;
    Ok(s)
}

/// Poisson subsampling across blocks at the common rate `k / N`.
pub fn poisson_select_blocks(blocks: &[DataBlock], k: usize, seed: u64) -> Result<SelectionResult> {
    let n: usize = blocks.iter().map(DataBlock::rows).sum();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if k > n {
        return Err(Error::QuotaInfeasible { k, rows: n });
    }
    let rate = k as f64 / n as f64;
    let mut indices = Vec::new();
    for block in blocks {
        indices.extend(poisson_with_rate(block, rate, seed).indices);
    }
    indices.sort_unstable();
    Ok(SelectionResult {
        indices,
        requested_k: k,
        per_covariate_counts: vec![(0, 0); blocks[0].n_covariates()],
        degenerate_covariates: Vec::new(),
    })
}

pub(crate) fn poisson_with_rate(block: &DataBlock, rate: f64, seed: u64) -> SelectionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block.block_index() as u64);
    let indices: Vec<usize> = (0..block.rows())
        .filter(|_| rng.random::<f64>() < rate)
        .map(|i| block.global_index(i))
        .collect();
    SelectionResult {
        indices,
        requested_k: 0,
        per_covariate_counts: vec![(0, 0); block.n_covariates()],
        degenerate_covariates: Vec::new(),
    }
}

/// Fits every block on all of its rows and combines by inverse-covariance
/// weighting.
pub fn full_data_dnc_fit(blocks: &[DataBlock], sigma2: Option<f64>) -> Result<AggregatedFit> {
    full_data_dnc_fit_with_threads(blocks, sigma2, None)
}

pub fn full_data_dnc_fit_with_threads(
    blocks: &[DataBlock],
    sigma2: Option<f64>,
    threads: Option<usize>,
) -> Result<AggregatedFit> {
    if blocks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let fits = map_blocks(blocks, threads, |block| {
        let y = block.responses().ok_or(Error::MissingResponses)?;
        ols_fit(&block.design_matrix(), y, sigma2).map_err(|e| Error::SingularBlockFit {
            block: block.block_index(),
            source: Box::new(e),
        })
    })?;
    aggregate_fits(fits)
}
