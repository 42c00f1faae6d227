//! Shared domain types: dataset metadata, in-memory blocks, selections and fits.
//!
//! Row indices are 0-based everywhere in this crate. Front ends convert to
//! 1-based indices for display.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Shape and location of a row-stored dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub n_rows: usize,
    pub n_covariates: usize,
    pub has_response: bool,
    pub source: PathBuf,
}

impl DatasetMeta {
    pub fn new(n_rows: usize, n_covariates: usize, has_response: bool, source: PathBuf) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::InvalidParameter("dataset must have at least one row".into()));
        }
        if n_covariates == 0 {
            return Err(Error::InvalidParameter("dataset must have at least one covariate".into()));
        }
        Ok(Self {
            n_rows,
            n_covariates,
            has_response,
            source,
        })
    }

    /// Numeric values per stored row.
    pub fn row_width(&self) -> usize {
        self.n_covariates + usize::from(self.has_response)
    }
}

/// A contiguous group of rows held in memory.
///
/// Covariates are stored column-major so the per-covariate scans of the
/// selection kernel walk contiguous memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    block_index: usize,
    row_offset: usize,
    covariates: DMatrix<f64>,
    responses: Option<DVector<f64>>,
    row_ids: Option<Vec<usize>>,
}

impl DataBlock {
    pub fn new(covariates: DMatrix<f64>, responses: Option<DVector<f64>>) -> Result<Self> {
        if let Some(y) = &responses {
            if y.len() != covariates.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: covariates.nrows(),
                    found: y.len(),
                });
            }
        }
        Ok(Self {
            block_index: 0,
            row_offset: 0,
            covariates,
            responses,
            row_ids: None,
        })
    }

    /// Places the block inside its parent dataset.
    pub fn with_placement(mut self, block_index: usize, row_offset: usize) -> Self {
        self.block_index = block_index;
        self.row_offset = row_offset;
        self
    }

    /// Attaches explicit global row ids, used when blocks are formed from a
    /// shuffled partition. Ids must be strictly increasing.
    pub fn with_row_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.rows(),
                found: ids.len(),
            });
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("row ids must be strictly increasing".into()));
        }
        self.row_ids = Some(ids);
        Ok(self)
    }

    pub fn block_index(&self) -> usize {
        self.block_index
    }

    pub fn row_offset(&self) -> usize {
        self.row_offset
    }

    pub fn rows(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn responses(&self) -> Option<&DVector<f64>> {
        self.responses.as_ref()
    }

    pub fn row_ids(&self) -> Option<&[usize]> {
        self.row_ids.as_deref()
    }

    /// Contiguous view of covariate `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.rows();
        &self.covariates.as_slice()[j * n..(j + 1) * n]
    }

    /// Global dataset index of local row `i`.
    pub fn global_index(&self, i: usize) -> usize {
        match &self.row_ids {
            Some(ids) => ids[i],
            None => self.row_offset + i,
        }
    }

    /// Largest global index held by this block, plus one.
    pub fn global_end(&self) -> usize {
        match &self.row_ids {
            Some(ids) => ids.last().map_or(0, |&last| last + 1),
            None => self.row_offset + self.rows(),
        }
    }

    /// Maps global indices back to local rows; `None` if any index is foreign.
    pub fn local_indices(&self, global: &[usize]) -> Option<Vec<usize>> {
        global
            .iter()
            .map(|&g| match &self.row_ids {
                Some(ids) => ids.binary_search(&g).ok(),
                None => g
                    .checked_sub(self.row_offset)
                    .filter(|&i| i < self.rows()),
            })
            .collect()
    }

    /// Copies the listed local rows into a new block. Placement is kept and
    /// the copied rows remember their global ids.
    pub fn subset(&self, local: &[usize]) -> DataBlock {
        let p = self.n_covariates();
        let covariates = DMatrix::from_fn(local.len(), p, |i, j| self.covariates[(local[i], j)]);
        let responses = self
            .responses
            .as_ref()
            .map(|y| DVector::from_iterator(local.len(), local.iter().map(|&i| y[i])));
        DataBlock {
            block_index: self.block_index,
            row_offset: self.row_offset,
            covariates,
            responses,
            row_ids: Some(local.iter().map(|&i| self.global_index(i)).collect()),
        }
    }

    /// Splits the block into `parts` contiguous blocks whose sizes differ by
    /// at most one row (the first `rows % parts` blocks carry the extra row).
    pub fn partition_balanced(&self, parts: usize) -> Result<Vec<DataBlock>> {
        let n = self.rows();
        if parts == 0 || parts > n {
            return Err(Error::InvalidParameter(format!(
                "cannot split {n} rows into {parts} nonempty blocks"
            )));
        }
        let sizes = balanced_sizes(n, parts);
        let mut start = 0;
        let mut out = Vec::with_capacity(parts);
        for (b, &len) in sizes.iter().enumerate() {
            let local: Vec<usize> = (start..start + len).collect();
            let mut block = self.subset(&local);
            block.block_index = b;
            block.row_offset = self.global_index(start);
            if self.row_ids.is_none() {
                block.row_ids = None;
            }
            out.push(block);
            start += len;
        }
        Ok(out)
    }

    /// Stacks blocks vertically (in the given order) into a single block.
    pub fn concat(blocks: &[DataBlock]) -> Result<DataBlock> {
        let first = blocks.first().ok_or(Error::EmptyInput)?;
        let p = first.n_covariates();
        let has_y = first.responses.is_some();
        let total: usize = blocks.iter().map(DataBlock::rows).sum();
        let mut cov = DMatrix::zeros(total, p);
        let mut y = has_y.then(|| DVector::zeros(total));
        let mut ids = Vec::with_capacity(total);
        let mut at = 0;
        for b in blocks {
            if b.n_covariates() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: b.n_covariates(),
                });
            }
            if b.responses.is_some() != has_y {
                return Err(Error::MissingResponses);
            }
            cov.view_mut((at, 0), (b.rows(), p)).copy_from(&b.covariates);
            if let (Some(dst), Some(src)) = (y.as_mut(), b.responses.as_ref()) {
                dst.rows_mut(at, b.rows()).copy_from(src);
            }
            ids.extend((0..b.rows()).map(|i| b.global_index(i)));
            at += b.rows();
        }
        Ok(DataBlock {
            block_index: 0,
            row_offset: 0,
            covariates: cov,
            responses: y,
            row_ids: Some(ids),
        })
    }

    /// Design matrix `(1, Z)` with the intercept column first.
    pub fn design_matrix(&self) -> DMatrix<f64> {
        design_matrix(&self.covariates)
    }
}

pub fn design_matrix(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = covariates.shape();
    let mut x = DMatrix::zeros(n, p + 1);
    x.column_mut(0).fill(1.0);
    x.view_mut((0, 1), (n, p)).copy_from(covariates);
    x
}

pub(crate) fn balanced_sizes(n: usize, parts: usize) -> Vec<usize> {
    let base = n / parts;
    let extra = n % parts;
    (0..parts).map(|b| base + usize::from(b < extra)).collect()
}

/// Checks a block against the dataset it claims to belong to.
pub fn validate_block(block: &DataBlock, meta: &DatasetMeta) -> Result<()> {
    if block.n_covariates() != meta.n_covariates {
        return Err(Error::DimensionMismatch {
            expected: meta.n_covariates,
            found: block.n_covariates(),
        });
    }
    if meta.has_response && block.responses.is_none() {
        return Err(Error::MissingResponses);
    }
    if block.global_end() > meta.n_rows || block.row_offset + block.rows() > meta.n_rows {
        return Err(Error::OffsetOutOfRange {
            row_offset: block.row_offset,
            rows: block.rows(),
            n_rows: meta.n_rows,
        });
    }
    for j in 0..block.n_covariates() {
        if let Some(i) = block.column(j).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: i, col: j });
        }
    }
    if let Some(y) = &block.responses {
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: i,
                col: block.n_covariates(),
            });
        }
    }
    Ok(())
}

/// Rows chosen as subdata, in global index space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionResult {
    /// Strictly increasing global row indices.
    pub indices: Vec<usize>,
    pub requested_k: usize,
    /// `(taken_lower, taken_upper)` per covariate.
    pub per_covariate_counts: Vec<(usize, usize)>,
    /// Covariates found constant among the rows still available when they
    /// were scanned.
    pub degenerate_covariates: Vec<usize>,
}

impl SelectionResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Requested size minus realized size, when positive.
    pub fn shortfall(&self) -> usize {
        self.requested_k.saturating_sub(self.indices.len())
    }
}

/// Ordinary least squares fit with intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    /// `sigma^2 (X^T X)^{-1}` with either the supplied or the estimated variance.
    pub cov: DMatrix<f64>,
    pub sigma2_hat: f64,
    pub n_used: usize,
}

impl OlsFit {
    /// Slope coefficients (everything but the intercept).
    pub fn slopes(&self) -> &[f64] {
        &self.beta.as_slice()[1..]
    }
}
