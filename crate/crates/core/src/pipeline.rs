//! Out-of-core selection and timing over a directory of block files.
//!
//! Each worker loads one block, reduces it to its subdata and drops it, so
//! peak memory is one block per worker plus the growing subdata.

use std::time::Instant;

use crate::baselines::poisson_with_rate;
use crate::data::{DataBlock, OlsFit, SelectionResult};
use crate::diagnostics::{RangeStats, RangeStatsBuilder};
use crate::dnc::{aggregate_fits, combine_selections, DncParams};
use crate::error::{Error, Result};
use crate::estimation::ols_fit;
use crate::iboss::{select_local, tail_quota, to_global};
use crate::io::BlockSet;
use crate::kv::{KvDoc, KvWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Iboss,
    Poisson { seed: u64 },
}

/// Wall-clock seconds per phase. Load and select are summed over blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub load: f64,
    pub select: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct DiskSelection {
    pub selection: SelectionResult,
    pub per_block: Vec<SelectionResult>,
    /// Selected rows ordered by global index.
    pub subdata: DataBlock,
    /// 0-based block of each subdata row.
    pub row_block: Vec<usize>,
    pub ranges: Option<RangeStats>,
    pub timings: PhaseTimings,
}

struct BlockOutcome {
    selection: SelectionResult,
    subdata: DataBlock,
    ranges: Option<RangeStatsBuilder>,
    load: f64,
    select: f64,
}

/// Runs selection block by block straight from disk.
pub fn select_on_disk(
    set: &BlockSet,
    k: usize,
    mode: SelectMode,
    threads: Option<usize>,
    with_ranges: bool,
) -> Result<DiskSelection> {
    let start = Instant::now();
    let m = &set.manifest;
    let p = m.n_covariates;
    let b_count = set.len();
    if b_count == 0 {
        return Err(Error::EmptyInput);
    }
    if k > m.n_rows {
        return Err(Error::QuotaInfeasible { k, rows: m.n_rows });
    }

    let (k_b, r_b) = match mode {
        SelectMode::Iboss => {
            let params = DncParams::new(k, b_count, m.n_rows, p, m.partitioning)?;
            let k_b = params.k_b();
            if let Some((b, e)) = m.blocks.iter().enumerate().find(|(_, e)| e.rows < k_b) {
                return Err(Error::BlockTooSmall { block: b, rows: e.rows, needed: k_b });
            }
            (k_b, params.r_b)
        }
        SelectMode::Poisson { .. } => (0, tail_quota(k.max(1), p * b_count).max(1)),
    };
    let r = tail_quota(k.max(1), p).max(1);
    let rate = k as f64 / m.n_rows as f64;

    let outcomes = set.map_blocks_timed(threads, |block, load| {
        let t = Instant::now();
        let selection = match mode {
            SelectMode::Iboss => to_global(&block, select_local(&block, k_b)?, k_b),
            SelectMode::Poisson { seed } => poisson_with_rate(&block, rate, seed),
        };
        let local = block
            .local_indices(&selection.indices)
            .ok_or_else(|| Error::InvalidParameter("selection outside its block".into()))?;
        let subdata = block.subset(&local);
        let ranges = if with_ranges {
            let mut builder = RangeStatsBuilder::new(p, r_b, r)?;
            builder.push_block(&block)?;
            Some(builder)
        } else {
            None
        };
        Ok(BlockOutcome { selection, subdata, ranges, load, select: t.elapsed().as_secs_f64() })
    })?;

    let mut timings = PhaseTimings::default();
    let mut per_block = Vec::with_capacity(b_count);
    let mut pieces = Vec::with_capacity(b_count);
    let mut builder: Option<RangeStatsBuilder> = None;
    let mut tagged: Vec<(usize, usize)> = Vec::new();
    for (b, o) in outcomes.into_iter().enumerate() {
        timings.load += o.load;
        timings.select += o.select;
        for i in 0..o.subdata.rows() {
            tagged.push((o.subdata.global_index(i), b));
        }
        per_block.push(o.selection);
        pieces.push(o.subdata);
        if let Some(r) = o.ranges {
            match builder.as_mut() {
                Some(acc) => acc.merge(r)?,
                None => builder = Some(r),
            }
        }
    }
    let combined = combine_selections(&per_block, k, p);
    let stacked = DataBlock::concat(&pieces)?;
    let mut order: Vec<usize> = (0..tagged.len()).collect();
    order.sort_unstable_by_key(|&i| tagged[i].0);
    let subdata = stacked.subset(&order);
    let row_block = order.iter().map(|&i| tagged[i].1).collect();
    timings.total = start.elapsed().as_secs_f64();
    Ok(DiskSelection {
        selection: combined,
        per_block,
        subdata,
        row_block,
        ranges: builder.map(RangeStatsBuilder::finish).transpose()?,
        timings,
    })
}

impl BlockSet {
    /// Like [`BlockSet::map_blocks`], also passing the seconds spent loading.
    pub fn map_blocks_timed<T, F>(&self, threads: Option<usize>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(DataBlock, f64) -> Result<T> + Sync + Send,
    {
        self.map_indices(threads, |b| {
            let t = Instant::now();
            let block = self.read_block(b)?;
            f(block, t.elapsed().as_secs_f64())
        })
    }
}

/// Fit on the subdata, either pooled or per block with inverse-covariance weights.
pub fn fit_subdata(subdata: &DataBlock, row_block: Option<&[usize]>, weighted: bool, sigma2: Option<f64>) -> Result<OlsFit> {
    let y = subdata.responses().ok_or(Error::MissingResponses)?;
    if !weighted {
        return ols_fit(&subdata.design_matrix(), y, sigma2);
    }
    let row_block = row_block.ok_or_else(|| Error::InvalidParameter("weighted aggregation needs block membership".into()))?;
    if row_block.len() != subdata.rows() {
        return Err(Error::DimensionMismatch { expected: subdata.rows(), found: row_block.len() });
    }
    let n_blocks = row_block.iter().max().map_or(0, |&b| b + 1);
    let mut fits = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let rows: Vec<usize> = (0..row_block.len()).filter(|&i| row_block[i] == b).collect();
        if rows.is_empty() {
            continue;
        }
        let part = subdata.subset(&rows);
        let fit = ols_fit(&part.design_matrix(), part.responses().expect("responses"), sigma2)
            .map_err(|e| Error::SingularBlockFit { block: b, source: Box::new(e) })?;
        fits.push(fit);
    }
    let agg = aggregate_fits(fits)?;
    let n_used = agg.per_block_fits.iter().map(|f| f.n_used).sum();
    let sigma2_hat = ols_fit(&subdata.design_matrix(), y, sigma2).map_or(0.0, |f| f.sigma2_hat);
    Ok(OlsFit { beta: agg.beta, cov: agg.cov, sigma2_hat, n_used })
}

/// Record of one selection run, written next to the subdata file.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectManifest {
    pub mode: String,
    pub seed: Option<u64>,
    pub n_rows: usize,
    pub p: usize,
    pub blocks: usize,
    pub k_requested: usize,
    pub r_b: Option<usize>,
    pub actual_size: usize,
    pub block_sizes: Vec<usize>,
    pub tail_counts: Vec<(usize, usize)>,
    pub degenerate: Vec<usize>,
    pub timings: PhaseTimings,
    /// 0-based global indices, ordered as the subdata rows.
    pub indices: Vec<usize>,
    pub row_block: Vec<usize>,
}

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl SelectManifest {
    pub fn new(set: &BlockSet, mode: SelectMode, k: usize, sel: &DiskSelection) -> Self {
        let m = &set.manifest;
        let (name, seed, r_b) = match mode {
            SelectMode::Iboss => ("iboss", None, Some(tail_quota(k, m.n_covariates * set.len()))),
            SelectMode::Poisson { seed } => ("poisson", Some(seed), None),
        };
        Self {
            mode: name.into(),
            seed,
            n_rows: m.n_rows,
            p: m.n_covariates,
            blocks: set.len(),
            k_requested: k,
            r_b,
            actual_size: sel.selection.len(),
            block_sizes: sel.per_block.iter().map(SelectionResult::len).collect(),
            tail_counts: sel.selection.per_covariate_counts.clone(),
            degenerate: sel.selection.degenerate_covariates.clone(),
            timings: sel.timings,
            indices: (0..sel.subdata.rows()).map(|i| sel.subdata.global_index(i)).collect(),
            row_block: sel.row_block.clone(),
        }
    }

    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        w.put("mode", &self.mode);
        if let Some(s) = self.seed {
            w.put("seed", s);
        }
        w.put("n_rows", self.n_rows)
            .put("p", self.p)
            .put("blocks", self.blocks)
            .put("k_requested", self.k_requested);
        if let Some(r) = self.r_b {
            w.put("r_b", r);
        }
        w.put("actual_size", self.actual_size)
            .put("shortfall", self.k_requested.saturating_sub(self.actual_size))
            .put_vec("block_size", &self.block_sizes);
        let lower: Vec<usize> = self.tail_counts.iter().map(|c| c.0).collect();
        let upper: Vec<usize> = self.tail_counts.iter().map(|c| c.1).collect();
        w.put_vec("tail_lower", &lower)
            .put_vec("tail_upper", &upper)
            .put("degenerate_covariates", join(self.degenerate.iter().map(|j| j + 1)))
            .put("time_load_seconds", self.timings.load)
            .put("time_select_seconds", self.timings.select)
            .put("time_total_seconds", self.timings.total)
            .put("index_base", 1)
            .put("indices", join(self.indices.iter().map(|i| i + 1)))
            .put("row_block", join(self.row_block.iter().map(|b| b + 1)));
        w.finish()
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let base: usize = doc.parse_value("index_base")?;
        let shift = |e: &crate::kv::Entry| -> Result<Vec<usize>> {
            let v: Vec<usize> = e.parse_list()?;
            v.into_iter()
                .map(|x| x.checked_sub(base).ok_or_else(|| e.error("index below the index base")))
                .collect()
        };
        let p: usize = doc.parse_value("p")?;
        let blocks: usize = doc.parse_value("blocks")?;
        let tail_counts = (1..=p)
            .map(|j| Ok((doc.parse_value(&format!("tail_lower[{j}]"))?, doc.parse_value(&format!("tail_upper[{j}]"))?)))
            .collect::<Result<Vec<_>>>()?;
        let block_sizes = (1..=blocks)
            .map(|b| doc.parse_value(&format!("block_size[{b}]")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mode: doc.require("mode")?.value.clone(),
            seed: doc.parse_opt("seed")?,
            n_rows: doc.parse_value("n_rows")?,
            p,
            blocks,
            k_requested: doc.parse_value("k_requested")?,
            r_b: doc.parse_opt("r_b")?,
            actual_size: doc.parse_value("actual_size")?,
            block_sizes,
            tail_counts,
            degenerate: doc.require("degenerate_covariates")?.parse_list::<usize>()?.into_iter().map(|j| j - 1).collect(),
            timings: PhaseTimings {
                load: doc.parse_value("time_load_seconds")?,
                select: doc.parse_value("time_select_seconds")?,
                total: doc.parse_value("time_total_seconds")?,
            },
            indices: shift(doc.require("indices")?)?,
            row_block: shift(doc.require("row_block")?)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchMethod {
    Full,
    Iboss,
    Uni,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Full => "full",
            BenchMethod::Iboss => "iboss",
            BenchMethod::Uni => "uni",
        }
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(BenchMethod::Full),
            "iboss" => Ok(BenchMethod::Iboss),
            "uni" | "poisson" | "uniform" => Ok(BenchMethod::Uni),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: BenchMethod,
    pub blocks: usize,
    pub k: usize,
    pub repeats: usize,
    pub median_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

pub const BENCH_HEADER: &str = "method,b,k,repeats,median_seconds,min_seconds,max_seconds";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6}",
            self.method.name(),
            self.blocks,
            self.k,
            self.repeats,
            self.median_seconds,
            self.min_seconds,
            self.max_seconds
        )
    }
}

/// Times one end-to-end estimate, block loading included.
pub fn time_method(set: &BlockSet, method: BenchMethod, k: usize, seed: u64, threads: Option<usize>) -> Result<f64> {
    let start = Instant::now();
    match method {
        BenchMethod::Full => {
            let fits = set.map_blocks(threads, |block| {
                let y = block.responses().ok_or(Error::MissingResponses)?;
                ols_fit(&block.design_matrix(), y, None)
            })?;
            aggregate_fits(fits)?;
        }
        BenchMethod::Iboss | BenchMethod::Uni => {
            let mode = if method == BenchMethod::Iboss { SelectMode::Iboss } else { SelectMode::Poisson { seed } };
            let sel = select_on_disk(set, k, mode, threads, false)?;
            fit_subdata(&sel.subdata, None, false, None)?;
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn bench(set: &BlockSet, k: usize, methods: &[BenchMethod], repeats: usize, seed: u64, threads: Option<usize>) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be positive".into()));
    }
    methods
        .iter()
        .map(|&method| {
            let mut times = (0..repeats)
                .map(|_| time_method(set, method, k, seed, threads))
                .collect::<Result<Vec<_>>>()?;
            let min_seconds = times.iter().copied().fold(f64::INFINITY, f64::min);
            let max_seconds = times.iter().copied().fold(0.0, f64::max);
            Ok(BenchRow {
                method,
                blocks: set.len(),
                k,
                repeats,
                median_seconds: median(&mut times),
                min_seconds,
                max_seconds,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dnc::{run_dnc_select, Partitioning};
    use crate::io::{split, write_binary};
    use nalgebra::{DMatrix, DVector};

    fn dataset(n: usize) -> DataBlock {
        let z = DMatrix::from_fn(n, 2, |i, j| (((i * 7919 + j * 104729) % 1009) as f64).sqrt() + j as f64);
        let y = DVector::from_fn(n, |i, _| 1.0 + z[(i, 0)] + z[(i, 1)] + ((i % 13) as f64 - 6.0) * 0.1);
        DataBlock::new(z, Some(y)).unwrap()
    }

    #[test]
    fn disk_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("d.bin");
        let data = dataset(400);
        write_binary(&src, &data).unwrap();
        split(&src, 100, &dir.path().join("b"), None, true).unwrap();
        let set = BlockSet::load(&dir.path().join("b")).unwrap();
        let sel = select_on_disk(&set, 40, SelectMode::Iboss, Some(1), true).unwrap();
        let blocks = set.read_all().unwrap();
        let params = DncParams::new(40, 4, 400, 2, Partitioning::Sequential).unwrap();
        assert_eq!(sel.selection, run_dnc_select(&blocks, &params).unwrap());
        let ids: Vec<usize> = (0..sel.subdata.rows()).map(|i| sel.subdata.global_index(i)).collect();
        assert_eq!(ids, sel.selection.indices);
        assert_eq!(sel.ranges.unwrap(), RangeStats::from_blocks(&blocks, 3, 10).unwrap());
    }

    #[test]
    fn manifest_round_trip_and_weighted_fit() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("d.bin");
        write_binary(&src, &dataset(300)).unwrap();
        split(&src, 100, &dir.path().join("b"), None, true).unwrap();
        let set = BlockSet::load(&dir.path().join("b")).unwrap();
        let sel = select_on_disk(&set, 36, SelectMode::Iboss, None, false).unwrap();
        let m = SelectManifest::new(&set, SelectMode::Iboss, 36, &sel);
        assert_eq!(SelectManifest::from_kv(&m.to_kv()).unwrap(), m);
        let pooled = fit_subdata(&sel.subdata, None, false, Some(1.0)).unwrap();
        let weighted = fit_subdata(&sel.subdata, Some(&m.row_block), true, Some(1.0)).unwrap();
        assert!((pooled.beta - weighted.beta).amax() < 1e-8);
    }

    #[test]
    fn median_of_three() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0]), 2.5);
    }
}
