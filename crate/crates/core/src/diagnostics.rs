//! Determinant and variance bounds for divide-and-conquer subdata.
//!
//! Every product over covariates is accumulated as a sum of logs, so `p = 50`
//! with wide ranges does not overflow. Bounds take the realized subdata size
//! as `k`; `r_B` and `r` come from the requested size.

use nalgebra::DMatrix;

use crate::data::{design_matrix, DataBlock};
use crate::error::{Error, Result};
use crate::estimation::{correlation_summary, log_det_gram};
use crate::kv::{KvDoc, KvWriter};
use crate::quickselect::{select_nth_in_place, tail_thresholds};

/// Absolute slack used by the bound checks.
pub const BOUND_SLACK: f64 = 1e-9;

/// Full-data extremes and order statistics of one covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateRange {
    pub min: f64,
    pub max: f64,
    /// `z_(r_B)`, `None` when the data has fewer than `r_B` rows.
    pub lower_rb: Option<f64>,
    /// `z_(N - r_B + 1)`.
    pub upper_rb: Option<f64>,
    /// `z_(r)` for the single-block quota `r`.
    pub lower_r: Option<f64>,
    pub upper_r: Option<f64>,
}

impl CovariateRange {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn trimmed_rb(&self) -> Option<f64> {
        Some(self.upper_rb? - self.lower_rb?)
    }

    pub fn trimmed_r(&self) -> Option<f64> {
        Some(self.upper_r? - self.lower_r?)
    }
}

/// Per-block order statistics `(z_b(r_B), z_b(n_B - r_B + 1))` for each covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTails {
    pub rows: usize,
    pub tails: Vec<Option<(f64, f64)>>,
}

impl BlockTails {
    pub fn trimmed(&self, j: usize) -> Option<f64> {
        self.tails[j].map(|(lo, hi)| hi - lo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeStats {
    pub n_rows: usize,
    pub r_b: usize,
    pub r: usize,
    pub covariates: Vec<CovariateRange>,
    pub blocks: Vec<BlockTails>,
}

impl RangeStats {
    pub fn from_blocks(blocks: &[DataBlock], r_b: usize, r: usize) -> Result<Self> {
        let first = blocks.first().ok_or(Error::EmptyInput)?;
        let mut builder = RangeStatsBuilder::new(first.n_covariates(), r_b, r)?;
        for block in blocks {
            builder.push_block(block)?;
        }
        builder.finish()
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn ranges(&self) -> Vec<f64> {
        self.covariates.iter().map(CovariateRange::range).collect()
    }

    /// Checks that every order statistic lies within `[min, max]`.
    pub fn check(&self) -> Result<()> {
        for (j, c) in self.covariates.iter().enumerate() {
            let inside = |v: Option<f64>| v.is_none_or(|v| c.min <= v && v <= c.max);
            let block_ok = self.blocks.iter().all(|b| match b.tails.get(j).copied().flatten() {
                Some((lo, hi)) => inside(Some(lo)) && inside(Some(hi)),
                None => true,
            });
            if !(c.min <= c.max
                && inside(c.lower_rb)
                && inside(c.upper_rb)
                && inside(c.lower_r)
                && inside(c.upper_r)
                && block_ok)
            {
                return Err(Error::InvalidParameter(format!("range statistics for covariate {} are inconsistent", j + 1)));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        w.put("n_rows", self.n_rows)
            .put("p", self.p())
            .put("r_b", self.r_b)
            .put("r", self.r)
            .put("blocks", self.blocks.len());
        let col = |f: &dyn Fn(&CovariateRange) -> Option<f64>| -> Vec<String> {
            self.covariates.iter().map(|c| fmt_opt(f(c))).collect()
        };
        w.put_vec("min", &col(&|c| Some(c.min)));
        w.put_vec("max", &col(&|c| Some(c.max)));
        w.put_vec("lower_rb", &col(&|c| c.lower_rb));
        w.put_vec("upper_rb", &col(&|c| c.upper_rb));
        w.put_vec("lower_r", &col(&|c| c.lower_r));
        w.put_vec("upper_r", &col(&|c| c.upper_r));
        for (b, block) in self.blocks.iter().enumerate() {
            w.put(format_args!("block[{}].rows", b + 1), block.rows);
            let lo: Vec<String> = block.tails.iter().map(|t| fmt_opt(t.map(|t| t.0))).collect();
            let hi: Vec<String> = block.tails.iter().map(|t| fmt_opt(t.map(|t| t.1))).collect();
            w.put_vec(&format!("block[{}].lower", b + 1), &lo);
            w.put_vec(&format!("block[{}].upper", b + 1), &hi);
        }
        w.finish()
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let p: usize = doc.parse_value("p")?;
        let n_blocks: usize = doc.parse_value("blocks")?;
        let opt = |key: String| -> Result<Option<f64>> {
            let e = doc.require(&key)?;
            if e.value == "NA" {
                Ok(None)
            } else {
                e.parse().map(Some)
            }
        };
        let mut covariates = Vec::with_capacity(p);
        for j in 1..=p {
            covariates.push(CovariateRange {
                min: doc.parse_value(&format!("min[{j}]"))?,
                max: doc.parse_value(&format!("max[{j}]"))?,
                lower_rb: opt(format!("lower_rb[{j}]"))?,
                upper_rb: opt(format!("upper_rb[{j}]"))?,
                lower_r: opt(format!("lower_r[{j}]"))?,
                upper_r: opt(format!("upper_r[{j}]"))?,
            });
        }
        let mut blocks = Vec::with_capacity(n_blocks);
        for b in 1..=n_blocks {
            let mut tails = Vec::with_capacity(p);
            for j in 1..=p {
                let lo = opt(format!("block[{b}].lower[{j}]"))?;
                let hi = opt(format!("block[{b}].upper[{j}]"))?;
                tails.push(lo.zip(hi));
            }
            blocks.push(BlockTails {
                rows: doc.parse_value(&format!("block[{b}].rows"))?,
                tails,
            });
        }
        let stats = Self {
            n_rows: doc.parse_value("n_rows")?,
            r_b: doc.parse_value("r_b")?,
            r: doc.parse_value("r")?,
            covariates,
            blocks,
        };
        stats.check()?;
        Ok(stats)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Accumulates [`RangeStats`] one block at a time, keeping only the
/// `max(r_B, r)` smallest and largest values seen per covariate.
#[derive(Debug, Clone)]
pub struct RangeStatsBuilder {
    r_b: usize,
    r: usize,
    keep: usize,
    n_rows: usize,
    min: Vec<f64>,
    max: Vec<f64>,
    lows: Vec<Vec<f64>>,
    highs: Vec<Vec<f64>>,
    blocks: Vec<BlockTails>,
}

impl RangeStatsBuilder {
    pub fn new(p: usize, r_b: usize, r: usize) -> Result<Self> {
        if p == 0 || r_b == 0 || r == 0 {
            return Err(Error::InvalidParameter("p, r_B and r must be positive".into()));
        }
        Ok(Self {
            r_b,
            r,
            keep: r_b.max(r),
            n_rows: 0,
            min: vec![f64::INFINITY; p],
            max: vec![f64::NEG_INFINITY; p],
            lows: vec![Vec::new(); p],
            highs: vec![Vec::new(); p],
            blocks: Vec::new(),
        })
    }

    pub fn push_block(&mut self, block: &DataBlock) -> Result<()> {
        let p = self.min.len();
        if block.n_covariates() != p {
            return Err(Error::DimensionMismatch { expected: p, found: block.n_covariates() });
        }
        let mut tails = Vec::with_capacity(p);
        for j in 0..p {
            let col = block.column(j);
            for &v in col {
                self.min[j] = self.min[j].min(v);
                self.max[j] = self.max[j].max(v);
            }
            tails.push(if self.r_b <= col.len() {
                let t = tail_thresholds(col, self.r_b)?;
                Some((t.lower, t.upper))
            } else {
                None
            });
            merge_extremes(&mut self.lows[j], col, self.keep, false);
            merge_extremes(&mut self.highs[j], col, self.keep, true);
        }
        self.n_rows += block.rows();
        self.blocks.push(BlockTails { rows: block.rows(), tails });
        Ok(())
    }

    /// Appends the blocks seen by `other` after the ones already held.
    pub fn merge(&mut self, other: RangeStatsBuilder) -> Result<()> {
        if other.min.len() != self.min.len() || other.r_b != self.r_b || other.r != self.r {
            return Err(Error::DimensionMismatch { expected: self.min.len(), found: other.min.len() });
        }
        for j in 0..self.min.len() {
            self.min[j] = self.min[j].min(other.min[j]);
            self.max[j] = self.max[j].max(other.max[j]);
            merge_extremes(&mut self.lows[j], &other.lows[j], self.keep, false);
            merge_extremes(&mut self.highs[j], &other.highs[j], self.keep, true);
        }
        self.n_rows += other.n_rows;
        self.blocks.extend(other.blocks);
        Ok(())
    }

    pub fn finish(mut self) -> Result<RangeStats> {
        if self.n_rows == 0 {
            return Err(Error::EmptyInput);
        }
        let mut covariates = Vec::with_capacity(self.min.len());
        for j in 0..self.min.len() {
            let lows = &mut self.lows[j];
            let highs = &mut self.highs[j];
            lows.sort_by(f64::total_cmp);
            highs.sort_by(|a, b| b.total_cmp(a));
            covariates.push(CovariateRange {
                min: self.min[j],
                max: self.max[j],
                lower_rb: lows.get(self.r_b - 1).copied(),
                upper_rb: highs.get(self.r_b - 1).copied(),
                lower_r: lows.get(self.r - 1).copied(),
                upper_r: highs.get(self.r - 1).copied(),
            });
        }
        Ok(RangeStats {
            n_rows: self.n_rows,
            r_b: self.r_b,
            r: self.r,
            covariates,
            blocks: self.blocks,
        })
    }
}

/// Keeps the `keep` smallest (or largest) values of `acc ++ col` in `acc`.
fn merge_extremes(acc: &mut Vec<f64>, col: &[f64], keep: usize, largest: bool) {
    acc.extend_from_slice(col);
    let n = acc.len();
    if n <= keep {
        return;
    }
    if largest {
        select_nth_in_place(acc, n - keep);
        acc.drain(..n - keep);
    } else {
        select_nth_in_place(acc, keep - 1);
        acc.truncate(keep);
    }
}

/// `ln(k^{p+1} / 4^p * prod range_j^2)`.
pub fn log_zeta_upper_bound(k: usize, p: usize, ranges: &[f64]) -> Result<f64> {
    if ranges.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: ranges.len() });
    }
    let mut acc = (p + 1) as f64 * (k as f64).ln() - p as f64 * 4f64.ln();
    for (j, &d) in ranges.iter().enumerate() {
        if d.is_nan() || d <= 0.0 {
            return Err(Error::ZeroRange(j));
        }
        acc += 2.0 * d.ln();
    }
    Ok(acc)
}

/// Upper bound on the information determinant over all size-`k` subdata.
pub fn zeta_upper_bound(k: usize, p: usize, ranges: &[f64]) -> Result<f64> {
    log_zeta_upper_bound(k, p, ranges).map(f64::exp)
}

/// Lower bounds on the determinant ratio, kept in log form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Bounds {
    pub log_c_r: f64,
    pub log_c_e: f64,
}

impl Theorem1Bounds {
    pub fn c_r(&self) -> f64 {
        self.log_c_r.exp()
    }

    pub fn c_e(&self) -> f64 {
        self.log_c_e.exp()
    }

    pub fn log_max(&self) -> f64 {
        self.log_c_r.max(self.log_c_e)
    }

    pub fn max(&self) -> f64 {
        self.log_max().exp()
    }
}

fn check_ranges(stats: &RangeStats) -> Result<()> {
    match stats.covariates.iter().position(|c| c.range().is_nan() || c.range() <= 0.0) {
        Some(j) => Err(Error::ZeroRange(j)),
        None => Ok(()),
    }
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `C_R` from the per-block trimmed ranges and `C_E` from the full-data
/// trimmed ranges, both relative to the full-data ranges.
pub fn theorem1_bounds(stats: &RangeStats, lambda_min: f64, blocks: usize, p: usize) -> Result<Theorem1Bounds> {
    check_ranges(stats)?;
    if stats.p() != p {
        return Err(Error::DimensionMismatch { expected: p, found: stats.p() });
    }
    let pf = p as f64;
    let scale = pf * ln_or_neg_inf(lambda_min) - pf * ((blocks * p) as f64).ln();
    let mut log_c_r = scale;
    let mut log_c_e = scale;
    for (j, c) in stats.covariates.iter().enumerate() {
        let range = c.range();
        let sum: f64 = stats
            .blocks
            .iter()
            .filter_map(|b| b.trimmed(j))
            .map(|d| (d / range).powi(2))
            .sum();
        log_c_r += ln_or_neg_inf(sum);
        log_c_e += 2.0 * ln_or_neg_inf(c.trimmed_rb().unwrap_or(0.0) / range);
    }
    Ok(Theorem1Bounds { log_c_r, log_c_e })
}

/// Per-slope variance bounds; entries are indexed by covariate (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceBounds {
    pub v_lower: Vec<f64>,
    pub v_upper_a: Vec<f64>,
    pub v_upper_e: Vec<f64>,
    pub v_o: Vec<f64>,
    pub intercept_lower: f64,
    pub warnings: Vec<String>,
}

impl VarianceBounds {
    pub fn upper(&self, j: usize) -> f64 {
        self.v_upper_a[j].min(self.v_upper_e[j])
    }
}

fn upper_bound(numerator: f64, denom: f64) -> f64 {
    if denom > 0.0 {
        numerator / denom
    } else {
        f64::INFINITY
    }
}

pub fn theorem2_variance_bounds(
    stats: &RangeStats,
    lambda_min: f64,
    k: usize,
    p: usize,
    blocks: usize,
    sigma2: f64,
) -> Result<VarianceBounds> {
    check_ranges(stats)?;
    if stats.p() != p {
        return Err(Error::DimensionMismatch { expected: p, found: stats.p() });
    }
    let kf = k as f64;
    let lam = if lambda_min > 0.0 { lambda_min } else { 0.0 };
    let mut warnings = Vec::new();
    if lam == 0.0 {
        warnings.push("smallest correlation eigenvalue is not positive; upper bounds are infinite".into());
    }
    let mut out = VarianceBounds {
        v_lower: Vec::with_capacity(p),
        v_upper_a: Vec::with_capacity(p),
        v_upper_e: Vec::with_capacity(p),
        v_o: Vec::with_capacity(p),
        intercept_lower: sigma2 / kf,
        warnings: Vec::new(),
    };
    for (j, c) in stats.covariates.iter().enumerate() {
        let range = c.range();
        out.v_lower.push(4.0 * sigma2 / (kf * range * range));
        let sum_blocks: f64 = stats.blocks.iter().filter_map(|b| b.trimmed(j)).map(|d| d * d).sum();
        let de = c.trimmed_rb().unwrap_or(0.0);
        let dorig = c.trimmed_r().unwrap_or(0.0);
        let pb = (p * blocks) as f64;
        out.v_upper_a.push(upper_bound(4.0 * pb * sigma2, kf * lam * sum_blocks));
        out.v_upper_e.push(upper_bound(4.0 * pb * sigma2, kf * lam * de * de));
        out.v_o.push(upper_bound(4.0 * p as f64 * sigma2, kf * lam * dorig * dorig));
        if lam > 0.0 && (sum_blocks <= 0.0 || de <= 0.0 || dorig <= 0.0) {
            warnings.push(format!("covariate {} has a degenerate trimmed range; some upper bounds are infinite", j + 1));
        }
    }
    out.warnings = warnings;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeCheck {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub holds: bool,
}

impl SlopeCheck {
    pub fn lower_margin(&self) -> f64 {
        self.value - self.lower
    }

    pub fn upper_margin(&self) -> f64 {
        self.upper - self.value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub intercept_value: f64,
    pub intercept_lower: f64,
    pub intercept_holds: bool,
    pub slopes: Vec<SlopeCheck>,
}

impl SandwichReport {
    pub fn all_hold(&self) -> bool {
        self.intercept_holds && self.slopes.iter().all(|s| s.holds)
    }
}

/// Compares the diagonal of a known-variance covariance matrix against the bounds.
pub fn verify_variance_sandwich(fit_cov: &DMatrix<f64>, bounds: &VarianceBounds) -> Result<SandwichReport> {
    let p = bounds.v_lower.len();
    if fit_cov.nrows() != p + 1 || fit_cov.ncols() != p + 1 {
        return Err(Error::DimensionMismatch { expected: p + 1, found: fit_cov.nrows() });
    }
    let slopes = (0..p)
        .map(|j| {
            let value = fit_cov[(j + 1, j + 1)];
            let (lower, upper) = (bounds.v_lower[j], bounds.upper(j));
            SlopeCheck {
                lower,
                value,
                upper,
                holds: lower <= value + BOUND_SLACK && value <= upper + BOUND_SLACK,
            }
        })
        .collect();
    let intercept_value = fit_cov[(0, 0)];
    Ok(SandwichReport {
        intercept_value,
        intercept_lower: bounds.intercept_lower,
        intercept_holds: bounds.intercept_lower <= intercept_value + BOUND_SLACK,
        slopes,
    })
}

/// Everything the bound checks produce for one subdata set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub k_requested: usize,
    pub n_subdata: usize,
    pub p: usize,
    pub blocks: usize,
    pub r_b: usize,
    pub r: usize,
    pub sigma2: f64,
    pub log_zeta: f64,
    pub zeta_n: f64,
    pub log_det: f64,
    pub det_subdata: f64,
    pub log_det_ratio: f64,
    pub det_ratio: f64,
    pub theorem1: Theorem1Bounds,
    pub lower_bound_used: f64,
    pub lambda_min: f64,
    pub variances: Vec<f64>,
    pub bounds: VarianceBounds,
    pub log_det_appendix_bound: f64,
    /// Centered sums of squares `(n - 1) var(z*_j)`.
    pub scatter: Vec<f64>,
    /// `(r_B / 2) sum_b d_bj^2`.
    pub chain_r: Vec<f64>,
    /// `(r_B / 2) d_j^2` from the full-data trimmed range.
    pub chain_e: Vec<f64>,
    pub theorem1_holds: bool,
    pub appendix_det_holds: bool,
    pub chain_holds: bool,
    pub sandwich: Option<SandwichReport>,
}

impl DiagnosticsReport {
    /// `subdata` holds the selected covariate rows; `fit_cov`, when given,
    /// must be the known-variance covariance of the fit on that subdata.
    pub fn compute(
        subdata: &DMatrix<f64>,
        stats: &RangeStats,
        k_requested: usize,
        blocks: usize,
        sigma2: f64,
        fit_cov: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        let (n, p) = subdata.shape();
        if stats.p() != p {
            return Err(Error::DimensionMismatch { expected: stats.p(), found: p });
        }
        let summary = correlation_summary(subdata)?;
        let lambda_min = summary.lambda_min;
        let log_zeta = log_zeta_upper_bound(n, p, &stats.ranges())?;
        let log_det = log_det_gram(&design_matrix(subdata))?;
        let log_det_ratio = log_det - log_zeta;
        let det_ratio = log_det_ratio.exp();
        let theorem1 = theorem1_bounds(stats, lambda_min, blocks, p)?;
        let lower_bound_used = theorem1.max();
        let bounds = theorem2_variance_bounds(stats, lambda_min, n, p, blocks, sigma2)?;

        let nf = n as f64;
        let mut log_det_appendix_bound = nf.ln() + p as f64 * ((nf - 1.0).ln() + ln_or_neg_inf(lambda_min));
        for v in &summary.variances {
            log_det_appendix_bound += v.ln();
        }

        let half_rb = stats.r_b as f64 / 2.0;
        let scatter: Vec<f64> = summary.variances.iter().map(|v| v * (nf - 1.0)).collect();
        let chain_r: Vec<f64> = (0..p)
            .map(|j| half_rb * stats.blocks.iter().filter_map(|b| b.trimmed(j)).map(|d| d * d).sum::<f64>())
            .collect();
        let chain_e: Vec<f64> = stats
            .covariates
            .iter()
            .map(|c| half_rb * c.trimmed_rb().map_or(0.0, |d| d * d))
            .collect();
        let chain_holds = (0..p).all(|j| {
            let tol = BOUND_SLACK * scatter[j].max(1.0);
            scatter[j] + tol >= chain_r[j] && scatter[j] + tol >= chain_e[j]
        });

        let sandwich = fit_cov.map(|c| verify_variance_sandwich(c, &bounds)).transpose()?;

        Ok(Self {
            k_requested,
            n_subdata: n,
            p,
            blocks,
            r_b: stats.r_b,
            r: stats.r,
            sigma2,
            log_zeta,
            zeta_n: log_zeta.exp(),
            log_det,
            det_subdata: log_det.exp(),
            log_det_ratio,
            det_ratio,
            theorem1,
            lower_bound_used,
            lambda_min,
            variances: summary.variances,
            bounds,
            log_det_appendix_bound,
            scatter,
            chain_r,
            chain_e,
            theorem1_holds: det_ratio >= lower_bound_used - BOUND_SLACK,
            appendix_det_holds: log_det + BOUND_SLACK * log_det.abs().max(1.0) >= log_det_appendix_bound,
            chain_holds,
            sandwich,
        })
    }

    pub fn c_r(&self) -> f64 {
        self.theorem1.c_r()
    }

    pub fn c_e(&self) -> f64 {
        self.theorem1.c_e()
    }

    /// `ln(det_ratio) - ln(max(C_R, C_E))`; nonnegative when the bound holds.
    pub fn theorem1_log_margin(&self) -> f64 {
        self.log_det_ratio - self.theorem1.log_max()
    }

    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        w.put("k_requested", self.k_requested)
            .put("n_subdata", self.n_subdata)
            .put("p", self.p)
            .put("blocks", self.blocks)
            .put("r_b", self.r_b)
            .put("r", self.r)
            .put("sigma2", self.sigma2)
            .put("log_zeta_n", self.log_zeta)
            .put("zeta_n", self.zeta_n)
            .put("log_det_subdata", self.log_det)
            .put("det_subdata", self.det_subdata)
            .put("log_det_ratio", self.log_det_ratio)
            .put("det_ratio", self.det_ratio)
            .put("log_c_r", self.theorem1.log_c_r)
            .put("log_c_e", self.theorem1.log_c_e)
            .put("c_r", self.c_r())
            .put("c_e", self.c_e())
            .put("lower_bound_used", self.lower_bound_used)
            .put("lambda_min", self.lambda_min)
            .put("intercept_lower", self.bounds.intercept_lower)
            .put_vec("v_lower", &self.bounds.v_lower)
            .put_vec("v_upper_a", &self.bounds.v_upper_a)
            .put_vec("v_upper_e", &self.bounds.v_upper_e)
            .put_vec("v_o", &self.bounds.v_o)
            .put("log_det_appendix_bound", self.log_det_appendix_bound)
            .put_vec("scatter", &self.scatter)
            .put_vec("chain_r", &self.chain_r)
            .put_vec("chain_e", &self.chain_e)
            .put("theorem1_holds", self.theorem1_holds)
            .put("appendix_det_holds", self.appendix_det_holds)
            .put("chain_holds", self.chain_holds);
        if let Some(s) = &self.sandwich {
            w.put("intercept_var", s.intercept_value)
                .put("sandwich_holds", s.all_hold());
            let vals: Vec<f64> = s.slopes.iter().map(|c| c.value).collect();
            w.put_vec("slope_var", &vals);
        }
        for msg in &self.bounds.warnings {
            w.put("warning", msg);
        }
        w.finish()
    }
}
