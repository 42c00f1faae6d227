//! Monte Carlo replication sweeps reporting empirical slope MSE.
//!
//! A config is flat `key=value` text. Grid keys take comma lists and may also
//! repeat; every value is added to the grid.
//!
//! ```text
//! case=normal,lognormal
//! p=50
//! n=5000,10000,100000
//! k=1000          # or rb=5 to derive k = 2 p B r_B per B
//! b=1,5
//! methods=iboss,uni
//! replications=200
//! seed=20240501
//! sigma=1
//! partitioning=sequential
//! threads=4
//! output=results.csv
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::baselines::{full_data_dnc_fit_with_threads, poisson_select_blocks};
use crate::dnc::{gather_subdata, partition_in_memory, run_dnc_pooled_fit, DncParams, Partitioning};
use crate::error::{Error, Result};
use crate::estimation::ols_fit;
use crate::iboss::tail_quota;
use crate::kv::{Entry, KvDoc};
use crate::simgen::{generate_dataset, true_beta, CaseKind, CovariateCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Iboss,
    Uni,
    Full,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Iboss => "iboss",
            Method::Uni => "uni",
            Method::Full => "full",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iboss" | "dnc" => Ok(Method::Iboss),
            "uni" | "poisson" | "uniform" => Ok(Method::Uni),
            "full" => Ok(Method::Full),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    Sequential,
    /// Each replication shuffles rows with a seed derived from its own.
    Shuffle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub cases: Vec<CaseKind>,
    pub p: usize,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub rb: Vec<usize>,
    pub b: Vec<usize>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub seed: u64,
    /// Noise standard deviation.
    pub sigma: f64,
    pub partitioning: PartitionMode,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
}

/// One `(B, k)` cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub b: usize,
    pub k: usize,
}

fn collect_list<T: FromStr>(doc: &KvDoc, key: &str) -> Result<Vec<(T, usize)>>
where
    T::Err: fmt::Display,
{
    let mut out = Vec::new();
    for e in doc.get_all(key) {
        for v in e.parse_list::<T>()? {
            out.push((v, e.line));
        }
    }
    Ok(out)
}

fn config_error(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config { line, key: key.into(), message: message.into() }
}

const KNOWN_KEYS: [&str; 13] = [
    "case", "p", "n", "k", "rb", "b", "methods", "replications", "seed", "sigma", "partitioning", "threads", "output",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        if let Some(e) = doc.entries.iter().find(|e| !KNOWN_KEYS.contains(&e.key.as_str())) {
            return Err(e.error("unknown key"));
        }
        let positive = |e: &Entry, v: usize| if v == 0 { Err(e.error("must be positive")) } else { Ok(v) };

        let cases: Vec<CaseKind> = collect_list::<String>(&doc, "case")?
            .into_iter()
            .map(|(s, line)| s.parse::<CaseKind>().map_err(|_| config_error(line, "case", format!("unknown case `{s}`"))))
            .collect::<Result<_>>()?;
        if cases.is_empty() {
            return Err(config_error(0, "case", "missing required key"));
        }
        let p_entry = doc.require("p")?;
        let p = positive(p_entry, p_entry.parse()?)?;

        let n: Vec<(usize, usize)> = collect_list(&doc, "n")?;
        let k: Vec<(usize, usize)> = collect_list(&doc, "k")?;
        let rb: Vec<(usize, usize)> = collect_list(&doc, "rb")?;
        let b: Vec<(usize, usize)> = collect_list(&doc, "b")?;
        for (key, list) in [("n", &n), ("k", &k), ("rb", &rb), ("b", &b)] {
            if let Some(&(_, line)) = list.iter().find(|(v, _)| *v == 0) {
                return Err(config_error(line, key, "values must be positive"));
            }
        }
        if n.is_empty() {
            return Err(config_error(0, "n", "missing required key"));
        }
        if k.is_empty() == rb.is_empty() {
            return Err(config_error(0, "k", "give exactly one of `k` and `rb`"));
        }
        let b = if b.is_empty() { vec![(1, 0)] } else { b };

        let methods: Vec<Method> = match doc.get("methods") {
            Some(e) => e.parse_list::<String>()?.iter().map(|s| s.parse().map_err(|_| e.error(format!("unknown method `{s}`")))).collect::<Result<_>>()?,
            None => vec![Method::Iboss, Method::Uni],
        };
        let replications = match doc.get("replications") {
            Some(e) => positive(e, e.parse()?)?,
            None => return Err(config_error(0, "replications", "missing required key")),
        };
        let sigma: f64 = doc.parse_opt("sigma")?.unwrap_or(1.0);
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(doc.require("sigma")?.error("must be finite and nonnegative"));
        }
        let partitioning = match doc.get("partitioning") {
            None => PartitionMode::Sequential,
            Some(e) => match e.value.as_str() {
                "sequential" => PartitionMode::Sequential,
                "shuffle" | "random" => PartitionMode::Shuffle,
                _ => return Err(e.error("expected sequential or shuffle")),
            },
        };
        let threads = match doc.get("threads") {
            Some(e) => Some(positive(e, e.parse()?)?),
            None => None,
        };

        let cfg = Self {
            cases,
            p,
            n: n.iter().map(|x| x.0).collect(),
            k: k.iter().map(|x| x.0).collect(),
            rb: rb.iter().map(|x| x.0).collect(),
            b: b.iter().map(|x| x.0).collect(),
            methods,
            replications,
            seed: doc.parse_opt("seed")?.unwrap_or(0),
            sigma,
            partitioning,
            threads,
            output: doc.get("output").map(|e| PathBuf::from(&e.value)),
        };

        for &(nv, line) in &n {
            if cfg.cases.iter().any(|c| c.is_mixture()) && nv % 5 != 0 {
                return Err(config_error(line, "n", format!("mixture cases need n divisible by 5, got {nv}")));
            }
            for pt in cfg.grid() {
                if pt.k > nv {
                    return Err(config_error(line, "n", format!("k = {} exceeds n = {nv}", pt.k)));
                }
                if pt.b > nv {
                    return Err(config_error(line, "n", format!("B = {} exceeds n = {nv}", pt.b)));
                }
            }
        }
        if cfg.methods.contains(&Method::Iboss) {
            if let Some(pt) = cfg.grid().into_iter().find(|pt| pt.k < 2 * p * pt.b) {
                return Err(Error::QuotaUnderflow { k: pt.k, p, blocks: pt.b });
            }
        }
        Ok(cfg)
    }

    /// `(B, k)` cells in config order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &b in &self.b {
            if self.rb.is_empty() {
                out.extend(self.k.iter().map(|&k| GridPoint { b, k }));
            } else {
                out.extend(self.rb.iter().map(|&rb| GridPoint { b, k: 2 * self.p * b * rb }));
            }
        }
        out
    }
}

pub const RESULTS_HEADER: &str = "case,method,n,p,k,b,r_b,replications,mse,mse_se,intercept_mse,mean_subdata_size";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub case: CaseKind,
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub b: usize,
    pub r_b: usize,
    pub replications: usize,
    pub mse: f64,
    pub mse_se: f64,
    pub intercept_mse: f64,
    pub mean_subdata_size: f64,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:e},{:e},{:e},{}",
            self.case,
            self.method,
            self.n,
            self.p,
            self.k,
            self.b,
            self.r_b,
            self.replications,
            self.mse,
            self.mse_se,
            self.intercept_mse,
            self.mean_subdata_size
        )
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Empirical MSE over replications with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseSummary {
    pub mse: f64,
    pub se: f64,
}

pub fn mse_summary(sq_errors: &[f64]) -> MseSummary {
    let t = sq_errors.len() as f64;
    if sq_errors.is_empty() {
        return MseSummary { mse: f64::NAN, se: f64::NAN };
    }
    let mse = sq_errors.iter().sum::<f64>() / t;
    let se = if sq_errors.len() > 1 {
        let var = sq_errors.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (t - 1.0);
        (var / t).sqrt()
    } else {
        0.0
    };
    MseSummary { mse, se }
}

/// `||beta1_hat - beta1||^2` over slopes only.
pub fn slope_sq_error(beta: &DVector<f64>, beta1: &DVector<f64>) -> f64 {
    beta.rows(1, beta1.len()).iter().zip(beta1.iter()).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Per-replication seed derived from the master seed and the cell.
pub fn replication_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = master ^ 0x9E37_79B9_7F4A_7C15;
    for &x in parts {
        h = splitmix(h ^ x.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One replication's outcome for a `(grid point, method)` cell.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    slope_sq: f64,
    intercept_sq: f64,
    size: usize,
}

fn run_replication(cfg: &ExperimentConfig, case: CaseKind, n: usize, rep: usize) -> Result<Vec<Outcome>> {
    let seed = replication_seed(cfg.seed, &[case as u64, n as u64, rep as u64]);
    let covariate_case = CovariateCase::new(case, cfg.p)?;
    let data = generate_dataset(covariate_case, n, seed, cfg.sigma)?;
    let (b0, b1) = true_beta(cfg.p);
    let score = |beta: &DVector<f64>, size: usize| Outcome {
        slope_sq: slope_sq_error(beta, &b1),
        intercept_sq: (beta[0] - b0).powi(2),
        size,
    };
    let partitioning = match cfg.partitioning {
        PartitionMode::Sequential => Partitioning::Sequential,
        PartitionMode::Shuffle => Partitioning::RandomShuffle { seed: splitmix(seed) },
    };

    let mut out = Vec::new();
    let mut cached: Option<(usize, Vec<crate::data::DataBlock>)> = None;
    for pt in cfg.grid() {
        if cached.as_ref().is_none_or(|(b, _)| *b != pt.b) {
            cached = Some((pt.b, partition_in_memory(&data, pt.b, partitioning)?));
        }
        let blocks = &cached.as_ref().expect("partitioned").1;
        for &method in &cfg.methods {
            let o = match method {
                Method::Iboss => {
                    let params = DncParams::new(pt.k, pt.b, n, cfg.p, partitioning)?.with_threads(1);
                    let (sel, fit) = run_dnc_pooled_fit(blocks, &params, None)?;
                    score(&fit.beta, sel.combined.len())
                }
                Method::Uni => {
                    let sel = poisson_select_blocks(blocks, pt.k, seed)?;
                    let sub = gather_subdata(blocks, &sel)?;
                    let fit = ols_fit(&sub.design_matrix(), sub.responses().ok_or(Error::MissingResponses)?, None)?;
                    score(&fit.beta, sel.len())
                }
                Method::Full => {
                    let fit = full_data_dnc_fit_with_threads(blocks, None, Some(1))?;
                    score(&fit.beta, n)
                }
            };
            out.push(o);
        }
    }
    Ok(out)
}

/// Runs the whole grid. Replications run in parallel; results are reduced in
/// replication order, so output does not depend on the thread count.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let pool = match cfg.threads {
        Some(t) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let grid = cfg.grid();
    let mut rows = Vec::new();
    for &case in &cfg.cases {
        for &n in &cfg.n {
            let work = || -> Result<Vec<Vec<Outcome>>> {
                (0..cfg.replications).into_par_iter().map(|rep| run_replication(cfg, case, n, rep)).collect()
            };
            let reps = match &pool {
                Some(p) => p.install(work)?,
                None => work()?,
            };
            let mut cell = 0;
            for pt in &grid {
                for &method in &cfg.methods {
                    let slope: Vec<f64> = reps.iter().map(|r| r[cell].slope_sq).collect();
                    let intercept: Vec<f64> = reps.iter().map(|r| r[cell].intercept_sq).collect();
                    let size = reps.iter().map(|r| r[cell].size as f64).sum::<f64>() / reps.len() as f64;
                    let s = mse_summary(&slope);
                    rows.push(ResultRow {
                        case,
                        method,
                        n,
                        p: cfg.p,
                        k: pt.k,
                        b: pt.b,
                        r_b: tail_quota(pt.k, cfg.p * pt.b),
                        replications: cfg.replications,
                        mse: s.mse,
                        mse_se: s.se,
                        intercept_mse: mse_summary(&intercept).mse,
                        mean_subdata_size: size,
                    });
                    cell += 1;
                }
            }
        }
    }
    Ok(rows)
}
