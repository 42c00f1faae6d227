//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Optional arguments pick criteria by number (`cargo test --test acceptance -- 1 4`).
//! Failures exit nonzero only when `IBOSS_ACCEPTANCE_STRICT=1`.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use iboss_core::dnc::{gather_subdata, partition_in_memory, run_dnc_pooled_fit};
use iboss_core::experiment::{replication_seed, simulate, slope_sq_error, ExperimentConfig, Method, ResultRow};
use iboss_core::iboss::tail_quota;
use iboss_core::io::write_binary;
use iboss_core::pipeline::{bench, fit_subdata, select_on_disk, BenchMethod, SelectMode};
use iboss_core::simgen::{generate_dataset, true_beta};
use iboss_core::{
    iboss_select, kth_smallest, ols_fit, run_dnc_aggregate, run_dnc_select, split, tail_thresholds, BlockSet, CaseKind,
    CovariateCase, DataBlock, DiagnosticsReport, DncParams, Error, Partitioning, RangeStats,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

const SLACK: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Oracles. Everything here works from sorted columns and dense
// factorizations, independent of the library's diagnostics code.

fn sorted_column(z: &DMatrix<f64>, rows: std::ops::Range<usize>, j: usize) -> Vec<f64> {
    let mut v: Vec<f64> = rows.map(|i| z[(i, j)]).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `z_(n-r+1) - z_(r)` on a sorted column.
fn trimmed(sorted: &[f64], r: usize) -> f64 {
    sorted[sorted.len() - r] - sorted[r - 1]
}

fn log_det_lu(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    lu.u().diagonal().iter().map(|d| d.abs().ln()).sum()
}

fn design(z: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(z.nrows(), z.ncols() + 1, |i, j| if j == 0 { 1.0 } else { z[(i, j - 1)] })
}

struct SubdataMoments {
    variances: Vec<f64>,
    lambda_min: f64,
}

fn moments(z: &DMatrix<f64>) -> SubdataMoments {
    let (n, p) = z.shape();
    let mean: Vec<f64> = (0..p).map(|j| z.column(j).sum() / n as f64).collect();
    let c = DMatrix::from_fn(n, p, |i, j| z[(i, j)] - mean[j]);
    let s = c.transpose() * &c / (n as f64 - 1.0);
    let variances: Vec<f64> = (0..p).map(|j| s[(j, j)]).collect();
    let corr = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (variances[i] * variances[j]).sqrt());
    SubdataMoments { variances, lambda_min: SymmetricEigen::new(corr).eigenvalues.min() }
}

/// Oracle values for one grid run.
struct RunOracle {
    n_sub: usize,
    log_det: f64,
    log_zeta: f64,
    log_c_r: f64,
    log_c_e: f64,
    cov: DMatrix<f64>,
    v_lower: Vec<f64>,
    v_upper: Vec<f64>,
    log_appendix: f64,
    scatter: Vec<f64>,
    chain_r: Vec<f64>,
    chain_e: Vec<f64>,
}

fn oracle(data: &DataBlock, blocks: &[DataBlock], sub: &DataBlock, r_b: usize, sigma2: f64) -> RunOracle {
    let z = data.covariates();
    let (n, p) = z.shape();
    let b = blocks.len() as f64;
    let pf = p as f64;
    let k = sub.rows();
    let kf = k as f64;
    let m = moments(sub.covariates());
    let lam = m.lambda_min;
    let x = design(sub.covariates());
    let gram = x.transpose() * &x;
    let log_det = log_det_lu(&gram);
    let cov = gram.lu().try_inverse().expect("nonsingular") * sigma2;

    let mut log_zeta = (pf + 1.0) * kf.ln() - pf * 4f64.ln();
    let mut log_c_r = pf * (lam.ln() - (b * pf).ln());
    let mut log_c_e = log_c_r;
    let mut log_appendix = kf.ln() + pf * ((kf - 1.0).ln() + lam.ln());
    let (mut v_lower, mut v_upper, mut scatter, mut chain_r, mut chain_e) = (vec![], vec![], vec![], vec![], vec![]);
    for j in 0..p {
        let full = sorted_column(z, 0..n, j);
        let range = full[n - 1] - full[0];
        let d_e = trimmed(&full, r_b);
        let mut offset = 0;
        let mut sum_d2 = 0.0;
        for block in blocks {
            let col = sorted_column(z, offset..offset + block.rows(), j);
            sum_d2 += trimmed(&col, r_b).powi(2);
            offset += block.rows();
        }
        log_zeta += 2.0 * range.ln();
        log_c_r += (sum_d2 / (range * range)).ln();
        log_c_e += 2.0 * (d_e / range).ln();
        log_appendix += m.variances[j].ln();
        v_lower.push(4.0 * sigma2 / (kf * range * range));
        let va = 4.0 * pf * b * sigma2 / (kf * lam * sum_d2);
        let ve = 4.0 * pf * b * sigma2 / (kf * lam * d_e * d_e);
        v_upper.push(va.min(ve));
        scatter.push((kf - 1.0) * m.variances[j]);
        chain_r.push(r_b as f64 / 2.0 * sum_d2);
        chain_e.push(r_b as f64 / 2.0 * d_e * d_e);
    }
    RunOracle { n_sub: k, log_det, log_zeta, log_c_r, log_c_e, cov, v_lower, v_upper, log_appendix, scatter, chain_r, chain_e }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Criteria 1, 2, 8 (determinant bound) and 9 share one grid of runs.

struct GridRun {
    label: String,
    o: RunOracle,
    report: DiagnosticsReport,
    sigma2: f64,
}

struct Grid {
    runs: Vec<GridRun>,
    guarded: Vec<String>,
    errors: Vec<String>,
    seconds: f64,
}

const GRID_SEEDS: u64 = 3;

fn run_grid() -> Grid {
    let start = Instant::now();
    let (n, k, sigma2) = (10_000, 400, 1.0);
    let mut grid = Grid { runs: vec![], guarded: vec![], errors: vec![], seconds: 0.0 };
    for (ci, kind) in CaseKind::ALL.iter().enumerate() {
        for p in [2, 5, 50] {
            for b in [1, 2, 5, 10] {
                for s in 0..GRID_SEEDS {
                    let label = format!("{kind} p={p} B={b} seed={s}");
                    match DncParams::new(k, b, n, p, Partitioning::Sequential) {
                        Err(Error::QuotaUnderflow { .. }) if k < 2 * p * b => {
                            if s == 0 {
                                grid.guarded.push(format!("{kind} p={p} B={b}"));
                            }
                            continue;
                        }
                        Err(e) => {
                            grid.errors.push(format!("{label}: {e}"));
                            continue;
                        }
                        Ok(params) => {
                            let seed = replication_seed(1, &[ci as u64, p as u64, b as u64, s]);
                            match grid_run(*kind, p, n, &params, seed, sigma2) {
                                Ok((o, report)) => grid.runs.push(GridRun { label, o, report, sigma2 }),
                                Err(e) => grid.errors.push(format!("{label}: {e}")),
                            }
                        }
                    }
                }
            }
        }
    }
    grid.seconds = start.elapsed().as_secs_f64();
    grid
}

fn grid_run(
    kind: CaseKind,
    p: usize,
    n: usize,
    params: &DncParams,
    seed: u64,
    sigma2: f64,
) -> iboss_core::Result<(RunOracle, DiagnosticsReport)> {
    let data = generate_dataset(CovariateCase::new(kind, p)?, n, seed, sigma2.sqrt())?;
    let blocks = partition_in_memory(&data, params.blocks, Partitioning::Sequential)?;
    let (sel, fit) = run_dnc_pooled_fit(&blocks, params, Some(sigma2))?;
    let sub = gather_subdata(&blocks, &sel.combined)?;
    let stats = RangeStats::from_blocks(&blocks, params.r_b, tail_quota(params.k, p))?;
    let report = DiagnosticsReport::compute(sub.covariates(), &stats, params.k, params.blocks, sigma2, Some(&fit.cov))?;
    Ok((oracle(&data, &blocks, &sub, params.r_b, sigma2), report))
}

fn grid_preamble(grid: &Grid) -> Option<Outcome> {
    if grid.errors.is_empty() {
        None
    } else {
        Some(Outcome::new(false, format!("{} runs errored, first: {}", grid.errors.len(), grid.errors[0])))
    }
}

fn ac1(grid: &Grid) -> Outcome {
    if let Some(o) = grid_preamble(grid) {
        return o;
    }
    let mut failures = Vec::new();
    let mut min_margin = f64::INFINITY;
    for run in &grid.runs {
        let (o, r) = (&run.o, &run.report);
        let agree = r.n_subdata == o.n_sub
            && close(r.log_det, o.log_det, 1e-8)
            && close(r.log_zeta, o.log_zeta, 1e-10)
            && close(r.theorem1.log_c_r, o.log_c_r, 1e-8)
            && close(r.theorem1.log_c_e, o.log_c_e, 1e-8);
        let ratio = (o.log_det - o.log_zeta).exp();
        let bound = o.log_c_r.max(o.log_c_e).exp();
        let holds = ratio >= bound - SLACK;
        min_margin = min_margin.min(o.log_det - o.log_zeta - o.log_c_r.max(o.log_c_e));
        if !agree || !holds || !r.theorem1_holds {
            failures.push(format!("{} (agree={agree}, ratio={ratio:e}, bound={bound:e})", run.label));
        }
    }
    let fast = grid.seconds < 120.0;
    Outcome::new(
        failures.is_empty() && fast,
        format!(
            "{} runs, min log margin {min_margin:.3}, {:.1}s; quota guard fired for {} cells ({}){}",
            grid.runs.len(),
            grid.seconds,
            grid.guarded.len(),
            grid.guarded.join(", "),
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join("; ")) }
        ),
    )
}

fn ac2(grid: &Grid) -> Outcome {
    if let Some(o) = grid_preamble(grid) {
        return o;
    }
    let mut failures = Vec::new();
    let mut checked = 0;
    for run in &grid.runs {
        let (o, r) = (&run.o, &run.report);
        let p = o.v_lower.len();
        let mut ok = run.sigma2 / o.n_sub as f64 <= o.cov[(0, 0)];
        for j in 0..p {
            let v = o.cov[(j + 1, j + 1)];
            ok &= o.v_lower[j] <= v && v <= o.v_upper[j] + SLACK;
            ok &= close(r.bounds.v_lower[j], o.v_lower[j], 1e-8) && close(r.bounds.upper(j), o.v_upper[j], 1e-8);
            checked += 1;
        }
        ok &= r.sandwich.as_ref().is_some_and(|s| s.all_hold());
        if !ok {
            failures.push(run.label.clone());
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("{} runs, {checked} slope sandwiches{}", grid.runs.len(), fail_list(&failures)),
    )
}

fn ac8_determinant(grid: &Grid) -> (bool, String) {
    let bad: Vec<String> = grid
        .runs
        .iter()
        .filter(|run| !(run.o.log_appendix <= run.o.log_det + SLACK * run.o.log_det.abs().max(1.0) && run.report.appendix_det_holds))
        .map(|run| run.label.clone())
        .collect();
    (bad.is_empty(), format!("determinant bound on {} runs{}", grid.runs.len(), fail_list(&bad)))
}

fn ac9(grid: &Grid) -> Outcome {
    if let Some(o) = grid_preamble(grid) {
        return o;
    }
    let mut bad = Vec::new();
    let mut tightest = f64::INFINITY;
    for run in &grid.runs {
        let o = &run.o;
        let mut ok = run.report.chain_holds;
        for j in 0..o.scatter.len() {
            let tol = SLACK * o.scatter[j].max(1.0);
            ok &= o.scatter[j] + tol >= o.chain_r[j] && o.scatter[j] + tol >= o.chain_e[j];
            tightest = tightest.min(o.scatter[j] / o.chain_r[j].max(o.chain_e[j]));
        }
        if !ok {
            bad.push(run.label.clone());
        }
    }
    Outcome::new(bad.is_empty(), format!("{} runs, tightest ratio {tightest:.3}{}", grid.runs.len(), fail_list(&bad)))
}

fn fail_list(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!("; failed: {}", items.join("; "))
    }
}

// ---------------------------------------------------------------------------

fn random_block(rng: &mut ChaCha8Rng, rows: usize, p: usize) -> DataBlock {
    let style = rng.random_range(0..3);
    let z = DMatrix::from_fn(rows, p, |_, _| match style {
        0 => rng.random_range(-5.0..5.0),
        1 => rng.random_range(0..8) as f64,
        _ => (rng.random::<f64>() * 6.0).exp(),
    });
    let y = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
    DataBlock::new(z, Some(y)).unwrap()
}

fn ac3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = Vec::new();
    for inst in 0..50 {
        let p = rng.random_range(1..=6);
        let rows = rng.random_range(50..3000);
        let k = rng.random_range(2 * p..=rows / 2);
        let block = random_block(&mut rng, rows, p);
        let params = DncParams::new(k, 1, rows, p, Partitioning::Sequential).unwrap();
        let a = run_dnc_select(std::slice::from_ref(&block), &params);
        let b = iboss_select(&block, k);
        let same = match (&a, &b) {
            (Ok(a), Ok(b)) => a == b && format!("{a:?}").into_bytes() == format!("{b:?}").into_bytes(),
            _ => false,
        };
        if !same {
            bad.push(format!("instance {inst} (rows={rows}, p={p}, k={k})"));
        }
    }
    Outcome::new(bad.is_empty(), format!("50 instances{}", fail_list(&bad)))
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for inst in 0..50 {
        let b = if inst % 2 == 0 { 2 } else { 5 };
        let p = rng.random_range(1..=5);
        let rb = rng.random_range(1..=5);
        let k = 2 * p * b * rb;
        let rows = rng.random_range(k * 3..k * 10).max(200);
        let kind = CaseKind::ALL[rng.random_range(0..3)];
        let data = generate_dataset(CovariateCase::new(kind, p).unwrap(), rows, rng.random(), 1.0).unwrap();
        let blocks = partition_in_memory(&data, b, Partitioning::Sequential).unwrap();
        let params = DncParams::new(k, b, rows, p, Partitioning::Sequential).unwrap();
        let agg = run_dnc_aggregate(&blocks, &params, Some(1.0));
        let pooled = run_dnc_pooled_fit(&blocks, &params, Some(1.0));
        match (agg, pooled) {
            (Ok(agg), Ok((_, pooled))) => {
                let scale = pooled.beta.amax().max(f64::MIN_POSITIVE);
                let rel = (&agg.beta - &pooled.beta).amax() / scale;
                worst = worst.max(rel);
                if rel > 1e-8 {
                    bad.push(format!("instance {inst}: {rel:e}"));
                }
            }
            (a, b) => bad.push(format!("instance {inst}: {:?} / {:?}", a.err(), b.err())),
        }
    }
    Outcome::new(bad.is_empty(), format!("50 instances, worst relative gap {worst:.1e}{}", fail_list(&bad)))
}

fn ac5() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::parse(
        "case=normal,lognormal\np=50\nn=5000,10000,100000\nk=1000\nb=1,5\nmethods=iboss,uni\nreplications=200\nseed=5\n",
    )
    .unwrap();
    let rows = match simulate(&cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("simulation failed: {e}")),
    };
    let mut notes = Vec::new();
    let mut pass = true;
    for case in [CaseKind::Normal, CaseKind::LogNormal] {
        for b in [1, 5] {
            let series = |m: Method| -> Vec<&ResultRow> {
                let mut v: Vec<&ResultRow> = rows.iter().filter(|r| r.case == case && r.b == b && r.method == m).collect();
                v.sort_by_key(|r| r.n);
                v
            };
            let dnc = series(Method::Iboss);
            let steps: Vec<String> = dnc
                .windows(2)
                .map(|w| {
                    let gap = w[0].mse - w[1].mse;
                    let need = 2.0 * (w[0].mse_se.powi(2) + w[1].mse_se.powi(2)).sqrt();
                    if gap < need {
                        pass = false;
                    }
                    format!("{:.4}->{:.4} (gap {:.4}, need {:.4})", w[0].mse, w[1].mse, gap, need)
                })
                .collect();
            let uni = series(Method::Uni);
            let (lo, hi) = uni.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(r.mse), h.max(r.mse)));
            if hi > 2.0 * lo {
                pass = false;
            }
            notes.push(format!("{case} B={b}: iboss {}; poisson spread {:.2}x", steps.join(", "), hi / lo));
        }
    }
    Outcome::new(pass, format!("{}; {:.0}s", notes.join(" | "), start.elapsed().as_secs_f64()))
}

fn ac6() -> Outcome {
    let start = Instant::now();
    let (n, p, k, t) = (1_000_000, 2, 2000, 50);
    let bs = [1usize, 10, 100, 500];
    let tmp = TempDir::new().unwrap();
    let source = tmp.path().join("data.bin");
    let (_, beta1) = true_beta(p);
    let mut iboss_err = vec![Vec::with_capacity(t); bs.len()];
    let mut uni_err = vec![Vec::with_capacity(t); bs.len()];
    for rep in 0..t {
        let seed = replication_seed(6, &[rep as u64]);
        let run = || -> iboss_core::Result<Vec<(f64, f64)>> {
            let data = generate_dataset(CovariateCase::new(CaseKind::Normal, p)?, n, seed, 1.0)?;
            write_binary(&source, &data)?;
            drop(data);
            let mut out = Vec::new();
            for &b in &bs {
                let dir = tmp.path().join(format!("b{b}"));
                if dir.exists() {
                    fs::remove_dir_all(&dir).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                }
                split(&source, n / b, &dir, None, true)?;
                let set = BlockSet::load(&dir)?;
                let dnc = select_on_disk(&set, k, SelectMode::Iboss, None, false)?;
                let fit_d = fit_subdata(&dnc.subdata, None, false, None)?;
                let uni = select_on_disk(&set, k, SelectMode::Poisson { seed }, None, false)?;
                let fit_u = fit_subdata(&uni.subdata, None, false, None)?;
                out.push((slope_sq_error(&fit_d.beta, &beta1), slope_sq_error(&fit_u.beta, &beta1)));
            }
            Ok(out)
        };
        match run() {
            Ok(v) => {
                for (i, (d, u)) in v.into_iter().enumerate() {
                    iboss_err[i].push(d);
                    uni_err[i].push(u);
                }
            }
            Err(e) => return Outcome::new(false, format!("replication {rep}: {e}")),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let dnc: Vec<f64> = iboss_err.iter().map(|v| mean(v)).collect();
    let uni: Vec<f64> = uni_err.iter().map(|v| mean(v)).collect();
    let (dlo, dhi) = dnc.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &m| (l.min(m), h.max(m)));
    let uni_min = uni.iter().copied().fold(f64::INFINITY, f64::min);
    let spread_ok = dhi < 3.0 * dlo;
    let primary = uni_min >= 5.0 * dhi;
    let fallback = dnc.iter().zip(&uni).all(|(d, u)| d < u);
    let gate = if primary {
        "5x gate"
    } else if fallback {
        "fallback gate (5x gate missed)"
    } else {
        "no gate"
    };
    let table: Vec<String> = bs.iter().zip(dnc.iter().zip(&uni)).map(|(b, (d, u))| format!("B={b}: {d:.2e}/{u:.2e}")).collect();
    Outcome::new(
        spread_ok && (primary || fallback),
        format!(
            "iboss/poisson MSE {}; iboss spread {:.2}x; poisson/worst iboss {:.2}x; {gate}; {:.0}s",
            table.join(", "),
            dhi / dlo,
            uni_min / dhi,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn ac7() -> Outcome {
    let (n, p, k, b) = (1_000_000, 50, 10_000, 5);
    let tmp = TempDir::new().unwrap();
    let source = tmp.path().join("data.bin");
    let prepared = (|| -> iboss_core::Result<BlockSet> {
        let data = generate_dataset(CovariateCase::new(CaseKind::Normal, p)?, n, 7, 1.0)?;
        write_binary(&source, &data)?;
        drop(data);
        split(&source, n / b, &tmp.path().join("blocks"), None, true)?;
        fs::remove_file(&source).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        BlockSet::load(&tmp.path().join("blocks"))
    })();
    let set = match prepared {
        Ok(s) => s,
        Err(e) => return Outcome::new(false, format!("setup failed: {e}")),
    };
    let rows = match bench(&set, k, &[BenchMethod::Full, BenchMethod::Iboss, BenchMethod::Uni], 3, 7, Some(1)) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("bench failed: {e}")),
    };
    let (full, dnc, uni) = (rows[0].median_seconds, rows[1].median_seconds, rows[2].median_seconds);
    Outcome::new(
        full > dnc && dnc > uni && dnc < 0.5 * full,
        format!("median of 3, one thread: full {full:.3}s, iboss {dnc:.3}s, uni {uni:.3}s, iboss/full {:.2}", dnc / full),
    )
}

/// Brute-force normal equations with partial pivoting.
fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let n = x.ncols();
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = (0..x.nrows()).map(|r| x[(r, i)] * x[(r, j)]).sum();
        }
        a[i][n] = (0..x.nrows()).map(|r| x[(r, i)] * y[r]).sum();
    }
    for c in 0..n {
        let piv = (c..n).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
        a.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            let pivot = a[c].clone();
            for (dst, src) in a[r][c..].iter_mut().zip(&pivot[c..]) {
                *dst -= f * src;
            }
        }
    }
    let mut b = vec![0.0; n];
    for c in (0..n).rev() {
        b[c] = (a[c][n] - (c + 1..n).map(|k| a[c][k] * b[k]).sum::<f64>()) / a[c][c];
    }
    b
}

fn ac8(grid: &Grid) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut qs_bad = 0;
    let mut checks = 0usize;
    for v_idx in 0..10_000 {
        let len = if v_idx % 10 == 0 { rng.random_range(1..=10_000) } else { rng.random_range(1..=300) };
        let dup = rng.random_bool(0.3);
        let v: Vec<f64> = (0..len)
            .map(|_| if dup { rng.random_range(0..10) as f64 } else { rng.random_range(-1e3..1e3) })
            .collect();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let ks: Vec<usize> = if len <= 300 { (1..=len).collect() } else { (0..50).map(|_| rng.random_range(1..=len)).collect() };
        for k in ks {
            checks += 1;
            if kth_smallest(&v, k).unwrap() != sorted[k - 1] {
                qs_bad += 1;
            }
        }
        let r = rng.random_range(1..=len);
        let t = tail_thresholds(&v, r).unwrap();
        if t.lower != sorted[r - 1] || t.upper != sorted[len - r] {
            qs_bad += 1;
        }
    }

    let mut ols_bad = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let p = rng.random_range(1..=8);
        let rows = rng.random_range(p + 5..=300);
        let scale: Vec<f64> = (0..p).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
        let z = DMatrix::from_fn(rows, p, |_, j| rng.random_range(-1.0..1.0) * scale[j]);
        let y = DVector::from_fn(rows, |_, _| rng.random_range(-5.0..5.0));
        let x = design(&z);
        let fit = ols_fit(&x, &y, Some(1.0)).unwrap();
        let oracle = normal_equations(&x, &y);
        let sc = oracle.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let rel = fit.beta.iter().zip(&oracle).map(|(a, b)| (a - b).abs() / sc).fold(0.0, f64::max);
        worst = worst.max(rel);
        if rel > 1e-8 {
            ols_bad += 1;
        }
    }
    let (det_ok, det_note) = ac8_determinant(grid);
    Outcome::new(
        qs_bad == 0 && ols_bad == 0 && det_ok && grid.errors.is_empty(),
        format!(
            "quickselect: 10000 vectors, {checks} order statistics, {qs_bad} mismatches; OLS: 500 instances, worst relative gap {worst:.1e}; {det_note}"
        ),
    )
}

type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() -> ExitCode {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| picked.is_empty() || picked.contains(&n);
    let strict = std::env::var("IBOSS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let grid = if [1, 2, 8, 9].iter().any(|&n| want(n)) { Some(run_grid()) } else { None };
    let criteria: [Criterion<'_>; 9] = [
        (1, "determinant ratio lower bound", Box::new(|| ac1(grid.as_ref().unwrap()))),
        (2, "variance sandwich", Box::new(|| ac2(grid.as_ref().unwrap()))),
        (3, "single-block reduction", Box::new(ac3)),
        (4, "aggregate equals pooled", Box::new(ac4)),
        (5, "MSE against N", Box::new(ac5)),
        (6, "MSE against B on disk", Box::new(ac6)),
        (7, "timing order", Box::new(ac7)),
        (8, "oracle suites", Box::new(|| ac8(grid.as_ref().unwrap()))),
        (9, "sample-variance chain", Box::new(|| ac9(grid.as_ref().unwrap()))),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, f) in &criteria {
        if !want(*n) {
            continue;
        }
        ran += 1;
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("AC{n} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed > 0 && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
