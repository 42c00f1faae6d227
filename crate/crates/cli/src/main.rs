use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use iboss_core::experiment::{results_csv, simulate, ExperimentConfig};
use iboss_core::io::{probe, shuffle_split, split, write_dataset, BlockSet, Format};
use iboss_core::kv::KvWriter;
use iboss_core::pipeline::{bench, fit_subdata, select_on_disk, BenchMethod, SelectManifest, SelectMode, BENCH_HEADER};
use iboss_core::simgen::{generate, generate_dataset, CaseKind, CovariateCase};
use iboss_core::{DiagnosticsReport, ErrorClass, RangeStats};

#[derive(Parser)]
#[command(name = "iboss", version, about = "Divide-and-conquer IBOSS subdata selection for linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated dataset.
    Generate(GenerateArgs),
    /// Cut a dataset into block files with a manifest.
    Split(SplitArgs),
    /// Select subdata from every block and write it with a manifest.
    Select(SelectArgs),
    /// Fit least squares on a subdata file and report diagnostics.
    Fit(FitArgs),
    /// Run a Monte Carlo MSE sweep described by a config file.
    Simulate(SimulateArgs),
    /// Time full-data, IBOSS and uniform estimates on a block set.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// normal, lognormal, t2, mix-ordered, mix-shuffled (or 1-5).
    #[arg(long)]
    case: CaseKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise standard deviation of the response.
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Covariates only.
    #[arg(long)]
    no_response: bool,
    /// Defaults to the output extension (`.csv` means CSV, anything else binary).
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, conflicts_with = "blocks", required_unless_present = "blocks")]
    rows_per_block: Option<usize>,
    /// Number of blocks; sequential unless a shuffle seed is given.
    #[arg(long)]
    blocks: Option<usize>,
    /// Assign rows to blocks by a seeded random permutation.
    #[arg(long, requires = "blocks")]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Declared input format; checked against the file.
    #[arg(long)]
    format: Option<Format>,
    /// CSV input has covariate columns only.
    #[arg(long)]
    no_response: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Iboss,
    Poisson,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    blocks_dir: PathBuf,
    #[arg(long)]
    k: usize,
    /// Expected number of blocks; must match the block set.
    #[arg(long = "B", short = 'B')]
    b: Option<usize>,
    #[arg(long, value_enum, default_value = "iboss")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Subdata file; the manifest goes to `<out>.manifest` and the full-data
    /// range statistics to `<out>.ranges`.
    #[arg(long)]
    out: PathBuf,
    /// Output format; defaults to the block format.
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Aggregate {
    Pooled,
    Weighted,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    subdata: PathBuf,
    /// Known noise variance; estimated from the residuals when omitted.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, value_enum, default_value = "pooled")]
    aggregate: Aggregate,
    /// Selection manifest; defaults to `<subdata>.manifest` when present.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Full-data range statistics written by `select`.
    #[arg(long)]
    range_stats: Option<PathBuf>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    /// Overrides `threads` in the config.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `output` in the config; stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    blocks_dir: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long = "B", short = 'B')]
    b: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "full,iboss,uni")]
    methods: Vec<BenchMethod>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn format_for(path: &Path, declared: Option<Format>) -> Format {
    declared.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Binary,
    })
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_blocks(dir: &Path, expected: Option<usize>) -> Result<BlockSet> {
    let set = BlockSet::load(dir)?;
    if let Some(b) = expected {
        if b != set.len() {
            bail!("--B {b} does not match the {} blocks in {}", set.len(), dir.display());
        }
    }
    Ok(set)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let case = CovariateCase::new(a.case, a.p)?;
    let data = if a.no_response { generate(case, a.n, a.seed)? } else { generate_dataset(case, a.n, a.seed, a.noise_sd)? };
    write_dataset(&a.out, &data, format_for(&a.out, a.format))?;
    eprintln!("wrote {} rows x {} covariates to {}", data.rows(), data.n_covariates(), a.out.display());
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let has_response = !a.no_response;
    let manifest = match (a.rows_per_block, a.blocks, a.shuffle_seed) {
        (Some(rows), _, _) => split(&a.input, rows, &a.out_dir, a.format, has_response)?,
        (None, Some(b), Some(seed)) => shuffle_split(&a.input, b, seed, &a.out_dir, a.format, has_response)?,
        (None, Some(b), None) => {
            let (_, meta) = probe(&a.input, a.format, has_response)?;
            if b == 0 || b > meta.n_rows {
                bail!("cannot cut {} rows into {b} blocks", meta.n_rows);
            }
            let rows = meta.n_rows.div_ceil(b);
            if meta.n_rows.div_ceil(rows) != b {
                bail!("{} rows cannot be cut sequentially into {b} blocks; use --rows-per-block or --shuffle-seed", meta.n_rows);
            }
            split(&a.input, rows, &a.out_dir, a.format, has_response)?
        }
        (None, None, _) => unreachable!("clap requires one of --rows-per-block and --blocks"),
    };
    eprintln!("wrote {} blocks ({} rows) to {}", manifest.blocks.len(), manifest.n_rows, a.out_dir.display());
    Ok(())
}

fn cmd_select(a: SelectArgs) -> Result<()> {
    let set = load_blocks(&a.blocks_dir, a.b)?;
    let mode = match a.mode {
        Mode::Iboss => SelectMode::Iboss,
        Mode::Poisson => SelectMode::Poisson { seed: a.seed },
    };
    let sel = select_on_disk(&set, a.k, mode, a.threads, true)?;
    let format = a.format.unwrap_or(set.manifest.format);
    write_dataset(&a.out, &sel.subdata, format)?;
    let manifest = SelectManifest::new(&set, mode, a.k, &sel);
    let manifest_path = sidecar(&a.out, "manifest");
    fs::write(&manifest_path, manifest.to_kv()).with_context(|| format!("writing {}", manifest_path.display()))?;
    if let Some(ranges) = &sel.ranges {
        let path = sidecar(&a.out, "ranges");
        fs::write(&path, ranges.to_kv()).with_context(|| format!("writing {}", path.display()))?;
    }
    if manifest.actual_size < a.k {
        eprintln!("warning: selected {} rows, {} short of k = {}", manifest.actual_size, a.k - manifest.actual_size, a.k);
    }
    eprintln!("selected {} rows from {} blocks into {}", manifest.actual_size, set.len(), a.out.display());
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    if let Some(s) = a.sigma2 {
        if !(s.is_finite() && s > 0.0) {
            bail!("--sigma2 must be positive and finite");
        }
    }
    let manifest_path = a.manifest.clone().or_else(|| Some(sidecar(&a.subdata, "manifest")).filter(|p| p.exists()));
    let manifest = match &manifest_path {
        Some(p) => Some(SelectManifest::from_kv(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        None => None,
    };
    let subdata = iboss_core::io::read_dataset(&a.subdata, None, true)?;
    let weighted = a.aggregate == Aggregate::Weighted;
    let row_block = manifest.as_ref().map(|m| m.row_block.as_slice());
    if weighted && row_block.is_none() {
        bail!("--aggregate weighted needs the selection manifest (pass --manifest)");
    }
    let fit = fit_subdata(&subdata, row_block, weighted, a.sigma2)?;
    let sigma2_used = a.sigma2.unwrap_or(fit.sigma2_hat);

    let mut w = KvWriter::new();
    w.put("aggregate", if weighted { "weighted" } else { "pooled" })
        .put("n_used", fit.n_used)
        .put("p", subdata.n_covariates())
        .put("sigma2_hat", fit.sigma2_hat)
        .put("sigma2_used", sigma2_used)
        .put("sigma2_source", if a.sigma2.is_some() { "supplied" } else { "estimated" })
        .put_vec("beta", fit.beta.as_slice());
    let se: Vec<f64> = (0..fit.beta.len()).map(|i| fit.cov[(i, i)].sqrt()).collect();
    w.put_vec("se", &se);
    for i in 0..fit.cov.nrows() {
        let row: Vec<String> = fit.cov.row(i).iter().map(|v| v.to_string()).collect();
        w.put(format!("cov[{}]", i + 1), row.join(","));
    }
    let mut text = w.finish();

    if let Some(path) = &a.range_stats {
        let stats = RangeStats::from_kv(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?;
        let k = manifest.as_ref().map_or(subdata.rows(), |m| m.k_requested);
        let blocks = stats.blocks.len();
        let report = DiagnosticsReport::compute(subdata.covariates(), &stats, k, blocks, sigma2_used, Some(&fit.cov))?;
        text.push_str("# diagnostics\n");
        text.push_str(&report.to_kv());
    }
    emit(a.out.as_deref(), &text)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg = ExperimentConfig::parse(&text).with_context(|| format!("in {}", a.config.display()))?;
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    let out = a.out.or_else(|| cfg.output.clone());
    let rows = simulate(&cfg)?;
    emit(out.as_deref(), &results_csv(&rows))
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let set = load_blocks(&a.blocks_dir, a.b)?;
    let rows = bench(&set, a.k, &a.methods, a.repeats, a.seed, a.threads)?;
    let mut text = format!("{BENCH_HEADER}\n");
    for r in &rows {
        text.push_str(&r.csv_line());
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<iboss_core::Error>().map(iboss_core::Error::class) {
        Some(ErrorClass::Format) => 2,
        Some(ErrorClass::Quota) => 3,
        Some(ErrorClass::Numerical) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Split(a) => cmd_split(a),
        Command::Select(a) => cmd_select(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
