//! `lidx` command line: build, query, inspect and benchmark tables.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/corruption error.
//! Machine-readable output goes to stdout; diagnostics go to stderr.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lidx::bench::{
    run_comparison, BenchOutput, ComparisonInput, SyntheticSource, WorkloadConfig, WorkloadKind,
};
use lidx::{
    build_table, open_table, BinaryFileSource, BlockCache, BuildConfig, CacheConfig, Error,
    IndexKind, RecordSource, TextFileSource,
};

#[derive(Parser)]
#[command(name = "lidx", version, about = "Learned-index sorted-table storage engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a table file from a record stream.
    Build(BuildArgs),
    /// Look up one key and print its value to stdout.
    Get(GetArgs),
    /// Print consecutive records starting at a key, tab-separated.
    Scan(ScanArgs),
    /// Print table statistics.
    Stats(StatsArgs),
    /// Build both index kinds from one seeded stream and compare them.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexTypeArg {
    Learned,
    TwoLevel,
}

impl From<IndexTypeArg> for IndexKind {
    fn from(v: IndexTypeArg) -> IndexKind {
        match v {
            IndexTypeArg::Learned => IndexKind::Learned,
            IndexTypeArg::TwoLevel => IndexKind::TwoLevel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WorkloadArg {
    Point,
    Scan,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct BuildArgs {
    /// Output table file.
    #[arg(long)]
    table: PathBuf,
    /// Input record file (binary framing by default; see --text).
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Treat --input as tab-separated `key<TAB>value` lines.
    #[arg(long, requires = "input")]
    text: bool,
    /// Generate a seeded synthetic stream instead of reading a file.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 1_000_000)]
    rows: u64,
    #[arg(long, default_value_t = 1024)]
    value_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Target average block size in bytes for the learned index.
    #[arg(long, default_value_t = lidx::table::DEFAULT_TAU)]
    tau: u64,
    /// Fill threshold in bytes for baseline data blocks.
    #[arg(long, default_value_t = lidx::table::DEFAULT_BLOCK_SIZE)]
    block_size: u64,
    #[arg(long, value_enum, default_value = "learned")]
    index_type: IndexTypeArg,
}

#[derive(Args)]
struct CacheArgs {
    /// Block cache capacity in MiB.
    #[arg(long, default_value_t = 64)]
    cache_mb: u64,
    /// Synthetic per-miss fetch latency in microseconds.
    #[arg(long, default_value_t = 0)]
    fetch_latency_us: u64,
}

impl CacheArgs {
    fn cache(&self) -> BlockCache {
        BlockCache::new(CacheConfig {
            capacity_bytes: self.cache_mb << 20,
            fetch_latency: Duration::from_micros(self.fetch_latency_us),
            ..CacheConfig::default()
        })
    }
}

#[derive(Args)]
struct GetArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    key: String,
    #[command(flatten)]
    cache: CacheArgs,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    table: PathBuf,
    /// Start key; scan begins at the first key at or after it.
    #[arg(long)]
    start: String,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[command(flatten)]
    cache: CacheArgs,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1_000_000)]
    rows: u64,
    #[arg(long, default_value_t = 1024)]
    value_size: usize,
    #[arg(long, default_value_t = lidx::table::DEFAULT_TAU)]
    tau: u64,
    /// Baseline data block fill threshold (defaults to --tau).
    #[arg(long)]
    block_size: Option<u64>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Outstanding requests each worker keeps in flight.
    #[arg(long, default_value_t = 16)]
    inflight: usize,
    #[arg(long, default_value_t = 100_000)]
    ops: u64,
    #[arg(long, value_enum, default_value = "point")]
    workload: WorkloadArg,
    #[arg(long, default_value_t = 100)]
    scan_len: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    cache: CacheArgs,
    /// Re-run each index kind against its now-warm cache and report both
    /// phases.
    #[arg(long)]
    warm: bool,
    /// Build tables here and keep them (default: a temp dir, deleted).
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here and still exit 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lidx: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Build(args) => cmd_build(args),
        Cmd::Get(args) => cmd_get(args),
        Cmd::Scan(args) => cmd_scan(args),
        Cmd::Stats(args) => cmd_stats(args),
        Cmd::Bench(args) => cmd_bench(args),
    }
}

fn cmd_build(args: BuildArgs) -> Result<(), Error> {
    let config = BuildConfig {
        index_kind: args.index_type.into(),
        tau: args.tau,
        block_size: args.block_size,
        ..BuildConfig::default()
    };
    let source: Box<dyn RecordSource> = match (&args.input, args.synthetic) {
        (Some(path), false) => {
            if args.text {
                Box::new(TextFileSource::new(path))
            } else {
                Box::new(BinaryFileSource::new(path))
            }
        }
        (None, true) => Box::new(SyntheticSource::new(args.rows, args.value_size, args.seed)),
        _ => {
            return Err(Error::InvalidInput(
                "exactly one of --input or --synthetic is required".into(),
            ))
        }
    };
    let report = build_table(source.as_ref(), &config, &args.table)?;
    eprintln!(
        "built {} table: {} records, {} blocks, {} data bytes, {} index bytes{}",
        report.index_kind.name(),
        report.record_count,
        report.n_blocks,
        report.data_bytes,
        report.index_bytes,
        if report.fell_back {
            " (degenerate model; fell back to two_level)"
        } else {
            ""
        }
    );
    Ok(())
}

fn cmd_get(args: GetArgs) -> Result<(), Error> {
    let table = open_table(&args.table, args.cache.cache())?;
    match table.get(args.key.as_bytes())? {
        Some(value) => {
            let mut out = std::io::stdout().lock();
            out.write_all(&value)?;
            out.flush()?;
        }
        None => eprintln!("(key not found)"),
    }
    Ok(())
}

fn cmd_scan(args: ScanArgs) -> Result<(), Error> {
    let table = open_table(&args.table, args.cache.cache())?;
    let records = table.scan(args.start.as_bytes(), args.count)?;
    let mut out = std::io::stdout().lock();
    for r in &records {
        out.write_all(&r.key)?;
        out.write_all(b"\t")?;
        out.write_all(&r.value)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), Error> {
    let table = open_table(&args.table, CacheArgs {
        cache_mb: 8,
        fetch_latency_us: 0,
    }
    .cache())?;
    let stats = table.stats();
    match args.format {
        FormatArg::Json => {
            println!("{}", serde_json_string(&stats)?);
        }
        FormatArg::Csv => {
            print!("{}", stats_csv(&stats));
        }
    }
    Ok(())
}

fn serde_json_string<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))
}

fn stats_csv(stats: &lidx::TableStats) -> String {
    let kind = stats.index_kind.name();
    let mut out = String::from("metric,index_kind,value,unit\n");
    let mut row = |metric: &str, value: String, unit: &str| {
        out.push_str(&format!("{metric},{kind},{value},{unit}\n"));
    };
    row("record_count", stats.record_count.to_string(), "count");
    row("n_blocks", stats.n_blocks.to_string(), "count");
    row("empty_blocks", stats.empty_blocks.to_string(), "count");
    row("data_bytes", stats.data_bytes.to_string(), "bytes");
    row("index_bytes", stats.index_bytes.to_string(), "bytes");
    row("tau", stats.tau.to_string(), "bytes");
    row("min_block_bytes", stats.min_block_bytes.to_string(), "bytes");
    row("max_block_bytes", stats.max_block_bytes.to_string(), "bytes");
    for (i, count) in stats.block_size_histogram.iter().enumerate() {
        row(
            &format!("blocks_size_bucket_{i}"),
            count.to_string(),
            "count",
        );
    }
    out
}

fn cmd_bench(args: BenchArgs) -> Result<(), Error> {
    let config = WorkloadConfig {
        rows: args.rows,
        value_size: args.value_size,
        tau: args.tau,
        workers: args.workers,
        inflight_per_worker: args.inflight,
        ops: args.ops,
        workload: match args.workload {
            WorkloadArg::Point => WorkloadKind::Point,
            WorkloadArg::Scan => WorkloadKind::Scan,
        },
        scan_len: args.scan_len,
        seed: args.seed,
    };
    let build = BuildConfig {
        block_size: args.block_size.unwrap_or(args.tau),
        ..BuildConfig::default()
    };

    let tmp;
    let dir = match &args.dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            dir.clone()
        }
        None => {
            tmp = tempdir()?;
            tmp.clone()
        }
    };

    eprintln!(
        "generating {} rows (seed {}) and building both tables in {}",
        config.rows,
        config.seed,
        dir.display()
    );
    let (learned_path, two_path, learned_report, two_report) =
        lidx::bench::build_tables(&config, &build, &dir)?;
    eprintln!(
        "built: learned index {} bytes, two_level index {} bytes",
        learned_report.index_bytes, two_report.index_bytes
    );

    eprintln!(
        "running {} x {} ops ({} workers x {} in flight, cache {} MiB, fetch latency {} us)",
        config.workload.name(),
        config.ops,
        config.workers,
        config.inflight_per_worker,
        args.cache.cache_mb,
        args.cache.fetch_latency_us
    );
    let output = run_comparison(ComparisonInput {
        learned_path: &learned_path,
        two_level_path: &two_path,
        config,
        cache_capacity_bytes: args.cache.cache_mb << 20,
        fetch_latency: Duration::from_micros(args.cache.fetch_latency_us),
        warm_phase: args.warm,
    })?;

    emit(&output, args.format)?;

    if args.dir.is_none() {
        let _ = std::fs::remove_dir_all(&dir);
    }
    Ok(())
}

fn emit(output: &BenchOutput, format: FormatArg) -> Result<(), Error> {
    match format {
        FormatArg::Csv => print!("{}", output.to_csv()),
        FormatArg::Json => println!("{}", output.to_json()),
    }
    Ok(())
}

fn tempdir() -> Result<PathBuf, Error> {
    let dir = std::env::temp_dir().join(format!("lidx-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
