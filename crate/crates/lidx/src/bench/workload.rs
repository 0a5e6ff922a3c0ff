//! Synthetic table generation and concurrent workload execution.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::{
    compare, percentiles, BenchOutput, BenchReport, CachePhase, MetricDelta, WorkloadConfig,
    WorkloadKind,
};
use crate::cache::{BlockCache, CacheConfig};
use crate::error::{Error, Result};
use crate::source::RecordSource;
use crate::table::{
    build_table, open_table, BuildConfig, BuildReport, IndexKind, Record, TableHandle,
};

const KEY_WIDTH: usize = 20;
const QUERY_STREAM_SALT: u64 = 0x71C9_35A3_9D2B_4E01;
const VALUE_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seeded synthetic record stream: `rows` distinct uniform 64-bit integers
/// formatted as zero-padded 20-digit decimal keys, each carrying a
/// deterministic pseudo-random value. Byte-wise key order equals numeric
/// order, and the same seed always yields the same stream.
pub struct SyntheticSource {
    seed: u64,
    value_size: usize,
    keys: Vec<u64>,
}

impl SyntheticSource {
    pub fn new(rows: u64, value_size: usize, seed: u64) -> SyntheticSource {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = HashSet::with_capacity(rows as usize);
        while (set.len() as u64) < rows {
            set.insert(rng.next_u64()); // collisions simply re-draw
        }
        let mut keys: Vec<u64> = set.into_iter().collect();
        keys.sort_unstable();
        SyntheticSource {
            seed,
            value_size,
            keys,
        }
    }

    pub fn from_config(config: &WorkloadConfig) -> SyntheticSource {
        SyntheticSource::new(config.rows, config.value_size, config.seed)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key_int(&self, i: usize) -> u64 {
        self.keys[i]
    }

    pub fn key_ints(&self) -> &[u64] {
        &self.keys
    }

    pub fn key_bytes(int: u64) -> Vec<u8> {
        format!("{int:0width$}", width = KEY_WIDTH).into_bytes()
    }

    /// The value attached to a key: a pure function of (seed, key), so
    /// oracles can regenerate expected values without storing them.
    pub fn value_for(&self, key_int: u64) -> Vec<u8> {
        let mix = self.seed ^ key_int.wrapping_mul(VALUE_SALT);
        let mut rng = ChaCha8Rng::seed_from_u64(mix);
        let mut value = vec![0u8; self.value_size];
        rng.fill_bytes(&mut value);
        value
    }

    pub fn record(&self, i: usize) -> Record {
        let int = self.keys[i];
        Record {
            key: Self::key_bytes(int),
            value: self.value_for(int),
        }
    }
}

impl RecordSource for SyntheticSource {
    fn records(&self) -> Result<Box<dyn Iterator<Item = Result<Record>> + '_>> {
        Ok(Box::new((0..self.keys.len()).map(|i| Ok(self.record(i)))))
    }
}

/// The deterministic query stream: element `i` is the key integer queried
/// by operation `i`. Depends only on the config, never on the index kind.
pub fn query_stream(config: &WorkloadConfig, keys: &[u64]) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ QUERY_STREAM_SALT);
    (0..config.ops)
        .map(|_| keys[rng.random_range(0..keys.len())])
        .collect()
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_millis() as u64
}

/// Runs the configured workload against one table: `workers` clients each
/// keep `inflight_per_worker` requests outstanding until `ops` operations
/// complete. Any lookup that misses a generated key aborts the run.
pub fn run_workload(
    table: &TableHandle,
    config: &WorkloadConfig,
    phase: CachePhase,
) -> Result<BenchReport> {
    if config.rows == 0
        || config.ops == 0
        || config.workers == 0
        || config.inflight_per_worker == 0
        || config.scan_len == 0
        || config.tau == 0
    {
        return Err(Error::InvalidInput(
            "workload counts must all be at least 1".into(),
        ));
    }
    if table.record_count() != config.rows {
        return Err(Error::ConfigMismatch(format!(
            "table has {} records but config expects {}",
            table.record_count(),
            config.rows
        )));
    }
    let source = SyntheticSource::from_config(config);
    let queries = query_stream(config, source.key_ints());

    let started_unix_ms = unix_ms();
    let next_op = AtomicU64::new(0);
    let failed = AtomicBool::new(false);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let n_threads = config.workers * config.inflight_per_worker;
    let stats_before = table.cache_stats();
    let start = Instant::now();

    let mut lat_vecs: Vec<Vec<u64>> = Vec::new();
    std::thread::scope(|scope| {
        let mut joins = Vec::with_capacity(n_threads.max(1));
        for _ in 0..n_threads.max(1) {
            joins.push(scope.spawn(|| {
                let mut latencies = Vec::new();
                loop {
                    let i = next_op.fetch_add(1, Ordering::Relaxed);
                    if i >= config.ops || failed.load(Ordering::Relaxed) {
                        return latencies;
                    }
                    let key = SyntheticSource::key_bytes(queries[i as usize]);
                    let t0 = Instant::now();
                    let outcome: Result<()> = match config.workload {
                        WorkloadKind::Point => match table.get(&key) {
                            Ok(Some(_)) => Ok(()),
                            Ok(None) => Err(Error::Correctness(format!(
                                "generated key {} not found",
                                String::from_utf8_lossy(&key)
                            ))),
                            Err(e) => Err(e),
                        },
                        WorkloadKind::Scan => match table.scan(&key, config.scan_len) {
                            Ok(recs)
                                if recs.first().map(|r| r.key.as_slice())
                                    == Some(key.as_slice()) =>
                            {
                                Ok(())
                            }
                            Ok(_) => Err(Error::Correctness(format!(
                                "scan from generated key {} missed it",
                                String::from_utf8_lossy(&key)
                            ))),
                            Err(e) => Err(e),
                        },
                    };
                    match outcome {
                        Ok(()) => latencies.push(t0.elapsed().as_nanos() as u64),
                        Err(e) => {
                            failed.store(true, Ordering::Relaxed);
                            let mut slot = first_error.lock();
                            if slot.is_none() {
                                *slot = Some(e);
                            }
                            return latencies;
                        }
                    }
                }
            }));
        }
        for j in joins {
            lat_vecs.push(j.join().expect("worker thread panicked"));
        }
    });

    let wall_secs = start.elapsed().as_secs_f64();
    if let Some(e) = first_error.lock().take() {
        return Err(e);
    }

    let norm = match config.workload {
        WorkloadKind::Point => 1.0,
        WorkloadKind::Scan => config.scan_len as f64,
    };
    let mut samples: Vec<f64> = lat_vecs
        .iter()
        .flatten()
        .map(|&nanos| nanos as f64 / 1000.0 / norm)
        .collect();
    let ops_completed = samples.len() as u64;
    let mean_us = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
    let pct = percentiles(&mut samples, &[50, 95, 99]);
    let cache = table.cache_stats().since(&stats_before);

    Ok(BenchReport {
        index_kind: table.index_kind(),
        phase,
        config: *config,
        ops_completed,
        mean_us,
        p50_us: pct[0],
        p95_us: pct[1],
        p99_us: pct[2],
        throughput_ops_sec: ops_completed as f64 / wall_secs.max(1e-9),
        wall_secs,
        cache,
        index_bytes: table.index_bytes(),
        data_bytes: table.data_bytes(),
        started_unix_ms,
        finished_unix_ms: unix_ms(),
    })
}

/// Builds both index kinds of the configured table into `dir`, reusing the
/// synthetic source across builds. Returns the two paths and reports.
pub fn build_tables(
    config: &WorkloadConfig,
    build: &BuildConfig,
    dir: &Path,
) -> Result<(PathBuf, PathBuf, BuildReport, BuildReport)> {
    let source = SyntheticSource::from_config(config);
    let learned_path = dir.join(format!("rows{}-seed{}-learned.sst", config.rows, config.seed));
    let two_path = dir.join(format!(
        "rows{}-seed{}-two_level.sst",
        config.rows, config.seed
    ));
    let learned_cfg = BuildConfig {
        index_kind: IndexKind::Learned,
        tau: config.tau,
        ..build.clone()
    };
    let two_cfg = BuildConfig {
        index_kind: IndexKind::TwoLevel,
        ..learned_cfg.clone()
    };
    let learned_report = build_table(&source, &learned_cfg, &learned_path)?;
    let two_report = build_table(&source, &two_cfg, &two_path)?;
    Ok((learned_path, two_path, learned_report, two_report))
}

pub struct ComparisonInput<'a> {
    pub learned_path: &'a Path,
    pub two_level_path: &'a Path,
    pub config: WorkloadConfig,
    pub cache_capacity_bytes: u64,
    pub fetch_latency: Duration,
    pub warm_phase: bool,
}

/// Runs the workload on both index kinds, each from its own cold cache
/// (plus an optional warm re-run), and computes learned-vs-two-level
/// deltas per phase. Two-level is the baseline of every delta.
pub fn run_comparison(input: ComparisonInput<'_>) -> Result<BenchOutput> {
    let mut reports: Vec<BenchReport> = Vec::new();
    let mut by_phase: Vec<(CachePhase, IndexKind, usize)> = Vec::new();

    for (kind, path) in [
        (IndexKind::TwoLevel, input.two_level_path),
        (IndexKind::Learned, input.learned_path),
    ] {
        let cache = BlockCache::new(CacheConfig {
            capacity_bytes: input.cache_capacity_bytes,
            fetch_latency: input.fetch_latency,
            ..CacheConfig::default()
        });
        let table = open_table(path, cache)?;
        if table.index_kind() != kind {
            return Err(Error::ConfigMismatch(format!(
                "{} holds a {} table",
                path.display(),
                table.index_kind().name()
            )));
        }
        let cold = run_workload(&table, &input.config, CachePhase::Cold)?;
        by_phase.push((CachePhase::Cold, kind, reports.len()));
        reports.push(cold);
        if input.warm_phase {
            let warm = run_workload(&table, &input.config, CachePhase::Warm)?;
            by_phase.push((CachePhase::Warm, kind, reports.len()));
            reports.push(warm);
        }
    }

    let mut deltas: Vec<MetricDelta> = Vec::new();
    for phase in [CachePhase::Cold, CachePhase::Warm] {
        let base = by_phase
            .iter()
            .find(|(p, k, _)| *p == phase && *k == IndexKind::TwoLevel);
        let cand = by_phase
            .iter()
            .find(|(p, k, _)| *p == phase && *k == IndexKind::Learned);
        if let (Some((_, _, a)), Some((_, _, b))) = (base, cand) {
            deltas.extend(compare(&reports[*a], &reports[*b])?);
        }
    }

    Ok(BenchOutput { reports, deltas })
}
