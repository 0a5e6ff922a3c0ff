//! Acceptance suite: one pass/fail line per criterion.
//!
//! Criteria run sequentially inside a single test so the million-row
//! fixture is built once and the latency comparison (criterion 8) is not
//! perturbed by concurrent tests. Run with `--nocapture` to watch
//! progress:
//!
//! ```text
//! cargo test -p lidx --test acceptance -- --nocapture
//! ```

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lidx::bench::{
    build_tables, run_comparison, CachePhase, ComparisonInput, SyntheticSource, WorkloadConfig,
    WorkloadKind,
};
use lidx::{
    open_table, BlockCache, BlockKey, BlockKind, BlockLocator, BuildConfig, CacheConfig,
    IndexKind, Supervision, TableHandle,
};

const ROWS: u64 = 1_000_000;
const VALUE_SIZE: usize = 1024;
const TAU: u64 = 32 * 1024;
const SEED: u64 = 7;

fn workload_config() -> WorkloadConfig {
    WorkloadConfig {
        rows: ROWS,
        value_size: VALUE_SIZE,
        tau: TAU,
        workers: 4,
        inflight_per_worker: 16,
        ops: 100_000,
        workload: WorkloadKind::Point,
        scan_len: 100,
        seed: SEED,
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    learned_path: PathBuf,
    two_level_path: PathBuf,
    learned_index_bytes: u64,
    two_level_index_bytes: u64,
    source: SyntheticSource,
}

impl Fixture {
    fn build() -> Fixture {
        let t0 = Instant::now();
        let dir = tempfile::tempdir_in(env!("CARGO_TARGET_TMPDIR")).unwrap();
        let config = workload_config();
        let build = BuildConfig {
            block_size: TAU,
            ..BuildConfig::default()
        };
        let (learned_path, two_level_path, lr, tr) =
            build_tables(&config, &build, dir.path()).unwrap();
        assert!(!lr.fell_back);
        eprintln!(
            "fixture: built {} rows twice in {:.1}s (learned {} blocks / {} index bytes, \
             two_level {} blocks / {} index bytes)",
            ROWS,
            t0.elapsed().as_secs_f64(),
            lr.n_blocks,
            lr.index_bytes,
            tr.n_blocks,
            tr.index_bytes
        );
        Fixture {
            _dir: dir,
            learned_path,
            two_level_path,
            learned_index_bytes: lr.index_bytes,
            two_level_index_bytes: tr.index_bytes,
            source: SyntheticSource::from_config(&config),
        }
    }

    fn open_learned(&self, cache_bytes: u64) -> TableHandle {
        let cache = BlockCache::new(CacheConfig {
            capacity_bytes: cache_bytes,
            fetch_latency: Duration::ZERO,
            prefetch_workers: 2,
        });
        open_table(&self.learned_path, cache).unwrap()
    }

    fn open_two_level(&self, cache_bytes: u64) -> TableHandle {
        let cache = BlockCache::new(CacheConfig {
            capacity_bytes: cache_bytes,
            fetch_latency: Duration::ZERO,
            prefetch_workers: 2,
        });
        open_table(&self.two_level_path, cache).unwrap()
    }

    /// Oracle: present iff in the sorted key set; value regenerable.
    fn oracle_get(&self, key_int: u64) -> Option<Vec<u8>> {
        self.source
            .key_ints()
            .binary_search(&key_int)
            .ok()
            .map(|_| self.source.value_for(key_int))
    }

    fn oracle_scan(&self, start_int: u64, n: usize) -> Vec<(Vec<u8>, Vec<u8>)> {
        let start = self.source.key_ints().partition_point(|&k| k < start_int);
        self.source.key_ints()[start..]
            .iter()
            .take(n)
            .map(|&k| (SyntheticSource::key_bytes(k), self.source.value_for(k)))
            .collect()
    }
}

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn run_criterion(
    results: &mut Vec<Outcome>,
    id: u32,
    name: &'static str,
    f: impl FnOnce() -> Result<String, String>,
) {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let (pass, detail) = match outcome {
        Ok(Ok(detail)) => (true, detail),
        Ok(Err(detail)) => (false, detail),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (false, format!("panicked: {msg}"))
        }
    };
    let line = format!(
        "[{}] criterion {id}: {name} — {detail} ({:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        t0.elapsed().as_secs_f64()
    );
    println!("{line}");
    eprintln!("{line}");
    results.push(Outcome {
        id,
        name,
        pass,
        detail,
    });
}

#[test]
fn acceptance_criteria() {
    let fixture = Fixture::build();
    let mut results = Vec::new();

    run_criterion(&mut results, 1, "correctness oracle", || {
        criterion_correctness(&fixture)
    });
    run_criterion(&mut results, 2, "correct-block guarantee", || {
        criterion_correct_block(&fixture)
    });
    run_criterion(&mut results, 3, "monotonicity suite", || {
        criterion_monotonicity(&fixture)
    });
    run_criterion(&mut results, 4, "OLS oracle", criterion_ols_oracle);
    run_criterion(&mut results, 5, "index size", || {
        criterion_index_size(&fixture)
    });
    run_criterion(&mut results, 6, "block-size distribution", || {
        criterion_block_sizes(&fixture)
    });
    run_criterion(&mut results, 7, "fetch-count mechanism", || {
        criterion_fetch_counts(&fixture)
    });
    run_criterion(&mut results, 8, "directional latency/throughput", || {
        criterion_directional(&fixture)
    });
    run_criterion(&mut results, 9, "locator compression round-trip", || {
        criterion_locator_roundtrip()
    });
    run_criterion(&mut results, 10, "LRU oracle and single-flight", || {
        criterion_lru_oracle()
    });

    let failed: Vec<String> = results
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("criterion {} ({}): {}", o.id, o.name, o.detail))
        .collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}

// criterion 1: both tables match the in-memory sorted-map oracle on 1e5
// random gets and 1e4 random 100-row scans; 0 mismatches, < 5 minutes
fn criterion_correctness(fx: &Fixture) -> Result<String, String> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0xACCE97);
    let tables = [
        ("learned", fx.open_learned(256 << 20)),
        ("two_level", fx.open_two_level(256 << 20)),
    ];

    let gets: Vec<u64> = (0..100_000)
        .map(|_| {
            if rng.random_range(0..10) < 8 {
                fx.source.key_int(rng.random_range(0..fx.source.len()))
            } else {
                rng.next_u64() // almost surely absent
            }
        })
        .collect();
    let scans: Vec<u64> = (0..10_000)
        .map(|_| {
            if rng.random_range(0..10) < 8 {
                fx.source.key_int(rng.random_range(0..fx.source.len()))
            } else {
                rng.next_u64()
            }
        })
        .collect();

    let mut mismatches = 0u64;
    for (name, table) in &tables {
        for &key_int in &gets {
            let got = table
                .get(&SyntheticSource::key_bytes(key_int))
                .map_err(|e| format!("{name} get failed: {e}"))?;
            if got != fx.oracle_get(key_int) {
                mismatches += 1;
            }
        }
        for &start_int in &scans {
            let got = table
                .scan(&SyntheticSource::key_bytes(start_int), 100)
                .map_err(|e| format!("{name} scan failed: {e}"))?;
            let want = fx.oracle_scan(start_int, 100);
            let same = got.len() == want.len()
                && got
                    .iter()
                    .zip(&want)
                    .all(|(r, (k, v))| r.key == *k && r.value == *v);
            if !same {
                mismatches += 1;
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    if mismatches > 0 {
        return Err(format!("{mismatches} mismatches against the oracle"));
    }
    if elapsed > 300.0 {
        return Err(format!("took {elapsed:.0}s, budget is 300s"));
    }
    Ok("2x100000 gets and 2x10000 scans, 0 mismatches".into())
}

// criterion 2: predict_block(encode(k)) equals the containing block for
// every one of the million stored records
fn criterion_correct_block(fx: &Fixture) -> Result<String, String> {
    let table = fx.open_learned(64 << 20);
    let mut audited = 0u64;
    for block in 0..table.n_blocks() {
        let records = table
            .read_block(block)
            .map_err(|e| format!("block {block} unreadable: {e}"))?;
        for r in records {
            if table.predict_block_for(&r.key) != Some(block) {
                return Err(format!(
                    "record {:?} stored in block {block} but predicted {:?}",
                    String::from_utf8_lossy(&r.key),
                    table.predict_block_for(&r.key)
                ));
            }
            audited += 1;
        }
    }
    if audited != ROWS {
        return Err(format!("audited {audited} records, expected {ROWS}"));
    }
    Ok(format!("{audited} records in {} blocks, 100% correct", table.n_blocks()))
}

// criterion 3: encoder monotone on 1e5 random pairs; slope >= 0;
// predict_block non-decreasing along the sorted keys
fn criterion_monotonicity(fx: &Fixture) -> Result<String, String> {
    let table = fx.open_learned(8 << 20);
    let encoder = table.key_encoder().unwrap();
    let model = table.learned_model().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x3030);

    for _ in 0..100_000 {
        let a = fx.source.key_int(rng.random_range(0..fx.source.len()));
        let b = fx.source.key_int(rng.random_range(0..fx.source.len()));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let e_lo = encoder.encode(&SyntheticSource::key_bytes(lo));
        let e_hi = encoder.encode(&SyntheticSource::key_bytes(hi));
        if e_lo > e_hi {
            return Err(format!("encode({lo}) = {e_lo} > encode({hi}) = {e_hi}"));
        }
    }

    if model.slope() < 0.0 {
        return Err(format!("trained slope {} < 0", model.slope()));
    }

    let mut prev = 0u64;
    for &k in fx.source.key_ints() {
        let b = table
            .predict_block_for(&SyntheticSource::key_bytes(k))
            .unwrap();
        if b < prev {
            return Err(format!("predict_block decreased to {b} after {prev}"));
        }
        prev = b;
    }
    Ok(format!(
        "100000 pairs monotone, slope {:.3e} >= 0, predictions non-decreasing",
        model.slope()
    ))
}

// criterion 4: closed-form OLS matches an independent normal-equations
// oracle to 1e-9 relative tolerance on 100 random instances
fn criterion_ols_oracle() -> Result<String, String> {
    fn oracle(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
        (sxy / sxx, my - sxy / sxx * mx)
    }
    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x0152);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(2..=10_000);
        let scale = 10f64.powi(rng.random_range(0..7));
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let (mut x, mut y) = (0.0f64, 0.0f64);
        for i in 0..n {
            x += scale * (1 + rng.random_range(0..1000)) as f64;
            if rng.random_range(0..4) > 0 || i == 0 {
                y += rng.random_range(0..5000) as f64;
            }
            xs.push(x);
            ys.push(y);
        }
        let sup = Supervision::from_parts(xs.clone(), ys.clone(), *ys.last().unwrap() as u64)
            .map_err(|e| e.to_string())?;
        let model = lidx::train_ols(&sup).map_err(|e| format!("case {case}: {e}"))?;
        let (slope_o, intercept_o) = oracle(&xs, &ys);
        let es = rel_err(model.slope(), slope_o);
        let ei = rel_err(model.intercept(), intercept_o);
        worst = worst.max(es).max(ei);
        if es > 1e-9 || ei > 1e-9 {
            return Err(format!(
                "case {case}: slope {} vs {} (rel {es:.2e}), intercept {} vs {} (rel {ei:.2e})",
                model.slope(),
                slope_o,
                model.intercept(),
                intercept_o
            ));
        }
        let resid: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| y - (model.slope() * x + model.intercept()))
            .sum();
        let ymag: f64 = ys.iter().map(|v| v.abs()).sum();
        if resid.abs() > 1e-6 * ymag.max(1.0) {
            return Err(format!(
                "case {case}: residual sum {resid:.3e} exceeds 1e-6 x {ymag:.3e}"
            ));
        }
    }
    Ok(format!("100 instances within 1e-9 (worst rel err {worst:.2e})"))
}

// criterion 5: learned index serialized bytes < 50% of two-level's
fn criterion_index_size(fx: &Fixture) -> Result<String, String> {
    let ratio = fx.learned_index_bytes as f64 / fx.two_level_index_bytes as f64;
    let detail = format!(
        "learned {} bytes vs two_level {} bytes, ratio {:.1}%",
        fx.learned_index_bytes,
        fx.two_level_index_bytes,
        ratio * 100.0
    );
    if ratio < 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// criterion 6: >= 90% of nonempty learned blocks within [tau/2, 3tau/2]
fn criterion_block_sizes(fx: &Fixture) -> Result<String, String> {
    let table = fx.open_learned(8 << 20);
    let (mut nonempty, mut within) = (0u64, 0u64);
    for size in table.locator().block_sizes() {
        if size == 0 {
            continue;
        }
        nonempty += 1;
        if size * 2 >= TAU && size * 2 <= 3 * TAU {
            within += 1;
        }
    }
    let frac = within as f64 / nonempty as f64;
    let detail = format!(
        "{within}/{nonempty} nonempty blocks within [0.5t, 1.5t] = {:.2}%",
        frac * 100.0
    );
    if frac >= 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// criterion 7: cold-cache fetch counts: learned get = 1, two-level get = 2
fn criterion_fetch_counts(fx: &Fixture) -> Result<String, String> {
    let probe = SyntheticSource::key_bytes(fx.source.key_int(fx.source.len() / 2));

    let learned = fx.open_learned(64 << 20);
    learned
        .get(&probe)
        .map_err(|e| e.to_string())?
        .ok_or("probe key missing from learned table")?;
    let ls = learned.cache_stats();
    if (ls.hits, ls.misses) != (0, 1) {
        return Err(format!(
            "learned cold get: hits {} misses {}, expected 0/1",
            ls.hits, ls.misses
        ));
    }

    let two = fx.open_two_level(64 << 20);
    two.get(&probe)
        .map_err(|e| e.to_string())?
        .ok_or("probe key missing from two-level table")?;
    let ts = two.cache_stats();
    if (ts.hits, ts.misses) != (0, 2) {
        return Err(format!(
            "two-level cold get: hits {} misses {}, expected 0/2",
            ts.hits, ts.misses
        ));
    }
    Ok("learned get = 1 fetch, two-level get = 2 fetches (level-1 + data)".into())
}

// criterion 8: with an 8 MiB cache and 500us synthetic fetch latency the
// learned index wins by >= 10% on mean, p99 and throughput
fn criterion_directional(fx: &Fixture) -> Result<String, String> {
    let t0 = Instant::now();
    // keep in-flight request count proportional to the machine so the tail
    // measures fetch counts, not run-queue pileup on small CPU counts
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(2);
    let config = WorkloadConfig {
        workers,
        inflight_per_worker: 4,
        ..workload_config()
    };
    let out = run_comparison(ComparisonInput {
        learned_path: &fx.learned_path,
        two_level_path: &fx.two_level_path,
        config,
        cache_capacity_bytes: 8 << 20,
        fetch_latency: Duration::from_micros(500),
        warm_phase: false,
    })
    .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed().as_secs_f64();

    let report = |kind: IndexKind| {
        out.reports
            .iter()
            .find(|r| r.index_kind == kind && r.phase == CachePhase::Cold)
            .unwrap()
    };
    let two = report(IndexKind::TwoLevel);
    let learned = report(IndexKind::Learned);
    let mean_gain = 1.0 - learned.mean_us / two.mean_us;
    let p99_gain = 1.0 - learned.p99_us / two.p99_us;
    let tput_gain = learned.throughput_ops_sec / two.throughput_ops_sec - 1.0;
    let detail = format!(
        "mean {:.0}us vs {:.0}us (-{:.0}%), p99 {:.0}us vs {:.0}us (-{:.0}%), \
         throughput {:.0} vs {:.0} ops/s (+{:.0}%)",
        learned.mean_us,
        two.mean_us,
        mean_gain * 100.0,
        learned.p99_us,
        two.p99_us,
        p99_gain * 100.0,
        learned.throughput_ops_sec,
        two.throughput_ops_sec,
        tput_gain * 100.0
    );
    if elapsed > 600.0 {
        return Err(format!("took {elapsed:.0}s, budget is 600s; {detail}"));
    }
    if mean_gain >= 0.10 && p99_gain >= 0.10 && tput_gain >= 0.10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// criterion 9: compress/decompress is bit-exact on 1e4 random locators
fn criterion_locator_roundtrip() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x10CA);
    for case in 0..10_000u32 {
        let n_blocks = match case % 10 {
            0 => 1,                             // single block
            _ => rng.random_range(2..=64usize), // general
        };
        let tau = rng.random_range(1..=1_000_000u64);
        let mut offsets = vec![rng.random_range(0..1_000_000u64)];
        for _ in 0..n_blocks {
            let size = if rng.random_range(0..10) < 3 {
                0 // empty block
            } else {
                rng.random_range(0..2_000_000u64)
            };
            offsets.push(offsets.last().unwrap() + size);
        }
        let checksums: Vec<u32> = (0..n_blocks).map(|_| rng.next_u32()).collect();
        let loc = BlockLocator::new(offsets, checksums, tau).unwrap();
        let bytes = loc.compress();
        let (back, used) = BlockLocator::decompress(&bytes)
            .map_err(|e| format!("case {case}: decompress failed: {e}"))?;
        if back != loc || used != bytes.len() {
            return Err(format!("case {case}: round-trip not bit-exact"));
        }
    }
    Ok("10000 locators round-tripped bit-exactly (incl. single-block and empty-block)".into())
}

// criterion 10: cache trace equals the reference LRU simulation over 1e5
// steps; 64 concurrent misses on one key run the loader exactly once
fn criterion_lru_oracle() -> Result<String, String> {
    struct RefLru {
        capacity: u64,
        entries: Vec<(u64, u64)>,
    }
    impl RefLru {
        fn access(&mut self, block: u64, len: u64) -> bool {
            if let Some(pos) = self.entries.iter().position(|&(b, _)| b == block) {
                let e = self.entries.remove(pos);
                self.entries.push(e);
                return true;
            }
            if len <= self.capacity {
                self.entries.push((block, len));
                let mut used: u64 = self.entries.iter().map(|&(_, l)| l).sum();
                while used > self.capacity {
                    used -= self.entries.remove(0).1;
                }
            }
            false
        }
    }

    let capacity = 120_000u64;
    let cache = BlockCache::new(CacheConfig {
        capacity_bytes: capacity,
        fetch_latency: Duration::ZERO,
        prefetch_workers: 0,
    });
    let mut oracle = RefLru {
        capacity,
        entries: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x14C4);
    let mut sizes: Vec<u64> = Vec::new();
    for step in 0..100_000u64 {
        let block = rng.random_range(0..220u64);
        while sizes.len() <= block as usize {
            // stable per-block size, occasionally oversized
            let s = if rng.random_range(0..50) == 0 {
                capacity + 1
            } else {
                rng.random_range(1..=4000)
            };
            sizes.push(s);
        }
        let len = sizes[block as usize];
        let before = cache.stats();
        cache
            .get_block(
                BlockKey {
                    table_id: 0,
                    kind: BlockKind::Data,
                    block,
                },
                || Ok(bytes::Bytes::from(vec![0u8; len as usize])),
            )
            .map_err(|e| e.to_string())?;
        let hit = cache.stats().hits > before.hits;
        let want = oracle.access(block, len);
        if hit != want {
            return Err(format!(
                "step {step}: cache {} but oracle {}",
                if hit { "hit" } else { "missed" },
                if want { "hit" } else { "missed" }
            ));
        }
        if cache.cached_bytes() > capacity {
            return Err(format!("step {step}: cached bytes exceed capacity"));
        }
    }

    // single-flight under 64 concurrent same-key misses
    let cache = BlockCache::new(CacheConfig {
        capacity_bytes: 1 << 20,
        fetch_latency: Duration::ZERO,
        prefetch_workers: 0,
    });
    let loads = Arc::new(AtomicUsize::new(0));
    let barrier = Arc::new(Barrier::new(64));
    let mut handles = Vec::new();
    for _ in 0..64 {
        let cache = cache.clone();
        let loads = Arc::clone(&loads);
        let barrier = Arc::clone(&barrier);
        handles.push(std::thread::spawn(move || {
            barrier.wait();
            cache.get_block(
                BlockKey {
                    table_id: 9,
                    kind: BlockKind::Data,
                    block: 1,
                },
                || {
                    loads.fetch_add(1, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(30));
                    Ok(bytes::Bytes::from_static(b"single"))
                },
            )
        }));
    }
    for h in handles {
        h.join()
            .map_err(|_| "single-flight thread panicked".to_string())?
            .map_err(|e| e.to_string())?;
    }
    let n = loads.load(Ordering::SeqCst);
    if n != 1 {
        return Err(format!("loader ran {n} times under contention"));
    }
    Ok("100000-step trace matches reference; single-flight loaded once under 64 threads".into())
}

