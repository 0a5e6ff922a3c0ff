//! Workload generation and measurement harness.
//!
//! Reproduces the read-path comparison at desk scale: build a learned and
//! a two-level table from the same seeded record stream, then drive point
//! lookups or short scans from concurrent clients with bounded in-flight
//! requests, recording per-operation wall latency. Cache capacity and a
//! synthetic per-miss fetch latency recreate the pressure that makes index
//! fetches visible in the tail.

mod workload;

pub use workload::{
    build_tables, query_stream, run_comparison, run_workload, ComparisonInput, SyntheticSource,
};

use serde::{Deserialize, Serialize};

use crate::cache::CacheStats;
use crate::error::{Error, Result};
use crate::table::IndexKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Point,
    Scan,
}

impl WorkloadKind {
    pub fn name(&self) -> &'static str {
        match self {
            WorkloadKind::Point => "point",
            WorkloadKind::Scan => "scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePhase {
    Cold,
    Warm,
}

impl CachePhase {
    pub fn name(&self) -> &'static str {
        match self {
            CachePhase::Cold => "cold",
            CachePhase::Warm => "warm",
        }
    }
}

/// Everything that determines a run: the seed fully fixes the generated
/// keys, values, and query order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub rows: u64,
    pub value_size: usize,
    pub tau: u64,
    pub workers: usize,
    pub inflight_per_worker: usize,
    pub ops: u64,
    pub workload: WorkloadKind,
    pub scan_len: usize,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            rows: 1_000_000,
            value_size: 1024,
            tau: crate::table::DEFAULT_TAU,
            workers: 4,
            inflight_per_worker: 16,
            ops: 100_000,
            workload: WorkloadKind::Point,
            scan_len: 100,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub index_kind: IndexKind,
    pub phase: CachePhase,
    pub config: WorkloadConfig,
    pub ops_completed: u64,
    /// Latency stats in microseconds; scan latencies are normalized per
    /// row read (divided by scan_len).
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub throughput_ops_sec: f64,
    pub wall_secs: f64,
    pub cache: CacheStats,
    pub index_bytes: u64,
    pub data_bytes: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricDelta {
    pub metric: String,
    pub phase: CachePhase,
    pub baseline: f64,
    pub candidate: f64,
    pub delta_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchOutput {
    pub reports: Vec<BenchReport>,
    pub deltas: Vec<MetricDelta>,
}

/// Nearest-rank percentile: the ceil(p/100 * n)-th order statistic of a
/// sorted sample (1-indexed). Integer rank arithmetic keeps boundary cases
/// exact.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> f64 {
    debug_assert!((1..=100).contains(&pct));
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len() as u64;
    let rank = (pct as u64 * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

/// Percentiles without a full sort; reorders `samples`.
pub(crate) fn percentiles(samples: &mut [f64], pcts: &[u32]) -> Vec<f64> {
    pcts.iter()
        .map(|&pct| {
            let n = samples.len() as u64;
            let rank = (pct as u64 * n).div_ceil(100).max(1);
            let (_, v, _) = samples.select_nth_unstable_by((rank - 1) as usize, f64::total_cmp);
            *v
        })
        .collect()
}

/// Per-metric relative change of `candidate` against `baseline`, in
/// percent. Both runs must share the config and phase.
pub fn compare(baseline: &BenchReport, candidate: &BenchReport) -> Result<Vec<MetricDelta>> {
    if baseline.config != candidate.config {
        return Err(Error::ConfigMismatch(
            "reports come from different workload configs".into(),
        ));
    }
    if baseline.phase != candidate.phase {
        return Err(Error::ConfigMismatch("reports come from different phases".into()));
    }
    let pairs: [(&str, f64, f64); 5] = [
        ("mean_latency", baseline.mean_us, candidate.mean_us),
        ("p50_latency", baseline.p50_us, candidate.p50_us),
        ("p95_latency", baseline.p95_us, candidate.p95_us),
        ("p99_latency", baseline.p99_us, candidate.p99_us),
        (
            "throughput",
            baseline.throughput_ops_sec,
            candidate.throughput_ops_sec,
        ),
    ];
    Ok(pairs
        .into_iter()
        .map(|(metric, a, b)| MetricDelta {
            metric: metric.to_string(),
            phase: baseline.phase,
            baseline: a,
            candidate: b,
            delta_pct: if a == 0.0 { 0.0 } else { (b - a) / a * 100.0 },
        })
        .collect())
}

impl BenchOutput {
    /// CSV rows in stable column order: metric, index_kind, value, unit.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,index_kind,value,unit\n");
        for r in &self.reports {
            let kind = format!("{}_{}", r.index_kind.name(), r.phase.name());
            let mut row = |metric: &str, value: String, unit: &str| {
                out.push_str(&format!("{metric},{kind},{value},{unit}\n"));
            };
            row("mean_latency", format!("{:.3}", r.mean_us), "us");
            row("p50_latency", format!("{:.3}", r.p50_us), "us");
            row("p95_latency", format!("{:.3}", r.p95_us), "us");
            row("p99_latency", format!("{:.3}", r.p99_us), "us");
            row(
                "throughput",
                format!("{:.3}", r.throughput_ops_sec),
                "ops_per_sec",
            );
            row("ops_completed", r.ops_completed.to_string(), "count");
            row("wall_time", format!("{:.3}", r.wall_secs), "s");
            row("cache_hits", r.cache.hits.to_string(), "count");
            row("cache_misses", r.cache.misses.to_string(), "count");
            row("cache_evictions", r.cache.evictions.to_string(), "count");
            row("bytes_fetched", r.cache.bytes_fetched.to_string(), "bytes");
            row("index_bytes", r.index_bytes.to_string(), "bytes");
            row("data_bytes", r.data_bytes.to_string(), "bytes");
        }
        for d in &self.deltas {
            out.push_str(&format!(
                "{}_delta,learned_vs_two_level_{},{:.3},percent\n",
                d.metric,
                d.phase.name(),
                d.delta_pct
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench output serializes")
    }
}
