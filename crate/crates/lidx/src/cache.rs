//! Shared LRU cache over data and index blocks.
//!
//! Eviction is whole-block with byte-accurate accounting. Concurrent
//! misses on one key collapse into a single loader call: the first caller
//! becomes the loader, later callers block on a per-key latch and receive
//! the same bytes (or the same error). The lock is never held across the
//! loader. An optional synthetic fetch latency sleeps the loading caller
//! on every miss, standing in for a remote filesystem read.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Weak};
use std::time::Duration;

use bytes::Bytes;
use parking_lot::{Condvar, Mutex};
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Data,
    Index,
}

/// Identifies one cached block across all open tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockKey {
    pub table_id: u64,
    pub kind: BlockKind,
    pub block: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct CacheConfig {
    pub capacity_bytes: u64,
    /// Sleep applied in the loading caller's context on every miss.
    pub fetch_latency: Duration,
    /// Background threads servicing best-effort prefetch requests.
    pub prefetch_workers: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            capacity_bytes: 64 << 20,
            fetch_latency: Duration::ZERO,
            prefetch_workers: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub bytes_fetched: u64,
}

impl CacheStats {
    /// Counter movement since an `earlier` snapshot.
    pub fn since(&self, earlier: &CacheStats) -> CacheStats {
        CacheStats {
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
            evictions: self.evictions - earlier.evictions,
            bytes_fetched: self.bytes_fetched - earlier.bytes_fetched,
        }
    }
}

struct Latch {
    result: Mutex<Option<Result<Bytes>>>,
    cv: Condvar,
}

impl Latch {
    fn new() -> Arc<Latch> {
        Arc::new(Latch {
            result: Mutex::new(None),
            cv: Condvar::new(),
        })
    }

    fn fulfill(&self, r: Result<Bytes>) {
        *self.result.lock() = Some(r);
        self.cv.notify_all();
    }

    fn wait(&self) -> Result<Bytes> {
        let mut slot = self.result.lock();
        while slot.is_none() {
            self.cv.wait(&mut slot);
        }
        slot.as_ref().unwrap().clone()
    }
}

enum Slot {
    Ready { bytes: Bytes, tick: u64 },
    Pending(Arc<Latch>),
}

#[derive(Default)]
struct CacheState {
    map: HashMap<BlockKey, Slot>,
    /// Recency order: tick -> key, smallest tick is least recently used.
    order: BTreeMap<u64, BlockKey>,
    next_tick: u64,
    cached_bytes: u64,
}

struct CacheInner {
    config: CacheConfig,
    state: Mutex<CacheState>,
    hits: AtomicU64,
    misses: AtomicU64,
    evictions: AtomicU64,
    bytes_fetched: AtomicU64,
    prefetch_tx: Mutex<Option<mpsc::SyncSender<PrefetchJob>>>,
}

struct PrefetchJob {
    key: BlockKey,
    load: Box<dyn FnOnce() -> Result<Bytes> + Send>,
}

/// Cheaply cloneable handle; all clones share one cache.
#[derive(Clone)]
pub struct BlockCache {
    inner: Arc<CacheInner>,
}

impl BlockCache {
    pub fn new(config: CacheConfig) -> BlockCache {
        let inner = Arc::new(CacheInner {
            config,
            state: Mutex::new(CacheState::default()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            evictions: AtomicU64::new(0),
            bytes_fetched: AtomicU64::new(0),
            prefetch_tx: Mutex::new(None),
        });
        if config.prefetch_workers > 0 {
            let (tx, rx) = mpsc::sync_channel::<PrefetchJob>(64);
            let rx = Arc::new(Mutex::new(rx));
            for _ in 0..config.prefetch_workers {
                let weak: Weak<CacheInner> = Arc::downgrade(&inner);
                let rx = Arc::clone(&rx);
                std::thread::spawn(move || loop {
                    let job = match rx.lock().recv() {
                        Ok(job) => job,
                        Err(_) => return,
                    };
                    match weak.upgrade() {
                        Some(inner) => {
                            let _ = inner.get_block(job.key, job.load);
                        }
                        None => return,
                    }
                });
            }
            *inner.prefetch_tx.lock() = Some(tx);
        }
        BlockCache { inner }
    }

    pub fn config(&self) -> CacheConfig {
        self.inner.config
    }

    /// Returns block bytes, loading through `load` on a miss. `load` runs
    /// at most once per key across all concurrent callers.
    pub fn get_block<F>(&self, key: BlockKey, load: F) -> Result<Bytes>
    where
        F: FnOnce() -> Result<Bytes>,
    {
        self.inner.get_block(key, load)
    }

    /// Best-effort asynchronous warm-up of `key`. Dropped silently when the
    /// block is already cached or in flight, the queue is full, or the
    /// cache was built without prefetch workers.
    pub fn prefetch<F>(&self, key: BlockKey, load: F)
    where
        F: FnOnce() -> Result<Bytes> + Send + 'static,
    {
        {
            let state = self.inner.state.lock();
            if state.map.contains_key(&key) {
                return;
            }
        }
        if let Some(tx) = self.inner.prefetch_tx.lock().as_ref() {
            let _ = tx.try_send(PrefetchJob {
                key,
                load: Box::new(load),
            });
        }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.inner.hits.load(Ordering::Relaxed),
            misses: self.inner.misses.load(Ordering::Relaxed),
            evictions: self.inner.evictions.load(Ordering::Relaxed),
            bytes_fetched: self.inner.bytes_fetched.load(Ordering::Relaxed),
        }
    }

    /// Bytes currently resident.
    pub fn cached_bytes(&self) -> u64 {
        self.inner.state.lock().cached_bytes
    }
}

impl CacheInner {
    fn get_block<F>(&self, key: BlockKey, load: F) -> Result<Bytes>
    where
        F: FnOnce() -> Result<Bytes>,
    {
        let latch = {
            let mut state = self.state.lock();
            match state.map.get(&key) {
                Some(Slot::Ready { bytes, tick }) => {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    let bytes = bytes.clone();
                    let old = *tick;
                    self.touch(&mut state, key, old);
                    return Ok(bytes);
                }
                Some(Slot::Pending(latch)) => {
                    self.misses.fetch_add(1, Ordering::Relaxed);
                    let latch = Arc::clone(latch);
                    drop(state);
                    return latch.wait();
                }
                None => {
                    self.misses.fetch_add(1, Ordering::Relaxed);
                    let latch = Latch::new();
                    state.map.insert(key, Slot::Pending(Arc::clone(&latch)));
                    latch
                }
            }
        };

        if !self.config.fetch_latency.is_zero() {
            std::thread::sleep(self.config.fetch_latency);
        }
        let result = load();

        {
            let mut state = self.state.lock();
            match &result {
                Ok(bytes) => {
                    self.bytes_fetched
                        .fetch_add(bytes.len() as u64, Ordering::Relaxed);
                    if bytes.len() as u64 <= self.config.capacity_bytes {
                        let tick = state.next_tick;
                        state.next_tick += 1;
                        state.order.insert(tick, key);
                        state.cached_bytes += bytes.len() as u64;
                        state.map.insert(
                            key,
                            Slot::Ready {
                                bytes: bytes.clone(),
                                tick,
                            },
                        );
                        self.evict_to_capacity(&mut state);
                    } else {
                        // oversized blocks bypass the cache entirely
                        state.map.remove(&key);
                    }
                }
                Err(_) => {
                    state.map.remove(&key);
                }
            }
        }

        latch.fulfill(result.clone());
        result
    }

    fn touch(&self, state: &mut CacheState, key: BlockKey, old_tick: u64) {
        state.order.remove(&old_tick);
        let tick = state.next_tick;
        state.next_tick += 1;
        state.order.insert(tick, key);
        if let Some(Slot::Ready { tick: t, .. }) = state.map.get_mut(&key) {
            *t = tick;
        }
    }

    fn evict_to_capacity(&self, state: &mut CacheState) {
        while state.cached_bytes > self.config.capacity_bytes {
            let (&tick, &victim) = state
                .order
                .iter()
                .next()
                .expect("cached bytes exceed capacity with empty order");
            state.order.remove(&tick);
            if let Some(Slot::Ready { bytes, .. }) = state.map.remove(&victim) {
                state.cached_bytes -= bytes.len() as u64;
                self.evictions.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Barrier;

    fn key(b: u64) -> BlockKey {
        BlockKey {
            table_id: 1,
            kind: BlockKind::Data,
            block: b,
        }
    }

    fn cache(capacity: u64) -> BlockCache {
        BlockCache::new(CacheConfig {
            capacity_bytes: capacity,
            fetch_latency: Duration::ZERO,
            prefetch_workers: 0,
        })
    }

    fn fill(c: &BlockCache, b: u64, len: usize) -> Bytes {
        c.get_block(key(b), || Ok(Bytes::from(vec![b as u8; len])))
            .unwrap()
    }

    #[test]
    fn lru_two_slot_thrash() {
        // capacity two blocks; a,b,c,a -> four misses (a evicted before reuse)
        let c = cache(200);
        for b in [0u64, 1, 2, 0] {
            fill(&c, b, 100);
        }
        let s = c.stats();
        assert_eq!((s.hits, s.misses), (0, 4));
        assert_eq!(s.evictions, 2);
    }

    #[test]
    fn lru_three_slot_reuse() {
        // capacity three blocks; a,b,c,a -> three misses then a hit
        let c = cache(300);
        for b in [0u64, 1, 2, 0] {
            fill(&c, b, 100);
        }
        let s = c.stats();
        assert_eq!((s.hits, s.misses), (1, 3));
        assert_eq!(s.evictions, 0);
    }

    #[test]
    fn oversized_block_passes_through() {
        let c = cache(50);
        for _ in 0..3 {
            fill(&c, 9, 100);
        }
        let s = c.stats();
        assert_eq!((s.hits, s.misses), (0, 3));
        assert_eq!(c.cached_bytes(), 0);
    }

    #[test]
    fn loader_error_propagates_and_caches_nothing() {
        let c = cache(1000);
        let calls = AtomicUsize::new(0);
        let err = c.get_block(key(1), || {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(crate::Error::CorruptBlock(1))
        });
        assert!(err.is_err());
        assert_eq!(c.cached_bytes(), 0);
        // next access retries the loader
        fill(&c, 1, 10);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(c.stats().misses, 2);
    }

    #[test]
    fn single_flight_under_contention() {
        let c = BlockCache::new(CacheConfig {
            capacity_bytes: 1 << 20,
            fetch_latency: Duration::ZERO,
            prefetch_workers: 0,
        });
        let loads = Arc::new(AtomicUsize::new(0));
        let barrier = Arc::new(Barrier::new(64));
        let mut handles = Vec::new();
        for _ in 0..64 {
            let c = c.clone();
            let loads = Arc::clone(&loads);
            let barrier = Arc::clone(&barrier);
            handles.push(std::thread::spawn(move || {
                barrier.wait();
                c.get_block(key(7), || {
                    loads.fetch_add(1, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(20));
                    Ok(Bytes::from_static(b"block"))
                })
                .unwrap()
            }));
        }
        for h in handles {
            assert_eq!(h.join().unwrap(), Bytes::from_static(b"block"));
        }
        assert_eq!(loads.load(Ordering::SeqCst), 1);
        let s = c.stats();
        assert_eq!(s.hits + s.misses, 64);
        assert_eq!(s.bytes_fetched, 5);
    }

    #[test]
    fn prefetch_warms_cache() {
        let c = BlockCache::new(CacheConfig {
            capacity_bytes: 1 << 20,
            fetch_latency: Duration::ZERO,
            prefetch_workers: 1,
        });
        c.prefetch(key(3), || Ok(Bytes::from_static(b"warm")));
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        while c.cached_bytes() == 0 && std::time::Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(1));
        }
        let got = c
            .get_block(key(3), || panic!("should be cached"))
            .unwrap();
        assert_eq!(got, Bytes::from_static(b"warm"));
        assert_eq!(c.stats().hits, 1);
    }

    /// Reference single-threaded LRU used as the oracle.
    struct RefLru {
        capacity: u64,
        entries: Vec<(u64, u64)>, // (block, len), most recent last
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

    proptest! {
        #[test]
        fn matches_reference_lru(
            trace in prop::collection::vec((0u64..24, 1u64..400), 1..600),
            capacity in 1u64..2000,
        ) {
            let c = cache(capacity);
            let mut oracle = RefLru { capacity, entries: Vec::new() };
            for (block, len) in trace {
                let before = c.stats();
                fill(&c, block, len as usize);
                let hit = c.stats().hits > before.hits;
                prop_assert_eq!(hit, oracle.access(block, len));
                prop_assert!(c.cached_bytes() <= capacity);
            }
        }
    }
}
