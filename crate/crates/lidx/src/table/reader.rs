//! Opening and querying table files.
//!
//! A handle keeps the whole index payload in memory. For learned tables
//! that is the key encoder, the model and the locator, so a point lookup
//! costs exactly one data-block fetch. For two-level tables only level 0
//! and the locator stay resident; level-1 index blocks are fetched through
//! the cache like data blocks are.

use std::fs::File;
use std::os::unix::fs::FileExt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use bytes::Bytes;

use crate::cache::{BlockCache, BlockKey, BlockKind};
use crate::error::{Error, Result};
use crate::key_codec::KeyEncoder;
use crate::locator::BlockLocator;
use crate::model::LinearModel;
use crate::table::{
    decode_block_spans, Footer, IndexKind, Record, RecordSpan, TableStats, FOOTER_LEN,
    STATS_BUCKET_HALVES,
};
use crate::two_level::TwoLevelIndex;

static NEXT_TABLE_ID: AtomicU64 = AtomicU64::new(1);

struct LearnedState {
    encoder: KeyEncoder,
    model: LinearModel,
}

struct TwoLevelState {
    index: TwoLevelIndex,
    /// Absolute file offset of the level-1 area.
    l1_area_offset: u64,
}

struct TableInner {
    file: File,
    table_id: u64,
    cache: BlockCache,
    kind: IndexKind,
    record_count: u64,
    index_bytes: u64,
    locator: BlockLocator,
    learned: Option<LearnedState>,
    two_level: Option<TwoLevelState>,
}

/// An opened table. Cloning is cheap; all clones share one file handle and
/// cache, and any number of threads may call `get`/`scan` concurrently.
#[derive(Clone)]
pub struct TableHandle {
    inner: Arc<TableInner>,
}

pub fn open_table(path: &Path, cache: BlockCache) -> Result<TableHandle> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    if file_len < FOOTER_LEN as u64 {
        return Err(Error::NotATable("file shorter than footer".into()));
    }
    let mut footer_buf = [0u8; FOOTER_LEN];
    file.read_exact_at(&mut footer_buf, file_len - FOOTER_LEN as u64)?;
    let footer = Footer::decode(&footer_buf)?;

    let body_len = file_len - FOOTER_LEN as u64;
    if footer.index_len < 12
        || footer.index_offset.checked_add(footer.index_len) != Some(body_len)
    {
        return Err(Error::CorruptIndex("section bounds inconsistent".into()));
    }
    let mut section = vec![0u8; footer.index_len as usize];
    file.read_exact_at(&mut section, footer.index_offset)?;
    let (payload, trailer) = section.split_at(section.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32c::crc32c(payload) != stored {
        return Err(Error::CorruptIndex("section checksum mismatch".into()));
    }

    let record_count = u64::from_le_bytes(payload[..8].try_into().unwrap());
    let rest = &payload[8..];
    let mut learned = None;
    let mut two_level = None;
    let locator = match footer.kind {
        IndexKind::Learned => {
            let (encoder, used) = KeyEncoder::deserialize(rest)?;
            let rest = &rest[used..];
            let (model, used) = LinearModel::deserialize(rest)?;
            let rest = &rest[used..];
            let (locator, _) = BlockLocator::decompress(rest)?;
            learned = Some(LearnedState { encoder, model });
            locator
        }
        IndexKind::TwoLevel => {
            let (index, used) = TwoLevelIndex::deserialize(rest)?;
            let rest = &rest[used..];
            let (l1_len, var_used) = crate::varint::read_u64(rest)
                .ok_or_else(|| Error::CorruptIndex("truncated level-1 length".into()))?;
            if index.level1_area_len() != l1_len || rest.len() < var_used + l1_len as usize {
                return Err(Error::CorruptIndex("level-1 area bounds".into()));
            }
            let l1_area_offset = footer.index_offset + 8 + used as u64 + var_used as u64;
            let rest = &rest[var_used + l1_len as usize..];
            let (locator, _) = BlockLocator::deserialize_raw(rest)?;
            two_level = Some(TwoLevelState {
                index,
                l1_area_offset,
            });
            locator
        }
    };

    if locator.data_start() != 0 || locator.total_data_bytes() != footer.index_offset {
        return Err(Error::CorruptIndex("locator disagrees with footer".into()));
    }

    Ok(TableHandle {
        inner: Arc::new(TableInner {
            file,
            table_id: NEXT_TABLE_ID.fetch_add(1, Ordering::Relaxed),
            cache,
            kind: footer.kind,
            record_count,
            index_bytes: footer.index_len,
            locator,
            learned,
            two_level,
        }),
    })
}

/// A fetched data block decoded for in-block binary search.
struct DecodedBlock {
    bytes: Bytes,
    spans: Vec<RecordSpan>,
}

impl DecodedBlock {
    fn key(&self, i: usize) -> &[u8] {
        let s = &self.spans[i];
        &self.bytes[s.key_start..s.key_start + s.key_len]
    }

    fn value(&self, i: usize) -> &[u8] {
        let s = &self.spans[i];
        &self.bytes[s.value_start..s.value_start + s.value_len]
    }

    fn len(&self) -> usize {
        self.spans.len()
    }

    /// Index of the first record with key >= `key`.
    fn lower_bound(&self, key: &[u8]) -> usize {
        self.spans.partition_point(|s| {
            &self.bytes[s.key_start..s.key_start + s.key_len] < key
        })
    }
}

impl TableInner {
    fn load_data_block(self: &Arc<Self>, block: u64) -> Result<Bytes> {
        let inner = Arc::clone(self);
        self.cache.get_block(
            BlockKey {
                table_id: self.table_id,
                kind: BlockKind::Data,
                block,
            },
            move || inner.read_data_block(block),
        )
    }

    fn read_data_block(&self, block: u64) -> Result<Bytes> {
        let (offset, len) = self.locator.block_range(block);
        let mut buf = vec![0u8; len as usize];
        self.file.read_exact_at(&mut buf, offset)?;
        if crc32c::crc32c(&buf) != self.locator.checksum(block) {
            return Err(Error::CorruptBlock(block));
        }
        Ok(Bytes::from(buf))
    }

    fn fetch_decoded(self: &Arc<Self>, block: u64) -> Result<DecodedBlock> {
        let bytes = self.load_data_block(block)?;
        let spans = decode_block_spans(&bytes).map_err(|_| Error::CorruptBlock(block))?;
        Ok(DecodedBlock { bytes, spans })
    }

    fn prefetch_data_block(self: &Arc<Self>, block: u64) {
        if block >= self.locator.n_blocks() {
            return;
        }
        let inner = Arc::clone(self);
        self.cache.prefetch(
            BlockKey {
                table_id: self.table_id,
                kind: BlockKind::Data,
                block,
            },
            move || inner.read_data_block(block),
        );
    }

    /// Data block that can contain `key`, or None when `key` is past the
    /// end of a two-level table.
    fn locate_block(self: &Arc<Self>, key: &[u8]) -> Result<Option<u64>> {
        match self.kind {
            IndexKind::Learned => {
                let s = self.learned.as_ref().unwrap();
                let x = s.encoder.encode(key);
                Ok(Some(s.model.predict_block(
                    x,
                    self.locator.tau(),
                    self.locator.n_blocks(),
                )))
            }
            IndexKind::TwoLevel => {
                let s = self.two_level.as_ref().unwrap();
                s.index.lookup(key, |idx, rel_off, len| {
                    let area = s.l1_area_offset;
                    let loader_inner = Arc::clone(self);
                    self.cache.get_block(
                        BlockKey {
                            table_id: self.table_id,
                            kind: BlockKind::Index,
                            block: idx as u64,
                        },
                        move || {
                            let mut buf = vec![0u8; len as usize];
                            loader_inner.file.read_exact_at(&mut buf, area + rel_off)?;
                            Ok(Bytes::from(buf))
                        },
                    )
                })
            }
        }
    }
}

impl TableHandle {
    pub fn index_kind(&self) -> IndexKind {
        self.inner.kind
    }

    pub fn record_count(&self) -> u64 {
        self.inner.record_count
    }

    pub fn n_blocks(&self) -> u64 {
        self.inner.locator.n_blocks()
    }

    pub fn locator(&self) -> &BlockLocator {
        &self.inner.locator
    }

    pub fn index_bytes(&self) -> u64 {
        self.inner.index_bytes
    }

    /// Counters of the cache this handle reads through.
    pub fn cache_stats(&self) -> crate::cache::CacheStats {
        self.inner.cache.stats()
    }

    pub fn data_bytes(&self) -> u64 {
        self.inner.locator.total_data_bytes()
    }

    /// Learned-path prediction for `key`; None on two-level tables.
    pub fn predict_block_for(&self, key: &[u8]) -> Option<u64> {
        let s = self.inner.learned.as_ref()?;
        Some(s.model.predict_block(
            s.encoder.encode(key),
            self.inner.locator.tau(),
            self.inner.locator.n_blocks(),
        ))
    }

    /// Trained model of a learned table.
    pub fn learned_model(&self) -> Option<&LinearModel> {
        self.inner.learned.as_ref().map(|s| &s.model)
    }

    pub fn key_encoder(&self) -> Option<&KeyEncoder> {
        self.inner.learned.as_ref().map(|s| &s.encoder)
    }

    /// Point lookup. Learned tables fetch exactly the one predicted block;
    /// two-level tables fetch one level-1 index block plus the data block.
    pub fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        let Some(block) = self.inner.locate_block(key)? else {
            return Ok(None);
        };
        let decoded = self.inner.fetch_decoded(block)?;
        let i = decoded.lower_bound(key);
        if i < decoded.len() && decoded.key(i) == key {
            Ok(Some(decoded.value(i).to_vec()))
        } else {
            Ok(None)
        }
    }

    /// Returns up to `n` consecutive records starting at the first key at
    /// or after `start_key`, crossing block boundaries as needed and
    /// prefetching one block ahead at each crossing.
    pub fn scan(&self, start_key: &[u8], n: usize) -> Result<Vec<Record>> {
        let mut out = Vec::with_capacity(n.min(1024));
        if n == 0 {
            return Ok(out);
        }
        let Some(first_block) = self.inner.locate_block(start_key)? else {
            return Ok(out);
        };
        let n_blocks = self.inner.locator.n_blocks();
        let mut block = first_block;
        while block < n_blocks && out.len() < n {
            let decoded = self.inner.fetch_decoded(block)?;
            let mut i = if block == first_block {
                decoded.lower_bound(start_key)
            } else {
                0
            };
            while i < decoded.len() && out.len() < n {
                out.push(Record {
                    key: decoded.key(i).to_vec(),
                    value: decoded.value(i).to_vec(),
                });
                i += 1;
            }
            block += 1;
            if out.len() < n && block < n_blocks {
                self.inner.prefetch_data_block(block + 1);
            }
        }
        Ok(out)
    }

    /// Reads and decodes one whole block; audit and tooling hook.
    pub fn read_block(&self, block: u64) -> Result<Vec<Record>> {
        if block >= self.inner.locator.n_blocks() {
            return Err(Error::InvalidInput(format!("block {block} out of range")));
        }
        let decoded = self.inner.fetch_decoded(block)?;
        Ok((0..decoded.len())
            .map(|i| Record {
                key: decoded.key(i).to_vec(),
                value: decoded.value(i).to_vec(),
            })
            .collect())
    }

    pub fn stats(&self) -> TableStats {
        let loc = &self.inner.locator;
        let tau = loc.tau();
        let mut histogram = vec![0u64; STATS_BUCKET_HALVES];
        let mut empty_blocks = 0u64;
        let mut min_block = u64::MAX;
        let mut max_block = 0u64;
        for size in loc.block_sizes() {
            if size == 0 {
                empty_blocks += 1;
                continue;
            }
            min_block = min_block.min(size);
            max_block = max_block.max(size);
            let bucket = ((size * 2 / tau) as usize).min(STATS_BUCKET_HALVES - 1);
            histogram[bucket] += 1;
        }
        TableStats {
            index_kind: self.inner.kind,
            record_count: self.inner.record_count,
            n_blocks: loc.n_blocks(),
            empty_blocks,
            data_bytes: loc.total_data_bytes(),
            index_bytes: self.inner.index_bytes,
            tau,
            block_size_histogram: histogram,
            min_block_bytes: if min_block == u64::MAX { 0 } else { min_block },
            max_block_bytes: max_block,
        }
    }
}
