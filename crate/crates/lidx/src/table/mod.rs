//! Immutable block-partitioned sorted-table files.
//!
//! ```text
//! +--------------------------+ (offset 0)
//! | data block 0             |   records only: per record
//! +--------------------------+     varint key_len | key
//! | data block 1             |     varint val_len | value
//! +--------------------------+   zero-length blocks are legal
//! | ...                      |
//! +--------------------------+
//! | index section            |   record_count u64
//! |                          |   learned:   key encoder | linear model
//! |                          |             | compressed locator
//! |                          |   two_level: level-0 | varint l1_len
//! |                          |             | level-1 blocks | raw locator
//! |                          |   crc32c of section payload (u32)
//! +--------------------------+
//! | footer (40 bytes)        |   magic "LIDXSST1" | version u16
//! +--------------------------+   kind u8 | reserved x9
//!                                 index offset u64 | index len u64
//!                                 footer crc32c u32
//! ```
//!
//! All integers little-endian. Block checksums live in the locator, not in
//! the blocks themselves, so a block's physical size is exactly the sum of
//! its record framings — the same byte count the model is trained on.
//!
//! A learned table is written to match its index: the model fixes each
//! record's block number at build time, so a reader's prediction is correct
//! by construction and a point lookup touches exactly one data block.

mod reader;
mod writer;

pub use reader::{open_table, TableHandle};
pub use writer::build_table;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::varint;

pub const MAGIC: &[u8; 8] = b"LIDXSST1";
pub const FORMAT_VERSION: u16 = 1;
pub const FOOTER_LEN: usize = 40;

pub const DEFAULT_TAU: u64 = 32 * 1024;
pub const DEFAULT_BLOCK_SIZE: u64 = 32 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Learned,
    TwoLevel,
}

impl IndexKind {
    pub fn name(&self) -> &'static str {
        match self {
            IndexKind::Learned => "learned",
            IndexKind::TwoLevel => "two_level",
        }
    }

    fn to_u8(self) -> u8 {
        match self {
            IndexKind::Learned => 0,
            IndexKind::TwoLevel => 1,
        }
    }

    fn from_u8(v: u8) -> Result<IndexKind> {
        match v {
            0 => Ok(IndexKind::Learned),
            1 => Ok(IndexKind::TwoLevel),
            other => Err(Error::NotATable(format!("unknown index kind {other}"))),
        }
    }
}

/// A key/value pair. Keys are non-empty byte strings; values are opaque.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Record {
    pub key: Vec<u8>,
    pub value: Vec<u8>,
}

impl Record {
    pub fn new(key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Record {
        Record {
            key: key.into(),
            value: value.into(),
        }
    }

    /// On-disk size including framing: this is the record's contribution
    /// to the supervision target.
    pub fn encoded_len(&self) -> u64 {
        record_encoded_len(self.key.len(), self.value.len())
    }
}

pub fn record_encoded_len(key_len: usize, value_len: usize) -> u64 {
    varint::len_u64(key_len as u64) + key_len as u64 + varint::len_u64(value_len as u64)
        + value_len as u64
}

pub(crate) fn write_record(buf: &mut Vec<u8>, key: &[u8], value: &[u8]) {
    varint::write_u64(buf, key.len() as u64);
    buf.extend_from_slice(key);
    varint::write_u64(buf, value.len() as u64);
    buf.extend_from_slice(value);
}

/// Byte spans of one record inside a block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RecordSpan {
    pub key_start: usize,
    pub key_len: usize,
    pub value_start: usize,
    pub value_len: usize,
}

/// Decodes a block into per-record spans, the in-memory restart array used
/// for binary search within the block.
pub(crate) fn decode_block_spans(block: &[u8]) -> Result<Vec<RecordSpan>> {
    let bad = || Error::InvalidInput("malformed record framing in block".into());
    let mut spans = Vec::new();
    let mut at = 0usize;
    while at < block.len() {
        let (key_len, used) = varint::read_u64(&block[at..]).ok_or_else(bad)?;
        at += used;
        let key_start = at;
        at = at.checked_add(key_len as usize).ok_or_else(bad)?;
        if at > block.len() {
            return Err(bad());
        }
        let (value_len, used) = varint::read_u64(&block[at..]).ok_or_else(bad)?;
        at += used;
        let value_start = at;
        at = at.checked_add(value_len as usize).ok_or_else(bad)?;
        if at > block.len() {
            return Err(bad());
        }
        spans.push(RecordSpan {
            key_start,
            key_len: key_len as usize,
            value_start,
            value_len: value_len as usize,
        });
    }
    Ok(spans)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Footer {
    pub kind: IndexKind,
    pub index_offset: u64,
    pub index_len: u64,
}

impl Footer {
    pub fn encode(&self) -> [u8; FOOTER_LEN] {
        let mut out = [0u8; FOOTER_LEN];
        out[..8].copy_from_slice(MAGIC);
        out[8..10].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        out[10] = self.kind.to_u8();
        // bytes 11..20 reserved
        out[20..28].copy_from_slice(&self.index_offset.to_le_bytes());
        out[28..36].copy_from_slice(&self.index_len.to_le_bytes());
        let crc = crc32c::crc32c(&out[..36]);
        out[36..40].copy_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Footer> {
        if buf.len() != FOOTER_LEN {
            return Err(Error::NotATable("short footer".into()));
        }
        if &buf[..8] != MAGIC {
            return Err(Error::NotATable("bad magic".into()));
        }
        let stored = u32::from_le_bytes(buf[36..40].try_into().unwrap());
        if crc32c::crc32c(&buf[..36]) != stored {
            return Err(Error::NotATable("footer checksum mismatch".into()));
        }
        let version = u16::from_le_bytes(buf[8..10].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::NotATable(format!("unsupported version {version}")));
        }
        Ok(Footer {
            kind: IndexKind::from_u8(buf[10])?,
            index_offset: u64::from_le_bytes(buf[20..28].try_into().unwrap()),
            index_len: u64::from_le_bytes(buf[28..36].try_into().unwrap()),
        })
    }
}

/// Build-time knobs. `tau` drives learned block boundaries; `block_size`
/// is the fill threshold for baseline tables.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub index_kind: IndexKind,
    pub tau: u64,
    pub block_size: u64,
    pub index_block_size: usize,
    pub max_prefix: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            index_kind: IndexKind::Learned,
            tau: DEFAULT_TAU,
            block_size: DEFAULT_BLOCK_SIZE,
            index_block_size: crate::two_level::DEFAULT_INDEX_BLOCK_SIZE,
            max_prefix: crate::key_codec::DEFAULT_MAX_PREFIX,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BuildReport {
    pub index_kind: IndexKind,
    pub n_blocks: u64,
    pub index_bytes: u64,
    pub data_bytes: u64,
    pub record_count: u64,
    /// True when a learned build hit a degenerate model and fell back to
    /// the two-level index.
    pub fell_back: bool,
}

/// Histogram bucket width as a fraction of tau.
pub const STATS_BUCKET_HALVES: usize = 7;

#[derive(Debug, Clone, Serialize)]
pub struct TableStats {
    pub index_kind: IndexKind,
    pub record_count: u64,
    pub n_blocks: u64,
    pub empty_blocks: u64,
    pub data_bytes: u64,
    pub index_bytes: u64,
    pub tau: u64,
    /// Nonempty block sizes bucketed in tau/2-wide bins; the last bucket
    /// collects everything at or above 3*tau.
    pub block_size_histogram: Vec<u64>,
    pub min_block_bytes: u64,
    pub max_block_bytes: u64,
}
