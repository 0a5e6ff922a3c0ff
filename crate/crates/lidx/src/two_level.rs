//! Two-level block index: the classic baseline.
//!
//! Level 0 is a single memory-resident run of separator keys, one per
//! level-1 index block. Each level-1 block maps the last key of a data
//! block to that block's number; actual offsets resolve through the shared
//! block locator. Level-1 blocks are fetched on demand and carry their own
//! CRC trailer.

use crate::error::{Error, Result};
use crate::varint;

pub const DEFAULT_INDEX_BLOCK_SIZE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Level0Entry {
    /// Last key of the level-1 block this entry points to.
    separator: Vec<u8>,
    /// Offset of the level-1 block, relative to the level-1 area start.
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoLevelIndex {
    level0: Vec<Level0Entry>,
}

/// Output of a build: the in-memory level-0 plus the serialized level-1 area.
#[derive(Debug, Clone)]
pub struct TwoLevelBuild {
    pub index: TwoLevelIndex,
    pub level1_bytes: Vec<u8>,
}

/// Packs `(last_key, block_id)` entries into level-1 blocks of at most
/// `index_block_size` encoded bytes (never splitting a single entry) and
/// derives the level-0 separators. Entries must be strictly ascending.
pub fn build_two_level<K: AsRef<[u8]>>(
    entries: &[(K, u64)],
    index_block_size: usize,
) -> Result<TwoLevelBuild> {
    if entries.is_empty() {
        return Err(Error::NoKeys);
    }
    if entries
        .windows(2)
        .any(|w| w[0].0.as_ref() >= w[1].0.as_ref())
    {
        return Err(Error::KeysNotSorted);
    }

    let mut level0 = Vec::new();
    let mut level1_bytes = Vec::new();
    let mut block_entries: Vec<u8> = Vec::new();
    let mut block_count: u64 = 0;
    let mut block_last_key: &[u8] = &[];

    let mut close_block =
        |entries_bytes: &mut Vec<u8>, count: &mut u64, last_key: &[u8], out: &mut Vec<u8>| {
            let start = out.len() as u64;
            let mut block = Vec::with_capacity(entries_bytes.len() + 8);
            varint::write_u64(&mut block, *count);
            block.append(entries_bytes);
            let crc = crc32c::crc32c(&block);
            block.extend_from_slice(&crc.to_le_bytes());
            out.extend_from_slice(&block);
            level0.push(Level0Entry {
                separator: last_key.to_vec(),
                offset: start,
                len: block.len() as u64,
            });
            *count = 0;
        };

    for (key, block_id) in entries {
        let key = key.as_ref();
        let mut enc = Vec::with_capacity(key.len() + 12);
        varint::write_u64(&mut enc, key.len() as u64);
        enc.extend_from_slice(key);
        varint::write_u64(&mut enc, *block_id);

        let projected = varint::len_u64(block_count + 1) as usize
            + block_entries.len()
            + enc.len()
            + 4;
        if block_count > 0 && projected > index_block_size {
            close_block(
                &mut block_entries,
                &mut block_count,
                block_last_key,
                &mut level1_bytes,
            );
        }
        block_entries.extend_from_slice(&enc);
        block_count += 1;
        block_last_key = key;
    }
    close_block(
        &mut block_entries,
        &mut block_count,
        block_last_key,
        &mut level1_bytes,
    );

    Ok(TwoLevelBuild {
        index: TwoLevelIndex { level0 },
        level1_bytes,
    })
}

/// Decodes a level-1 block (verifying its CRC trailer) into
/// `(last_key, block_id)` entries.
pub fn decode_l1_block(bytes: &[u8], l1_idx: u32) -> Result<Vec<(Vec<u8>, u64)>> {
    let bad = || Error::CorruptIndexBlock(l1_idx);
    if bytes.len() < 4 {
        return Err(bad());
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32c::crc32c(payload) != stored {
        return Err(bad());
    }
    let (count, mut at) = varint::read_u64(payload).ok_or_else(bad)?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let (klen, used) = varint::read_u64(&payload[at..]).ok_or_else(bad)?;
        at += used;
        let klen = klen as usize;
        if payload.len() < at + klen {
            return Err(bad());
        }
        let key = payload[at..at + klen].to_vec();
        at += klen;
        let (block_id, used) = varint::read_u64(&payload[at..]).ok_or_else(bad)?;
        at += used;
        entries.push((key, block_id));
    }
    if at != payload.len() {
        return Err(bad());
    }
    Ok(entries)
}

impl TwoLevelIndex {
    pub fn l1_block_count(&self) -> usize {
        self.level0.len()
    }

    /// Handle (offset within the level-1 area, length) of level-1 block `i`.
    pub fn l1_handle(&self, i: usize) -> (u64, u64) {
        (self.level0[i].offset, self.level0[i].len)
    }

    pub fn level1_area_len(&self) -> u64 {
        self.level0.last().map(|e| e.offset + e.len).unwrap_or(0)
    }

    /// Finds the data block that may contain `key`: binary search of the
    /// level-0 separators, then of the fetched level-1 block. Returns
    /// `None` when `key` is past the last key of the table. `fetch_l1`
    /// receives `(l1_index, offset, len)` and returns that block's bytes.
    pub fn lookup<F, B>(&self, key: &[u8], fetch_l1: F) -> Result<Option<u64>>
    where
        F: FnOnce(u32, u64, u64) -> Result<B>,
        B: AsRef<[u8]>,
    {
        let idx = self.level0.partition_point(|e| e.separator.as_slice() < key);
        if idx == self.level0.len() {
            return Ok(None);
        }
        let e = &self.level0[idx];
        let bytes = fetch_l1(idx as u32, e.offset, e.len)?;
        let entries = decode_l1_block(bytes.as_ref(), idx as u32)?;
        let pos = entries.partition_point(|(last_key, _)| last_key.as_slice() < key);
        if pos == entries.len() {
            // the level-0 separator promised this block covers `key`
            return Err(Error::CorruptIndexBlock(idx as u32));
        }
        Ok(Some(entries[pos].1))
    }

    /// Serialized level-0: varint entry count, then per entry varint key
    /// length, key bytes, varint offset, varint length.
    pub fn serialize(&self, out: &mut Vec<u8>) {
        varint::write_u64(out, self.level0.len() as u64);
        for e in &self.level0 {
            varint::write_u64(out, e.separator.len() as u64);
            out.extend_from_slice(&e.separator);
            varint::write_u64(out, e.offset);
            varint::write_u64(out, e.len);
        }
    }

    pub fn deserialize(buf: &[u8]) -> Result<(TwoLevelIndex, usize)> {
        let bad = |m: &str| Error::CorruptIndex(format!("level-0: {m}"));
        let (count, mut at) = varint::read_u64(buf).ok_or_else(|| bad("truncated count"))?;
        let mut level0 = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let (klen, used) =
                varint::read_u64(&buf[at..]).ok_or_else(|| bad("truncated key length"))?;
            at += used;
            let klen = klen as usize;
            if buf.len() < at + klen {
                return Err(bad("truncated separator"));
            }
            let separator = buf[at..at + klen].to_vec();
            at += klen;
            let (offset, used) =
                varint::read_u64(&buf[at..]).ok_or_else(|| bad("truncated offset"))?;
            at += used;
            let (len, used) = varint::read_u64(&buf[at..]).ok_or_else(|| bad("truncated length"))?;
            at += used;
            level0.push(Level0Entry {
                separator,
                offset,
                len,
            });
        }
        Ok((TwoLevelIndex { level0 }, at))
    }
}
