//! Block locator: the array mapping block numbers to file offsets.
//!
//! `offsets[i]` is the file offset where block `i` starts and the final
//! entry marks the end of the data section, so `offsets[i+1] - offsets[i]`
//! is block `i`'s size (zero-length blocks are legal). A 32-bit CRC per
//! block rides along as fetch-time metadata.
//!
//! Because blocks aim at a fixed target size `tau`, offsets are roughly
//! uniformly spaced; the compressed form stores only the zig-zag varint
//! residual of each offset against the uniform grid `b0 + i*tau`.

use crate::error::{Error, Result};
use crate::varint;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLocator {
    offsets: Vec<u64>,
    checksums: Vec<u32>,
    tau: u64,
}

impl BlockLocator {
    pub fn new(offsets: Vec<u64>, checksums: Vec<u32>, tau: u64) -> Result<BlockLocator> {
        if offsets.len() != checksums.len() + 1 || checksums.is_empty() {
            return Err(Error::CorruptLocator("length mismatch".into()));
        }
        if tau == 0 {
            return Err(Error::CorruptLocator("zero tau".into()));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::CorruptLocator("offsets decrease".into()));
        }
        Ok(BlockLocator {
            offsets,
            checksums,
            tau,
        })
    }

    pub fn n_blocks(&self) -> u64 {
        self.checksums.len() as u64
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    /// Start offset and length of block `i`.
    pub fn block_range(&self, i: u64) -> (u64, u64) {
        let i = i as usize;
        (self.offsets[i], self.offsets[i + 1] - self.offsets[i])
    }

    pub fn checksum(&self, i: u64) -> u32 {
        self.checksums[i as usize]
    }

    pub fn data_start(&self) -> u64 {
        self.offsets[0]
    }

    pub fn total_data_bytes(&self) -> u64 {
        self.offsets[self.offsets.len() - 1] - self.offsets[0]
    }

    pub fn block_sizes(&self) -> impl Iterator<Item = u64> + '_ {
        self.offsets.windows(2).map(|w| w[1] - w[0])
    }

    fn residual(&self, i: usize) -> i64 {
        let expected = self.offsets[0] as i128 + i as i128 * self.tau as i128;
        i64::try_from(self.offsets[i] as i128 - expected).expect("offset residual fits i64")
    }

    /// Residual-compressed form; round-trips bit-exactly through
    /// [`BlockLocator::decompress`].
    pub fn compress(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.offsets.len() * 2 + self.checksums.len() * 4 + 24);
        varint::write_u64(&mut out, self.n_blocks());
        varint::write_u64(&mut out, self.tau);
        varint::write_u64(&mut out, self.offsets[0]);
        for i in 0..self.offsets.len() {
            varint::write_i64(&mut out, self.residual(i));
        }
        for &c in &self.checksums {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    /// Parses a compressed locator from the front of `buf`, returning it
    /// and the number of bytes consumed.
    pub fn decompress(buf: &[u8]) -> Result<(BlockLocator, usize)> {
        let bad = |m: &str| Error::CorruptLocator(m.into());
        let mut at = 0usize;
        let take_u64 = |buf: &[u8], at: &mut usize| -> Result<u64> {
            let (v, n) = varint::read_u64(&buf[*at..]).ok_or_else(|| bad("truncated varint"))?;
            *at += n;
            Ok(v)
        };
        let n_blocks = take_u64(buf, &mut at)?;
        let tau = take_u64(buf, &mut at)?;
        let b0 = take_u64(buf, &mut at)?;
        if n_blocks == 0 {
            return Err(bad("zero blocks"));
        }
        let n = usize::try_from(n_blocks).map_err(|_| bad("block count overflow"))?;
        if n > buf.len() {
            // each residual takes at least one byte; cheap sanity bound
            return Err(bad("block count exceeds payload"));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let (r, used) = varint::read_i64(&buf[at..]).ok_or_else(|| bad("truncated residual"))?;
            at += used;
            let expected = b0 as i128 + i as i128 * tau as i128;
            let off = u64::try_from(expected + r as i128).map_err(|_| bad("negative offset"))?;
            offsets.push(off);
        }
        if buf.len() < at + n * 4 {
            return Err(bad("truncated checksums"));
        }
        let mut checksums = Vec::with_capacity(n);
        for i in 0..n {
            let c = u32::from_le_bytes(buf[at + i * 4..at + i * 4 + 4].try_into().unwrap());
            checksums.push(c);
        }
        at += n * 4;
        Ok((BlockLocator::new(offsets, checksums, tau)?, at))
    }

    /// Uncompressed form: fixed-width offsets and checksums.
    pub fn serialize_raw(&self, out: &mut Vec<u8>) {
        varint::write_u64(out, self.n_blocks());
        varint::write_u64(out, self.tau);
        for &o in &self.offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        for &c in &self.checksums {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }

    pub fn deserialize_raw(buf: &[u8]) -> Result<(BlockLocator, usize)> {
        let bad = |m: &str| Error::CorruptLocator(m.into());
        let (n_blocks, mut at) = varint::read_u64(buf).ok_or_else(|| bad("truncated varint"))?;
        let (tau, used) = varint::read_u64(&buf[at..]).ok_or_else(|| bad("truncated varint"))?;
        at += used;
        let n = usize::try_from(n_blocks).map_err(|_| bad("block count overflow"))?;
        let need = (n + 1) * 8 + n * 4;
        if n == 0 || buf.len() < at + need {
            return Err(bad("truncated payload"));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        for i in 0..=n {
            offsets.push(u64::from_le_bytes(
                buf[at + i * 8..at + i * 8 + 8].try_into().unwrap(),
            ));
        }
        at += (n + 1) * 8;
        let mut checksums = Vec::with_capacity(n);
        for i in 0..n {
            checksums.push(u32::from_le_bytes(
                buf[at + i * 4..at + i * 4 + 4].try_into().unwrap(),
            ));
        }
        at += n * 4;
        Ok((BlockLocator::new(offsets, checksums, tau)?, at))
    }
}
