//! LEB128 variable-length integers and zig-zag signed encoding.
//!
//! Low 7 bits per byte, high bit set means more bytes follow.

use std::io::Read;

use crate::error::{Error, Result};

pub(crate) const MAX_VARINT_LEN: usize = 10;

pub(crate) fn write_u64(buf: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            buf.push(byte);
            return;
        }
        buf.push(byte | 0x80);
    }
}

/// Encoded length of `v` without writing it.
pub(crate) fn len_u64(v: u64) -> u64 {
    (64 - v.max(1).leading_zeros() as u64).div_ceil(7)
}

/// Decodes a varint from the start of `buf`, returning (value, bytes read).
pub(crate) fn read_u64(buf: &[u8]) -> Option<(u64, usize)> {
    let mut v: u64 = 0;
    for (i, &b) in buf.iter().take(MAX_VARINT_LEN).enumerate() {
        let bits = (b & 0x7f) as u64;
        if i == 9 && b > 1 {
            return None; // overflows u64
        }
        v |= bits << (7 * i);
        if b & 0x80 == 0 {
            return Some((v, i + 1));
        }
    }
    None
}

pub(crate) fn zigzag_encode(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub(crate) fn zigzag_decode(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

pub(crate) fn write_i64(buf: &mut Vec<u8>, v: i64) {
    write_u64(buf, zigzag_encode(v));
}

pub(crate) fn read_i64(buf: &[u8]) -> Option<(i64, usize)> {
    read_u64(buf).map(|(v, n)| (zigzag_decode(v), n))
}

/// Reads a varint byte-by-byte from a stream. Returns Ok(None) on clean EOF
/// at a value boundary; EOF mid-value is an error.
pub(crate) fn read_u64_from<R: Read>(r: &mut R) -> Result<Option<u64>> {
    let mut v: u64 = 0;
    let mut i = 0usize;
    loop {
        let mut byte = [0u8; 1];
        match r.read(&mut byte) {
            Ok(0) => {
                if i == 0 {
                    return Ok(None);
                }
                return Err(Error::InvalidInput("truncated varint".into()));
            }
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
        let b = byte[0];
        if i >= MAX_VARINT_LEN || (i == 9 && b > 1) {
            return Err(Error::InvalidInput("varint overflows u64".into()));
        }
        v |= ((b & 0x7f) as u64) << (7 * i);
        if b & 0x80 == 0 {
            return Ok(Some(v));
        }
        i += 1;
    }
}
