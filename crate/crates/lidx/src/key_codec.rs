//! Order-preserving conversion of variable-length string keys to scalars.
//!
//! Each character position gets its own numeric base derived from the range
//! of bytes observed there across the fit population, so long keys compress
//! into far fewer integer bits than fixed-radix packing would need. A key's
//! scalar is the mixed-radix value of its per-position codes; lexicographic
//! order of keys maps to numeric order of scalars.

use crate::error::{Error, Result};

/// Default number of leading key positions considered when fitting.
pub const DEFAULT_MAX_PREFIX: usize = 32;

/// Encodings are kept at or below 2^53 so every value is exact in an f64.
const MAX_EXACT_PRODUCT: u64 = 1 << 53;

/// Per-character-position range table turning a string key into a monotone
/// scalar. Immutable after fit; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyEncoder {
    /// Leading positions that participate in the encoding.
    prefix_len: usize,
    /// Smallest byte observed at each position.
    mins: Vec<u8>,
    /// Codes representable at each position, including the absent slot.
    bases: Vec<u16>,
    /// True where some fit key is too short to reach the position.
    has_absent: Vec<bool>,
    /// Mixed-radix place values: weights[i] = product of bases[i+1..].
    weights: Vec<u64>,
}

impl KeyEncoder {
    /// Fits an encoder over `keys` (order irrelevant), looking at up to
    /// `max_prefix` leading positions. The kept prefix is further capped so
    /// the product of bases stays exactly representable in an f64.
    pub fn fit<K: AsRef<[u8]>>(
        keys: impl IntoIterator<Item = K>,
        max_prefix: usize,
    ) -> Result<KeyEncoder> {
        struct PosStat {
            min: u8,
            max: u8,
            covered: u64,
        }
        let mut stats: Vec<PosStat> = Vec::new();
        let mut n_keys: u64 = 0;
        for key in keys {
            let k = key.as_ref();
            n_keys += 1;
            let len = k.len().min(max_prefix);
            while stats.len() < len {
                stats.push(PosStat {
                    min: u8::MAX,
                    max: 0,
                    covered: 0,
                });
            }
            for (i, &b) in k.iter().take(len).enumerate() {
                let s = &mut stats[i];
                s.min = s.min.min(b);
                s.max = s.max.max(b);
                s.covered += 1;
            }
        }
        if n_keys == 0 {
            return Err(Error::NoKeys);
        }

        let mut mins = Vec::with_capacity(stats.len());
        let mut bases = Vec::with_capacity(stats.len());
        let mut has_absent = Vec::with_capacity(stats.len());
        let mut product: u64 = 1;
        for s in &stats {
            let absent = s.covered < n_keys;
            let base = (s.max - s.min) as u16 + 1 + absent as u16;
            // Keep the running product of bases within exact-f64 range.
            if product.saturating_mul(base as u64) > MAX_EXACT_PRODUCT {
                break;
            }
            product *= base as u64;
            mins.push(s.min);
            bases.push(base);
            has_absent.push(absent);
        }

        Ok(KeyEncoder::from_parts(mins, bases, has_absent))
    }

    fn from_parts(mins: Vec<u8>, bases: Vec<u16>, has_absent: Vec<bool>) -> KeyEncoder {
        let prefix_len = bases.len();
        let mut weights = vec![1u64; prefix_len];
        for i in (0..prefix_len.saturating_sub(1)).rev() {
            weights[i] = weights[i + 1] * bases[i + 1] as u64;
        }
        KeyEncoder {
            prefix_len,
            mins,
            bases,
            has_absent,
            weights,
        }
    }

    /// Encodes `key` as an exact integer scalar. Any byte string is
    /// encodable: bytes outside a position's fitted range clamp to its
    /// nearest code, and positions past the key's end take the lowest code.
    pub fn encode_int(&self, key: &[u8]) -> u64 {
        let mut acc: u64 = 0;
        for i in 0..self.prefix_len {
            let code: u64 = if i >= key.len() {
                0
            } else {
                let shift = self.has_absent[i] as u16;
                let byte_codes = self.bases[i] - shift;
                let b = key[i];
                let raw = if b <= self.mins[i] {
                    0
                } else {
                    ((b - self.mins[i]) as u16).min(byte_codes - 1)
                };
                (raw + shift) as u64
            };
            acc += code * self.weights[i];
        }
        acc
    }

    /// Encodes `key` as the regression input scalar.
    pub fn encode(&self, key: &[u8]) -> f64 {
        self.encode_int(key) as f64
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    /// Largest value `encode_int` can produce: product of bases minus one.
    pub fn max_encoding(&self) -> u64 {
        self.bases.iter().map(|&b| b as u64).product::<u64>() - 1
    }

    /// Serialized form: prefix_len u16 LE, then per position
    /// min byte, base u16 LE, absent flag byte.
    pub fn serialize(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.prefix_len as u16).to_le_bytes());
        for i in 0..self.prefix_len {
            out.push(self.mins[i]);
            out.extend_from_slice(&self.bases[i].to_le_bytes());
            out.push(self.has_absent[i] as u8);
        }
    }

    /// Parses an encoder from the front of `buf`, returning it and the
    /// number of bytes consumed.
    pub fn deserialize(buf: &[u8]) -> Result<(KeyEncoder, usize)> {
        let bad = |m: &str| Error::CorruptIndex(format!("key encoder: {m}"));
        if buf.len() < 2 {
            return Err(bad("truncated header"));
        }
        let prefix_len = u16::from_le_bytes([buf[0], buf[1]]) as usize;
        let need = 2 + prefix_len * 4;
        if buf.len() < need {
            return Err(bad("truncated positions"));
        }
        let mut mins = Vec::with_capacity(prefix_len);
        let mut bases = Vec::with_capacity(prefix_len);
        let mut has_absent = Vec::with_capacity(prefix_len);
        let mut product: u64 = 1;
        for p in 0..prefix_len {
            let at = 2 + p * 4;
            let base = u16::from_le_bytes([buf[at + 1], buf[at + 2]]);
            if base == 0 {
                return Err(bad("zero base"));
            }
            match buf[at + 3] {
                0 => has_absent.push(false),
                1 => has_absent.push(true),
                _ => return Err(bad("bad absent flag")),
            }
            product = product.saturating_mul(base as u64);
            mins.push(buf[at]);
            bases.push(base);
        }
        if product > MAX_EXACT_PRODUCT {
            return Err(bad("base product exceeds exact range"));
        }
        Ok((KeyEncoder::from_parts(mins, bases, has_absent), need))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fit_three_key_example() {
        let enc = KeyEncoder::fit(["aab", "bdd", "bcb"], DEFAULT_MAX_PREFIX).unwrap();
        assert_eq!(enc.bases, &[2, 4, 3]);
        assert_eq!(enc.mins, b"aab");
        assert!(enc.has_absent.iter().all(|&a| !a));
        // "bcb" = 1*(4*3) + 2*3 + 0
        assert_eq!(enc.encode_int(b"bcb"), 18);
        assert_eq!(enc.encode(b"bcb"), 18.0);
        assert_eq!(enc.encode_int(b"aab"), 0);
    }

    #[test]
    fn fit_single_key() {
        let enc = KeyEncoder::fit(["x"], DEFAULT_MAX_PREFIX).unwrap();
        assert_eq!(enc.bases, &[1]);
        assert_eq!(enc.mins, b"x");
        assert_eq!(enc.encode_int(b"x"), 0);
    }

    #[test]
    fn fit_absent_slot() {
        let enc = KeyEncoder::fit(["a", "ab"], DEFAULT_MAX_PREFIX).unwrap();
        assert_eq!(enc.bases, &[1, 2]);
        assert_eq!(enc.has_absent, vec![false, true]);
        assert_eq!(enc.encode_int(b"a"), 0);
        assert_eq!(enc.encode_int(b"ab"), 1);
    }

    #[test]
    fn fit_empty_collection() {
        let keys: [&[u8]; 0] = [];
        assert!(matches!(
            KeyEncoder::fit(keys, DEFAULT_MAX_PREFIX),
            Err(Error::NoKeys)
        ));
    }

    #[test]
    fn out_of_population_keys_clamp() {
        let enc = KeyEncoder::fit(["bb", "cc"], DEFAULT_MAX_PREFIX).unwrap();
        // below, above, shorter, longer than anything fitted
        assert_eq!(enc.encode_int(b"aa"), 0);
        assert_eq!(enc.encode_int(b"zz"), enc.max_encoding());
        assert!(enc.encode_int(b"b") <= enc.encode_int(b"bb"));
        assert_eq!(enc.encode_int(b"ccX"), enc.encode_int(b"cc"));
    }

    #[test]
    fn precision_cap_limits_prefix() {
        // every position spans the full byte range: base 256, so at most
        // floor(53 / 8) = 6 positions stay within 2^53
        let lo = vec![0u8; 40];
        let hi = vec![255u8; 40];
        let enc = KeyEncoder::fit([&lo, &hi], DEFAULT_MAX_PREFIX).unwrap();
        assert_eq!(enc.prefix_len(), 6);
        assert!(enc.max_encoding() < MAX_EXACT_PRODUCT);
    }

    #[test]
    fn max_prefix_respected() {
        let enc = KeyEncoder::fit(["abcdef", "abcxyz"], 2).unwrap();
        assert_eq!(enc.prefix_len(), 2);
        assert_eq!(enc.encode_int(b"abcdef"), enc.encode_int(b"abcxyz"));
    }

    #[test]
    fn prefix_truncation_consistency() {
        let enc = KeyEncoder::fit(["aaaa", "zzzz"], 3).unwrap();
        assert_eq!(enc.encode_int(b"abcQ"), enc.encode_int(b"abcR"));
    }

    #[test]
    fn smallest_key_of_aligned_population_encodes_to_zero() {
        // Zero only holds when the smallest key carries the per-position
        // minimum everywhere, as in these populations. A population like
        // {"ab","ba"} has position-1 minimum 'a' from "ba", so its
        // smallest key "ab" encodes to 1.
        for keys in [vec!["aab", "bdd", "bcb"], vec!["000", "213", "987"]] {
            let enc = KeyEncoder::fit(&keys, DEFAULT_MAX_PREFIX).unwrap();
            let smallest = keys.iter().min().unwrap();
            assert_eq!(enc.encode_int(smallest.as_bytes()), 0);
        }
        let enc = KeyEncoder::fit(["ab", "ba"], DEFAULT_MAX_PREFIX).unwrap();
        assert_eq!(enc.encode_int(b"ab"), 1);
        assert_eq!(enc.encode_int(b"ba"), 2);
    }

    #[test]
    fn serialize_roundtrip() {
        let enc = KeyEncoder::fit(["a", "ab", "qrs"], DEFAULT_MAX_PREFIX).unwrap();
        let mut buf = Vec::new();
        enc.serialize(&mut buf);
        buf.extend_from_slice(b"tail");
        let (back, used) = KeyEncoder::deserialize(&buf).unwrap();
        assert_eq!(back, enc);
        assert_eq!(used, buf.len() - 4);
    }

    #[test]
    fn deserialize_rejects_garbage() {
        assert!(KeyEncoder::deserialize(&[9]).is_err());
        // header promising more positions than present
        assert!(KeyEncoder::deserialize(&[5, 0, b'a', 1]).is_err());
    }

    fn arb_keys() -> impl Strategy<Value = Vec<Vec<u8>>> {
        prop::collection::vec(prop::collection::vec(b'a'..=b'f', 0..8), 1..40)
    }

    proptest! {
        #[test]
        fn monotone_over_fit_population(keys in arb_keys()) {
            let enc = KeyEncoder::fit(&keys, DEFAULT_MAX_PREFIX).unwrap();
            let mut sorted = keys.clone();
            sorted.sort();
            for pair in sorted.windows(2) {
                prop_assert!(enc.encode_int(&pair[0]) <= enc.encode_int(&pair[1]));
            }
        }

        #[test]
        fn bounded_over_fit_population(keys in arb_keys()) {
            let enc = KeyEncoder::fit(&keys, DEFAULT_MAX_PREFIX).unwrap();
            let max = enc.max_encoding();
            for k in &keys {
                prop_assert!(enc.encode_int(k) <= max);
            }
        }
    }
}
