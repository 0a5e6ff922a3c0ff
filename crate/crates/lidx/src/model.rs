//! Linear model mapping encoded keys to cumulative byte offsets.
//!
//! The supervision target for a record is the number of on-disk bytes of
//! all records before it, so a fitted line predicts "how far into the data
//! section" a key lands. Dividing a predicted offset by the target block
//! size and flooring yields a block number.

use crate::error::{Error, Result};
use crate::key_codec::KeyEncoder;

/// Regression inputs: encoded keys paired with cumulative preceding byte
/// counts. Both sequences are non-decreasing, which guarantees the fitted
/// slope is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervision {
    xs: Vec<f64>,
    ys: Vec<f64>,
    total_bytes: u64,
}

impl Supervision {
    /// Builds supervision from `(key, on-disk record size)` pairs, which
    /// must be strictly ascending by key.
    pub fn build<'a, I>(encoder: &KeyEncoder, records: I) -> Result<Supervision>
    where
        I: IntoIterator<Item = (&'a [u8], u64)>,
    {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut running: u64 = 0;
        let mut prev_key: Option<Vec<u8>> = None;
        for (key, size) in records {
            if let Some(prev) = &prev_key {
                if prev.as_slice() >= key {
                    return Err(Error::KeysNotSorted);
                }
            }
            xs.push(encoder.encode(key));
            ys.push(running as f64);
            running += size;
            prev_key = Some(key.to_vec());
        }
        if xs.is_empty() {
            return Err(Error::NoKeys);
        }
        Ok(Supervision {
            xs,
            ys,
            total_bytes: running,
        })
    }

    /// Assembles supervision from raw vectors. Both must be non-decreasing
    /// and the same length; `total_bytes` becomes the trained model's
    /// prediction ceiling.
    pub fn from_parts(xs: Vec<f64>, ys: Vec<f64>, total_bytes: u64) -> Result<Supervision> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::InvalidInput(
                "supervision vectors empty or length-mismatched".into(),
            ));
        }
        if xs.windows(2).any(|w| w[0] > w[1]) || ys.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("supervision not non-decreasing".into()));
        }
        Ok(Supervision {
            xs,
            ys,
            total_bytes,
        })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.c
    }
}

/// Slope/intercept line over encoded keys, with predictions clamped to the
/// table's data byte range. Immutable after training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    slope: f64,
    intercept: f64,
    clamp_max: u64,
}

/// Fits ordinary least squares in a single pass over the supervision.
///
/// Sums are taken about the first sample with compensated accumulation, so
/// encodings near 2^53 do not cancel away the slope. Returns
/// [`Error::DegenerateModel`] when the inputs have zero variance (all keys
/// share one encoding), in which case no line can separate blocks.
pub fn train_ols(sup: &Supervision) -> Result<LinearModel> {
    let n = sup.len() as f64;
    let x0 = sup.xs[0];
    let y0 = sup.ys[0];
    let (mut sx, mut sy, mut sxy, mut sxx) = (
        Compensated::default(),
        Compensated::default(),
        Compensated::default(),
        Compensated::default(),
    );
    for (&x, &y) in sup.xs.iter().zip(&sup.ys) {
        let dx = x - x0;
        let dy = y - y0;
        sx.add(dx);
        sy.add(dy);
        sxy.add(dx * dy);
        sxx.add(dx * dx);
    }
    let (sx, sy, sxy, sxx) = (sx.value(), sy.value(), sxy.value(), sxx.value());
    let var_n = sxx - sx * sx / n;
    if var_n.is_nan() || var_n <= 0.0 {
        return Err(Error::DegenerateModel);
    }
    let cov_n = sxy - sx * sy / n;
    let slope = cov_n / var_n;
    let intercept = (sy - slope * sx) / n + y0 - slope * x0;
    Ok(LinearModel {
        slope,
        intercept,
        clamp_max: sup.total_bytes,
    })
}

impl LinearModel {
    pub fn new(slope: f64, intercept: f64, clamp_max: u64) -> LinearModel {
        LinearModel {
            slope,
            intercept,
            clamp_max,
        }
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn clamp_max(&self) -> u64 {
        self.clamp_max
    }

    /// Predicted cumulative byte offset, clamped to `[0, clamp_max]`.
    pub fn predict_offset(&self, x: f64) -> f64 {
        (self.slope * x + self.intercept).clamp(0.0, self.clamp_max as f64)
    }

    /// Predicted block number: floor(offset / tau) capped at the last block.
    pub fn predict_block(&self, x: f64, tau: u64, n_blocks: u64) -> u64 {
        debug_assert!(tau > 0 && n_blocks >= 1);
        let b = (self.predict_offset(x) / tau as f64).floor() as u64;
        b.min(n_blocks - 1)
    }

    /// Serialized form: slope f64 LE, intercept f64 LE, clamp_max u64 LE.
    pub fn serialize(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.slope.to_le_bytes());
        out.extend_from_slice(&self.intercept.to_le_bytes());
        out.extend_from_slice(&self.clamp_max.to_le_bytes());
    }

    pub const SERIALIZED_LEN: usize = 24;

    pub fn deserialize(buf: &[u8]) -> Result<(LinearModel, usize)> {
        if buf.len() < Self::SERIALIZED_LEN {
            return Err(Error::CorruptIndex("truncated linear model".into()));
        }
        let f = |at: usize| f64::from_le_bytes(buf[at..at + 8].try_into().unwrap());
        let slope = f(0);
        let intercept = f(8);
        let clamp_max = u64::from_le_bytes(buf[16..24].try_into().unwrap());
        if !slope.is_finite() || !intercept.is_finite() {
            return Err(Error::CorruptIndex("non-finite linear model".into()));
        }
        Ok((
            LinearModel {
                slope,
                intercept,
                clamp_max,
            },
            Self::SERIALIZED_LEN,
        ))
    }
}
