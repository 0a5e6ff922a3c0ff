//! Two-pass table builder.
//!
//! Pass one streams the records to validate ordering, collect keys and
//! on-disk sizes, and (for learned tables) fit the encoder and train the
//! model. Pass two streams again and writes each record into the block the
//! model predicts for its key — a new block starts exactly when the
//! predicted block number increases, and skipped numbers become
//! zero-length blocks so the locator stays directly indexable. Values are
//! never buffered across passes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::key_codec::KeyEncoder;
use crate::locator::BlockLocator;
use crate::model::{train_ols, LinearModel, Supervision};
use crate::source::RecordSource;
use crate::table::{write_record, BuildConfig, BuildReport, Footer, IndexKind};
use crate::two_level::build_two_level;
use crate::varint;

pub fn build_table(
    source: &dyn RecordSource,
    config: &BuildConfig,
    path: &Path,
) -> Result<BuildReport> {
    if config.tau == 0 || config.block_size == 0 {
        return Err(Error::InvalidInput("tau and block_size must be positive".into()));
    }

    // Pass 1: keys and sizes only.
    let mut keys: Vec<Vec<u8>> = Vec::new();
    let mut sizes: Vec<u64> = Vec::new();
    let mut total_bytes: u64 = 0;
    for record in source.records()? {
        let record = record?;
        if record.key.is_empty() {
            return Err(Error::InvalidInput("empty key".into()));
        }
        if let Some(prev) = keys.last() {
            if prev.as_slice() >= record.key.as_slice() {
                return Err(Error::KeysNotSorted);
            }
        }
        let size = record.encoded_len();
        total_bytes += size;
        sizes.push(size);
        keys.push(record.key);
    }
    if keys.is_empty() {
        return Err(Error::NoKeys);
    }

    let mut fell_back = false;
    let learned = if config.index_kind == IndexKind::Learned {
        let encoder = KeyEncoder::fit(&keys, config.max_prefix)?;
        let sup = Supervision::build(
            &encoder,
            keys.iter().map(|k| k.as_slice()).zip(sizes.iter().copied()),
        )?;
        match train_ols(&sup) {
            Ok(model) => {
                // comonotone supervision guarantees this
                debug_assert!(model.slope() >= 0.0);
                Some((encoder, model))
            }
            Err(Error::DegenerateModel) => {
                fell_back = true;
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    let written = match &learned {
        Some((encoder, model)) => write_learned(
            source,
            config,
            encoder,
            model,
            total_bytes,
            keys.len() as u64,
            &mut out,
        )?,
        None => write_two_level(source, config, total_bytes, keys.len() as u64, &mut out)?,
    };
    out.flush()?;
    out.get_ref().sync_all()?;

    Ok(BuildReport {
        index_kind: if learned.is_some() {
            IndexKind::Learned
        } else {
            IndexKind::TwoLevel
        },
        n_blocks: written.n_blocks,
        index_bytes: written.index_bytes,
        data_bytes: total_bytes,
        record_count: keys.len() as u64,
        fell_back,
    })
}

struct Written {
    n_blocks: u64,
    index_bytes: u64,
}

/// Incrementally written data section: one block buffered at a time.
struct BlockRun<'a, W: Write> {
    out: &'a mut W,
    buf: Vec<u8>,
    offsets: Vec<u64>,
    checksums: Vec<u32>,
}

impl<'a, W: Write> BlockRun<'a, W> {
    fn new(out: &'a mut W) -> Self {
        BlockRun {
            out,
            buf: Vec::new(),
            offsets: vec![0],
            checksums: Vec::new(),
        }
    }

    fn close_block(&mut self) -> Result<()> {
        self.checksums.push(crc32c::crc32c(&self.buf));
        self.out.write_all(&self.buf)?;
        let end = self.offsets.last().unwrap() + self.buf.len() as u64;
        self.offsets.push(end);
        self.buf.clear();
        Ok(())
    }

    fn finish(mut self, tau: u64, min_blocks: u64) -> Result<BlockLocator> {
        self.close_block()?;
        while (self.checksums.len() as u64) < min_blocks {
            self.close_block()?;
        }
        BlockLocator::new(self.offsets, self.checksums, tau)
    }
}

fn write_learned(
    source: &dyn RecordSource,
    config: &BuildConfig,
    encoder: &KeyEncoder,
    model: &LinearModel,
    total_bytes: u64,
    record_count: u64,
    out: &mut BufWriter<File>,
) -> Result<Written> {
    let n_blocks = total_bytes.div_ceil(config.tau).max(1);
    let mut run = BlockRun::new(out);
    let mut current_block: u64 = 0;
    let mut seen: u64 = 0;
    for record in source.records()? {
        let record = record?;
        let predicted = model.predict_block(encoder.encode(&record.key), config.tau, n_blocks);
        if predicted < current_block {
            return Err(Error::Correctness(
                "model predicted a non-monotone block number".into(),
            ));
        }
        while current_block < predicted {
            run.close_block()?;
            current_block += 1;
        }
        write_record(&mut run.buf, &record.key, &record.value);
        seen += 1;
    }
    if seen != record_count {
        return Err(Error::InvalidInput(
            "record stream changed between passes".into(),
        ));
    }
    let locator = run.finish(config.tau, n_blocks)?;
    if locator.total_data_bytes() != total_bytes {
        return Err(Error::InvalidInput(
            "record stream changed between passes".into(),
        ));
    }

    let mut payload = Vec::new();
    payload.extend_from_slice(&record_count.to_le_bytes());
    encoder.serialize(&mut payload);
    model.serialize(&mut payload);
    payload.extend_from_slice(&locator.compress());
    finish_index_section(out, payload, IndexKind::Learned, total_bytes, n_blocks)
}

fn write_two_level(
    source: &dyn RecordSource,
    config: &BuildConfig,
    total_bytes: u64,
    record_count: u64,
    out: &mut BufWriter<File>,
) -> Result<Written> {
    let mut run = BlockRun::new(out);
    let mut entries: Vec<(Vec<u8>, u64)> = Vec::new();
    let mut last_key: Vec<u8> = Vec::new();
    let mut seen: u64 = 0;
    for record in source.records()? {
        let record = record?;
        let size = record.encoded_len();
        if !run.buf.is_empty() && run.buf.len() as u64 + size > config.block_size {
            entries.push((std::mem::take(&mut last_key), entries.len() as u64));
            run.close_block()?;
        }
        write_record(&mut run.buf, &record.key, &record.value);
        last_key = record.key;
        seen += 1;
    }
    if seen != record_count {
        return Err(Error::InvalidInput(
            "record stream changed between passes".into(),
        ));
    }
    entries.push((last_key, entries.len() as u64));
    let locator = run.finish(config.block_size, 1)?;
    if locator.total_data_bytes() != total_bytes || locator.n_blocks() != entries.len() as u64 {
        return Err(Error::InvalidInput(
            "record stream changed between passes".into(),
        ));
    }

    let built = build_two_level(&entries, config.index_block_size)?;
    let mut payload = Vec::new();
    payload.extend_from_slice(&record_count.to_le_bytes());
    built.index.serialize(&mut payload);
    varint::write_u64(&mut payload, built.level1_bytes.len() as u64);
    payload.extend_from_slice(&built.level1_bytes);
    locator.serialize_raw(&mut payload);
    finish_index_section(
        out,
        payload,
        IndexKind::TwoLevel,
        total_bytes,
        locator.n_blocks(),
    )
}

fn finish_index_section(
    out: &mut BufWriter<File>,
    mut payload: Vec<u8>,
    kind: IndexKind,
    data_bytes: u64,
    n_blocks: u64,
) -> Result<Written> {
    let crc = crc32c::crc32c(&payload);
    payload.extend_from_slice(&crc.to_le_bytes());
    out.write_all(&payload)?;
    let footer = Footer {
        kind,
        index_offset: data_bytes,
        index_len: payload.len() as u64,
    };
    out.write_all(&footer.encode())?;
    Ok(Written {
        n_blocks,
        index_bytes: payload.len() as u64,
    })
}
