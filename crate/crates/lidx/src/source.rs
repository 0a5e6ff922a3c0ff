//! Record sources: re-iterable streams feeding the two-pass table builder.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::table::Record;
use crate::varint;

/// A stream of records that can be opened repeatedly. The table builder
/// makes two passes: one to fit the index, one to place records, so the
/// source must yield identical records each time.
pub trait RecordSource {
    fn records(&self) -> Result<Box<dyn Iterator<Item = Result<Record>> + '_>>;
}

/// In-memory source, mostly for tests and small corpora.
pub struct VecSource(pub Vec<Record>);

impl RecordSource for VecSource {
    fn records(&self) -> Result<Box<dyn Iterator<Item = Result<Record>> + '_>> {
        Ok(Box::new(self.0.iter().cloned().map(Ok)))
    }
}

/// Length-prefixed binary record file: per record, varint key length, key
/// bytes, varint value length, value bytes.
pub struct BinaryFileSource {
    path: PathBuf,
}

impl BinaryFileSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        BinaryFileSource { path: path.into() }
    }
}

impl RecordSource for BinaryFileSource {
    fn records(&self) -> Result<Box<dyn Iterator<Item = Result<Record>> + '_>> {
        let file = File::open(&self.path)?;
        Ok(Box::new(BinaryRecords {
            reader: BufReader::new(file),
            done: false,
        }))
    }
}

struct BinaryRecords {
    reader: BufReader<File>,
    done: bool,
}

impl BinaryRecords {
    fn read_one(&mut self) -> Result<Option<Record>> {
        let Some(key_len) = varint::read_u64_from(&mut self.reader)? else {
            return Ok(None);
        };
        let mut key = vec![0u8; key_len as usize];
        self.reader.read_exact(&mut key).map_err(truncated)?;
        let value_len = varint::read_u64_from(&mut self.reader)?
            .ok_or_else(|| Error::InvalidInput("record truncated before value length".into()))?;
        let mut value = vec![0u8; value_len as usize];
        self.reader.read_exact(&mut value).map_err(truncated)?;
        Ok(Some(Record { key, value }))
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::InvalidInput("truncated record".into())
    } else {
        e.into()
    }
}

impl Iterator for BinaryRecords {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_one() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Text record file: one record per line, key and value separated by the
/// first tab. Keys must already be in ascending order.
pub struct TextFileSource {
    path: PathBuf,
}

impl TextFileSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        TextFileSource { path: path.into() }
    }
}

impl RecordSource for TextFileSource {
    fn records(&self) -> Result<Box<dyn Iterator<Item = Result<Record>> + '_>> {
        let file = File::open(&self.path)?;
        let lines = BufReader::new(file).split(b'\n');
        Ok(Box::new(lines.map(|line| {
            let mut line = line.map_err(Error::from)?;
            if line.last() == Some(&b'\r') {
                line.pop();
            }
            let tab = line
                .iter()
                .position(|&b| b == b'\t')
                .ok_or_else(|| Error::InvalidInput("text record has no tab separator".into()))?;
            let value = line.split_off(tab + 1);
            line.pop(); // the tab itself
            Ok(Record { key: line, value })
        })))
    }
}

/// Writes `records` in the binary input format understood by
/// [`BinaryFileSource`].
pub fn write_binary_records(out: &mut Vec<u8>, records: &[Record]) {
    for r in records {
        varint::write_u64(out, r.key.len() as u64);
        out.extend_from_slice(&r.key);
        varint::write_u64(out, r.value.len() as u64);
        out.extend_from_slice(&r.value);
    }
}
