//! A single-node, block-based sorted-table storage engine whose learned
//! index defines block boundaries at write time, so block predictions are
//! correct by construction. Ships with the classic two-level block index
//! as a baseline and a cache-pressure-aware benchmark harness for
//! comparing the two on identical seeded workloads.

pub mod bench;
pub mod cache;
pub mod error;
pub mod key_codec;
pub mod locator;
pub mod model;
pub mod source;
pub mod table;
pub mod two_level;
mod varint;

pub use cache::{BlockCache, BlockKey, BlockKind, CacheConfig, CacheStats};
pub use error::{Error, Result};
pub use key_codec::KeyEncoder;
pub use locator::BlockLocator;
pub use model::{train_ols, LinearModel, Supervision};
pub use source::{BinaryFileSource, RecordSource, TextFileSource, VecSource};
pub use table::{
    build_table, open_table, BuildConfig, BuildReport, IndexKind, Record, TableHandle, TableStats,
};
