//! Telemetry ingestion: streaming CSV parsing, validation, gap marking and
//! the coulomb-counting SOC signal.
//!
//! Expected CSV layout (header required, exactly these columns):
//!
//! ```text
//! timestamp,voltage_v,current_a,power_w,temperature_c
//! ```
//!
//! Timestamps are either RFC 3339 or unix epoch seconds; the format is
//! auto-detected from the first data row and must stay uniform within a
//! file. Decimal point `.`, no thousands separators.

mod reader;
mod soc;

pub use reader::{
    peek_first_timestamp, read_stream, ChainedStream, CsvStream, IngestOptions, StreamStats,
    TimestampFormat,
};
pub use soc::{compute_soc, SocConfig, SocSample, SocSeries, SocTracker};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing or unreadable header row")]
    MissingHeader,
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error(
        "too many non-monotonic timestamps: {rejected} of {total} rows (> 0.1 %), stream aborted"
    )]
    NonMonotonicTimestamp { rejected: u64, total: u64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
