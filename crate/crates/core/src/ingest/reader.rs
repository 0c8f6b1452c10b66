//! Streaming CSV reader with jitter reordering and gap markers.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::types::{GapMarker, StreamItem, TelemetryRecord};
use crate::Scalar;

use super::IngestError;

pub const EXPECTED_HEADER: &str = "timestamp,voltage_v,current_a,power_w,temperature_c";

/// Reader knobs. Defaults: gaps longer than 5 s are marked, rows out of
/// order by at most 2 s are re-sequenced, anything later is rejected.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub gap_threshold_s: i64,
    pub jitter_window_s: i64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            gap_threshold_s: 5,
            jitter_window_s: 2,
        }
    }
}

/// Timestamp encoding of a file, detected from its first data row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestampFormat {
    EpochSeconds,
    Rfc3339,
}

/// Counters accumulated while streaming a file.
#[derive(Debug, Clone, Default)]
pub struct StreamStats {
    pub rows_read: u64,
    pub records_emitted: u64,
    pub malformed_rows: u64,
    /// Line numbers of the first few malformed rows, for diagnostics.
    pub malformed_lines: Vec<u64>,
    pub reordered_rows: u64,
    pub rejected_non_monotonic: u64,
    pub gaps: u64,
    /// Σ|power - voltage*current| over emitted records; exposed as a
    /// consistency metric, never acted on.
    pub power_mismatch_sum_w: Scalar,
}

impl StreamStats {
    /// Mean |P - V·I| over emitted records, in watts.
    pub fn power_consistency_w(&self) -> Scalar {
        if self.records_emitted == 0 {
            0.0
        } else {
            self.power_mismatch_sum_w / self.records_emitted as Scalar
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
struct Pending {
    timestamp: i64,
    seq: u64,
    bits: [u64; 4], // voltage, current, power, temperature as f64 bits
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.timestamp, self.seq).cmp(&(other.timestamp, other.seq))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Pending {
    fn record(&self) -> TelemetryRecord {
        TelemetryRecord {
            timestamp: self.timestamp,
            voltage: f64::from_bits(self.bits[0]),
            current: f64::from_bits(self.bits[1]),
            power: f64::from_bits(self.bits[2]),
            temperature: f64::from_bits(self.bits[3]),
        }
    }
}

/// Streaming telemetry source over any buffered reader. Single pass, holds
/// only the jitter-window reorder buffer in memory.
pub struct CsvStream<R: Read> {
    reader: csv::Reader<R>,
    row: csv::ByteRecord,
    opts: IngestOptions,
    format: Option<TimestampFormat>,
    heap: BinaryHeap<Reverse<Pending>>,
    out: VecDeque<StreamItem>,
    stats: StreamStats,
    max_ts: i64,
    last_emitted: Option<i64>,
    seq: u64,
    line: u64,
    done: bool,
    fatal: bool,
}

/// Open a telemetry CSV file and validate its header.
pub fn read_stream(
    path: &Path,
    opts: &IngestOptions,
) -> Result<CsvStream<BufReader<File>>, IngestError> {
    let file = File::open(path)?;
    CsvStream::from_reader(BufReader::with_capacity(1 << 20, file), opts.clone())
}

impl<R: Read> CsvStream<R> {
    /// Build a stream from any reader; validates the header eagerly.
    pub fn from_reader(reader: R, opts: IngestOptions) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.byte_headers()?.clone();
        let found = header
            .iter()
            .map(|f| String::from_utf8_lossy(f).trim().to_string())
            .collect::<Vec<_>>()
            .join(",");
        if found != EXPECTED_HEADER {
            return Err(IngestError::BadHeader {
                expected: EXPECTED_HEADER.to_string(),
                found,
            });
        }
        Ok(Self {
            reader: rdr,
            row: csv::ByteRecord::new(),
            opts,
            format: None,
            heap: BinaryHeap::new(),
            out: VecDeque::new(),
            stats: StreamStats::default(),
            max_ts: i64::MIN,
            last_emitted: None,
            seq: 0,
            line: 1,
            done: false,
            fatal: false,
        })
    }

    pub fn stats(&self) -> &StreamStats {
        &self.stats
    }

    pub fn timestamp_format(&self) -> Option<TimestampFormat> {
        self.format
    }

    fn parse_timestamp(&mut self, raw: &[u8]) -> Option<i64> {
        let s = std::str::from_utf8(raw).ok()?.trim();
        match self.format {
            Some(TimestampFormat::EpochSeconds) => s.parse::<i64>().ok(),
            Some(TimestampFormat::Rfc3339) => parse_rfc3339(s),
            None => {
                if let Ok(v) = s.parse::<i64>() {
                    self.format = Some(TimestampFormat::EpochSeconds);
                    Some(v)
                } else if let Some(v) = parse_rfc3339(s) {
                    self.format = Some(TimestampFormat::Rfc3339);
                    Some(v)
                } else {
                    None
                }
            }
        }
    }

    fn parse_row(&mut self) -> Option<Pending> {
        if self.row.len() != 5 {
            return None;
        }
        let ts = {
            let raw = self.row.get(0)?.to_vec();
            self.parse_timestamp(&raw)?
        };
        let mut vals = [0.0f64; 4];
        for (i, v) in vals.iter_mut().enumerate() {
            let field = std::str::from_utf8(self.row.get(i + 1)?).ok()?.trim();
            *v = field.parse::<f64>().ok()?;
            if !v.is_finite() {
                return None;
            }
        }
        // physical validity: positive voltage, plausible housing temperature
        if vals[0] <= 0.0 || !(-40.0..=80.0).contains(&vals[3]) {
            return None;
        }
        self.seq += 1;
        Some(Pending {
            timestamp: ts,
            seq: self.seq,
            bits: [
                vals[0].to_bits(),
                vals[1].to_bits(),
                vals[2].to_bits(),
                vals[3].to_bits(),
            ],
        })
    }

    fn mark_malformed(&mut self) {
        self.stats.malformed_rows += 1;
        if self.stats.malformed_lines.len() < 32 {
            self.stats.malformed_lines.push(self.line);
        }
    }

    fn reject_non_monotonic(&mut self) -> bool {
        self.stats.rejected_non_monotonic += 1;
        self.stats.rejected_non_monotonic >= 20
            && self.stats.rejected_non_monotonic as f64 > 0.001 * self.stats.rows_read as f64
    }

    fn emit(&mut self, pending: Pending) -> bool {
        if let Some(last) = self.last_emitted {
            if pending.timestamp <= last {
                return self.reject_non_monotonic();
            }
            if pending.timestamp - last > self.opts.gap_threshold_s {
                self.stats.gaps += 1;
                self.out.push_back(StreamItem::Gap(GapMarker {
                    before: last,
                    after: pending.timestamp,
                }));
            }
        }
        self.last_emitted = Some(pending.timestamp);
        let rec = pending.record();
        self.stats.records_emitted += 1;
        self.stats.power_mismatch_sum_w += (rec.power - rec.voltage * rec.current).abs();
        self.out.push_back(StreamItem::Record(rec));
        false
    }

    /// Pop every buffered row that can no longer be displaced by future
    /// input (timestamp at or below `horizon`).
    fn drain_heap(&mut self, horizon: i64) -> bool {
        while let Some(Reverse(top)) = self.heap.peek() {
            if top.timestamp > horizon {
                break;
            }
            let p = self.heap.pop().unwrap().0;
            if self.emit(p) {
                return true;
            }
        }
        false
    }

    fn abort(&mut self) -> IngestError {
        self.done = true;
        self.fatal = true;
        IngestError::NonMonotonicTimestamp {
            rejected: self.stats.rejected_non_monotonic,
            total: self.stats.rows_read,
        }
    }
}

impl<R: Read> Iterator for CsvStream<R> {
    type Item = Result<StreamItem, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(item) = self.out.pop_front() {
                return Some(Ok(item));
            }
            if self.done {
                return None;
            }
            match self.reader.read_byte_record(&mut self.row) {
                Err(e) => {
                    if e.is_io_error() {
                        self.done = true;
                        return Some(Err(e.into()));
                    }
                    self.line += 1;
                    self.stats.rows_read += 1;
                    self.mark_malformed();
                }
                Ok(false) => {
                    // EOF: flush the reorder buffer, then run the final
                    // non-monotonic fraction check.
                    self.done = true;
                    if self.drain_heap(i64::MAX) {
                        return Some(Err(self.abort()));
                    }
                    let frac_bad = self.stats.rejected_non_monotonic as f64
                        > 0.001 * self.stats.rows_read as f64;
                    if self.stats.rejected_non_monotonic > 0 && frac_bad {
                        return Some(Err(self.abort()));
                    }
                }
                Ok(true) => {
                    self.line += 1;
                    self.stats.rows_read += 1;
                    match self.parse_row() {
                        None => self.mark_malformed(),
                        Some(p) => {
                            if p.timestamp < self.max_ts.saturating_sub(self.opts.jitter_window_s)
                                || self
                                    .last_emitted
                                    .is_some_and(|last| p.timestamp <= last)
                            {
                                if self.reject_non_monotonic() {
                                    return Some(Err(self.abort()));
                                }
                                continue;
                            }
                            if p.timestamp < self.max_ts {
                                self.stats.reordered_rows += 1;
                            }
                            self.max_ts = self.max_ts.max(p.timestamp);
                            self.heap.push(Reverse(p));
                            let horizon = self.max_ts.saturating_sub(self.opts.jitter_window_s);
                            if self.drain_heap(horizon) {
                                return Some(Err(self.abort()));
                            }
                        }
                    }
                }
            }
        }
    }
}

fn parse_rfc3339(s: &str) -> Option<i64> {
    chrono::DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.timestamp())
}

/// First data-row timestamp of a telemetry file, used to order multi-file
/// input before chaining.
pub fn peek_first_timestamp(path: &Path) -> Result<Option<i64>, IngestError> {
    let mut stream = read_stream(path, &IngestOptions::default())?;
    for item in &mut stream {
        if let StreamItem::Record(rec) = item? {
            return Ok(Some(rec.timestamp));
        }
    }
    Ok(None)
}

/// Several files concatenated in timestamp order. Gap marking and
/// monotonicity are enforced across file boundaries; rows that step
/// backwards at a boundary are dropped and counted separately.
pub struct ChainedStream<R: Read> {
    streams: VecDeque<CsvStream<R>>,
    opts: IngestOptions,
    last_emitted: Option<i64>,
    pending: Option<StreamItem>,
    at_boundary: bool,
    pub boundary_rejects: u64,
    stats: StreamStats,
}

impl<R: Read> ChainedStream<R> {
    pub fn new(streams: Vec<CsvStream<R>>, opts: IngestOptions) -> Self {
        Self {
            streams: streams.into(),
            opts,
            last_emitted: None,
            pending: None,
            at_boundary: false,
            boundary_rejects: 0,
            stats: StreamStats::default(),
        }
    }

    /// Counters summed over all exhausted files plus the active one.
    pub fn stats(&self) -> StreamStats {
        let mut s = self.stats.clone();
        if let Some(front) = self.streams.front() {
            merge_stats(&mut s, front.stats());
        }
        s
    }
}

fn merge_stats(into: &mut StreamStats, from: &StreamStats) {
    into.rows_read += from.rows_read;
    into.records_emitted += from.records_emitted;
    into.malformed_rows += from.malformed_rows;
    into.reordered_rows += from.reordered_rows;
    into.rejected_non_monotonic += from.rejected_non_monotonic;
    into.gaps += from.gaps;
    into.power_mismatch_sum_w += from.power_mismatch_sum_w;
}

impl<R: Read> Iterator for ChainedStream<R> {
    type Item = Result<StreamItem, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(item) = self.pending.take() {
                return Some(Ok(item));
            }
            let stream = self.streams.front_mut()?;
            match stream.next() {
                Some(Ok(StreamItem::Record(rec))) => {
                    if self.at_boundary {
                        if let Some(last) = self.last_emitted {
                            if rec.timestamp <= last {
                                self.boundary_rejects += 1;
                                continue;
                            }
                            self.at_boundary = false;
                            if rec.timestamp - last > self.opts.gap_threshold_s {
                                self.last_emitted = Some(rec.timestamp);
                                self.pending = Some(StreamItem::Record(rec));
                                self.stats.gaps += 1;
                                return Some(Ok(StreamItem::Gap(GapMarker {
                                    before: last,
                                    after: rec.timestamp,
                                })));
                            }
                        } else {
                            self.at_boundary = false;
                        }
                    }
                    self.last_emitted = Some(rec.timestamp);
                    return Some(Ok(StreamItem::Record(rec)));
                }
                Some(Ok(StreamItem::Gap(g))) => {
                    self.last_emitted = Some(g.after);
                    return Some(Ok(StreamItem::Gap(g)));
                }
                Some(Err(e)) => return Some(Err(e)),
                None => {
                    let finished = self.streams.pop_front().unwrap();
                    merge_stats(&mut self.stats, finished.stats());
                    self.at_boundary = true;
                }
            }
        }
    }
}
