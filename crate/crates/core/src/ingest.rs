//! Parsers turning external log shapes into the canonical trace model.
//!
//! Two input formats are supported: the canonical JSONL trace and CSV
//! exports described by a [`ColumnMap`]. Per-line failures are collected as
//! [`RejectedLine`] diagnostics rather than aborting the parse, unless the
//! reject rate exceeds a configurable ceiling.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::trace::{
    CeEvent, CellAddress, DataWidth, DimmId, DimmMeta, ErrorBitmap, TraceEvent, UeEvent,
};
use crate::{Error, Result};

/// Validating decode of the 16-hex-digit wire bitmap, enforcing the DQ
/// width of the target device.
pub fn decode_bitmap(hex: &str, width: DataWidth) -> Result<ErrorBitmap> {
    ErrorBitmap::from_hex_checked(hex, width).map_err(|e| Error::Data(e.to_string()))
}

/// A rejected input line with its position and the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    /// 1-based line number in the source file.
    pub line: usize,
    /// Offending column name, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    pub reason: String,
}

/// Outcome of a tolerant parse: accepted events plus line diagnostics.
#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub events: Vec<TraceEvent>,
    pub rejects: Vec<RejectedLine>,
    pub total_lines: usize,
}

impl ParseOutcome {
    fn check_ceiling(self, ceiling: f64) -> Result<ParseOutcome> {
        if self.total_lines > 0 {
            let rate = self.rejects.len() as f64 / self.total_lines as f64;
            if rate > ceiling {
                return Err(Error::RejectCeiling {
                    rate,
                    ceiling,
                    rejected: self.rejects.len(),
                    total: self.total_lines,
                });
            }
        }
        Ok(self)
    }
}

/// Read a canonical JSONL trace. Blank lines are skipped; lines that fail
/// to parse are rejected with their line number.
pub fn read_jsonl_trace<R: Read>(reader: R, reject_ceiling: f64) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.total_lines += 1;
        match serde_json::from_str::<TraceEvent>(&line) {
            Ok(event) => out.events.push(event),
            Err(e) => out.rejects.push(RejectedLine {
                line: idx + 1,
                column: None,
                reason: e.to_string(),
            }),
        }
    }
    out.check_ceiling(reject_ceiling)
}

pub fn read_jsonl_trace_file(path: &Path, reject_ceiling: f64) -> Result<ParseOutcome> {
    read_jsonl_trace(std::fs::File::open(path)?, reject_ceiling)
}

/// Write events as canonical JSONL, one event per line.
pub fn write_jsonl_trace<W: Write>(mut writer: W, events: &[TraceEvent]) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_meta_file(path: &Path) -> Result<Vec<DimmMeta>> {
    let data = std::fs::read(path)?;
    Ok(serde_json::from_slice(&data)?)
}

pub fn write_meta_file(path: &Path, metas: &[DimmMeta]) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(metas)?;
    buf.push(b'\n');
    Ok(std::fs::write(path, buf)?)
}

/// Maps canonical fields to CSV column names.
///
/// `kind` is optional; when absent every row is treated as a CE. UE rows
/// may omit the address columns. `count` is optional and defaults to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub server_id: String,
    pub socket: String,
    pub channel: String,
    pub slot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub rank: String,
    pub device: String,
    pub bank_group: String,
    pub bank: String,
    pub row: String,
    pub column: String,
    pub bitmap: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<String>,
}

impl ColumnMap {
    pub fn from_json_file(path: &Path) -> Result<ColumnMap> {
        let data = std::fs::read(path)?;
        Ok(serde_json::from_slice(&data)?)
    }
}

struct Columns<'a> {
    map: &'a ColumnMap,
    headers: csv::StringRecord,
}

impl<'a> Columns<'a> {
    fn index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn get<'r>(
        &self,
        record: &'r csv::StringRecord,
        name: &str,
    ) -> std::result::Result<&'r str, RejectReason> {
        let idx = self
            .index(name)
            .ok_or_else(|| RejectReason::new(name, "column missing from header"))?;
        record
            .get(idx)
            .ok_or_else(|| RejectReason::new(name, "row shorter than header"))
    }

    fn parse<T: std::str::FromStr>(
        &self,
        record: &csv::StringRecord,
        name: &str,
    ) -> std::result::Result<T, RejectReason> {
        let raw = self.get(record, name)?;
        raw.trim()
            .parse::<T>()
            .map_err(|_| RejectReason::new(name, format!("cannot parse {raw:?}")))
    }
}

struct RejectReason {
    column: String,
    reason: String,
}

impl RejectReason {
    fn new(column: &str, reason: impl Into<String>) -> Self {
        RejectReason {
            column: column.into(),
            reason: reason.into(),
        }
    }
}

/// Parse a CSV export into canonical events.
///
/// `width` drives bitmap width validation at the parse boundary; events are
/// still re-checked against per-DIMM metadata during trace validation.
pub fn parse_csv_trace<R: Read>(
    reader: R,
    map: &ColumnMap,
    width: DataWidth,
    reject_ceiling: f64,
) -> Result<ParseOutcome> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let columns = Columns { map, headers };
    let mut out = ParseOutcome::default();

    for (idx, record) in csv_reader.records().enumerate() {
        out.total_lines += 1;
        // Header occupies line 1.
        let line = idx + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(RejectedLine {
                    line,
                    column: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match parse_record(&columns, &record, width) {
            Ok(event) => out.events.push(event),
            Err(r) => out.rejects.push(RejectedLine {
                line,
                column: Some(r.column),
                reason: r.reason,
            }),
        }
    }
    out.check_ceiling(reject_ceiling)
}

fn parse_record(
    columns: &Columns<'_>,
    record: &csv::StringRecord,
    width: DataWidth,
) -> std::result::Result<TraceEvent, RejectReason> {
    let map = columns.map;
    let ts_ms: i64 = columns.parse(record, &map.timestamp)?;
    let dimm = DimmId {
        server_id: columns.get(record, &map.server_id)?.trim().to_string(),
        socket: columns.parse(record, &map.socket)?,
        channel: columns.parse(record, &map.channel)?,
        slot: columns.parse(record, &map.slot)?,
    };
    let kind = match &map.kind {
        Some(col) => columns.get(record, col)?.trim().to_ascii_lowercase(),
        None => "ce".to_string(),
    };
    match kind.as_str() {
        "ce" => {
            let cell = parse_cell(columns, record)?;
            let raw = columns.get(record, &map.bitmap)?.trim();
            let bitmap = ErrorBitmap::from_hex_checked(raw, width)
                .map_err(|e| RejectReason::new(&map.bitmap, e.to_string()))?;
            if bitmap.is_empty() {
                return Err(RejectReason::new(&map.bitmap, "no set bits in CE bitmap"));
            }
            let count = match &map.count {
                Some(col) => columns.parse(record, col)?,
                None => 1,
            };
            if count == 0 {
                return Err(RejectReason::new(
                    map.count.as_deref().unwrap_or("count"),
                    "count must be >= 1",
                ));
            }
            Ok(TraceEvent::Ce(CeEvent {
                ts_ms,
                dimm,
                cell,
                bitmap,
                count,
            }))
        }
        "ue" => {
            // Address columns are optional for UEs; take them only when the
            // whole tuple parses.
            let cell = parse_cell(columns, record).ok();
            Ok(TraceEvent::Ue(UeEvent {
                ts_ms,
                dimm,
                cell,
                sudden: false,
            }))
        }
        other => Err(RejectReason::new(
            map.kind.as_deref().unwrap_or("kind"),
            format!("unknown event kind {other:?}"),
        )),
    }
}

fn parse_cell(
    columns: &Columns<'_>,
    record: &csv::StringRecord,
) -> std::result::Result<CellAddress, RejectReason> {
    let map = columns.map;
    Ok(CellAddress {
        rank: columns.parse(record, &map.rank)?,
        device: columns.parse(record, &map.device)?,
        bank_group: columns.parse(record, &map.bank_group)?,
        bank: columns.parse(record, &map.bank)?,
        row: columns.parse(record, &map.row)?,
        column: columns.parse(record, &map.column)?,
    })
}
