use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::IngestError;

/// One (half-)hourly load reading in local civil time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyLoadRecord {
    pub country: String,
    pub timestamp: NaiveDateTime,
    /// Megawatts; `None` when the source marks the value missing.
    pub load: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    AllHours,
    /// Hours in [08:00, 18:00).
    PeakHours,
}

/// Mean load of one day; `None` when more than 20% of the expected records
/// are missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyLoad {
    pub date: NaiveDate,
    pub mean_load: Option<f64>,
}

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";
const MAX_MISSING_FRACTION: f64 = 0.20;

pub(crate) fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

pub(crate) fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| IngestError::Parse { line: 1, message: format!("missing column `{name}`") })
}

pub(crate) fn is_missing_token(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "N/A" | "na" | "nan" | "NaN" | "-")
}

/// Parse a delimited load file with `timestamp` and `load_mw` columns.
///
/// Records come back sorted by timestamp at native resolution (hourly,
/// half-hourly, ...).
pub fn parse_load_file(bytes: &[u8], country: &str) -> Result<Vec<HourlyLoadRecord>, IngestError> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| IngestError::Parse { line: 0, message: format!("not UTF-8: {e}") })?;
    if text.trim().is_empty() {
        return Err(IngestError::Empty("load file has no content".into()));
    }
    let mut reader =
        csv::ReaderBuilder::new().delimiter(detect_delimiter(text)).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| IngestError::Parse { line: 1, message: e.to_string() })?.clone();
    let ts_col = column_index(&headers, "timestamp")?;
    let load_col = column_index(&headers, "load_mw")?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| IngestError::Parse { line, message: e.to_string() })?;
        let ts_raw =
            row.get(ts_col).ok_or_else(|| IngestError::Parse { line, message: "missing timestamp field".into() })?;
        let timestamp = NaiveDateTime::parse_from_str(ts_raw, TIMESTAMP_FORMAT)
            .map_err(|e| IngestError::Parse { line, message: format!("bad timestamp `{ts_raw}`: {e}") })?;
        let load_raw = row.get(load_col).unwrap_or("");
        let load = if is_missing_token(load_raw) {
            None
        } else {
            let v: f64 = load_raw
                .parse()
                .map_err(|_| IngestError::Parse { line, message: format!("bad load value `{load_raw}`") })?;
            if !v.is_finite() || v < 0.0 {
                return Err(IngestError::Parse { line, message: format!("load must be >= 0, got {v}") });
            }
            Some(v)
        };
        records.push(HourlyLoadRecord { country: country.to_string(), timestamp, load });
    }
    if records.is_empty() {
        return Err(IngestError::Empty("load file has a header but no rows".into()));
    }
    records.sort_by_key(|r| r.timestamp);
    if let Some(w) = records.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
        return Err(IngestError::DuplicateTimestamp(w[0].timestamp.format(TIMESTAMP_FORMAT).to_string()));
    }
    Ok(records)
}

/// Native record spacing in minutes: the most common gap between
/// consecutive timestamps within a day (60 when undeterminable).
fn resolution_minutes(records: &[HourlyLoadRecord]) -> i64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for w in records.windows(2) {
        if w[0].timestamp.date() == w[1].timestamp.date() {
            let gap = (w[1].timestamp - w[0].timestamp).num_minutes();
            if gap > 0 {
                *counts.entry(gap).or_default() += 1;
            }
        }
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(gap, _)| gap).unwrap_or(60).clamp(1, 60)
}

fn in_peak(ts: &NaiveDateTime) -> bool {
    (8..18).contains(&ts.hour())
}

/// Daily mean load over all hours or the 08:00–18:00 peak window.
pub fn aggregate_daily(records: &[HourlyLoadRecord], mode: AggregationMode) -> Result<Vec<DailyLoad>, IngestError> {
    if records.is_empty() {
        return Err(IngestError::Empty("no load records to aggregate".into()));
    }
    let res = resolution_minutes(records);
    let window_hours = match mode {
        AggregationMode::AllHours => 24,
        AggregationMode::PeakHours => 10,
    };
    let expected = (window_hours * 60 / res) as f64;

    let mut days: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for r in records {
        let entry = days.entry(r.timestamp.date()).or_insert((0.0, 0));
        if mode == AggregationMode::PeakHours && !in_peak(&r.timestamp) {
            continue;
        }
        if let Some(v) = r.load {
            entry.0 += v;
            entry.1 += 1;
        }
    }
    Ok(days
        .into_iter()
        .map(|(date, (sum, n))| {
            let missing = (expected - n as f64).max(0.0) / expected;
            let mean_load = if n > 0 && missing <= MAX_MISSING_FRACTION { Some(sum / n as f64) } else { None };
            DailyLoad { date, mean_load }
        })
        .collect())
}
