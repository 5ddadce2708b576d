//! CSV sensor exports to and from [`TimeSeriesTable`].

use std::collections::BTreeSet;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use kgforge_core::table::{Column, ColumnData, IndexKind, TableError, TimeSeriesTable};
use serde::{Deserialize, Serialize};

/// Default name of the index column.
pub const DEFAULT_INDEX: &str = "timestamp";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Column holding the time index. `None` numbers the rows 0, 1, ...
    pub index_column: Option<String>,
    /// Columns read as categorical even when every cell parses as a number.
    pub categorical: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            index_column: Some(DEFAULT_INDEX.into()),
            categorical: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("missing header row")]
    NoHeader,
    #[error("no data rows")]
    NoRows,
    #[error("index column `{0}` not found in header")]
    MissingIndex(String),
    #[error("row {row} has {found} fields, header has {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("row {row}: index value `{value}` is neither an integer nor an ISO-8601 timestamp")]
    BadIndex { row: usize, value: String },
    #[error("index mixes integer ticks and timestamps")]
    MixedIndex,
    #[error("categorical override names unknown column `{0}`")]
    UnknownOverride(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Parses an ISO-8601 timestamp to epoch milliseconds. Values without an
/// offset are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp_millis());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp_millis());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc().timestamp_millis())
}

/// Formats epoch milliseconds as RFC 3339 UTC with millisecond precision.
pub fn format_timestamp(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_else(|| ms.to_string())
}

fn parse_number(s: &str) -> Option<f64> {
    // Rust also accepts "inf" and "NaN"; sensor data treats those as tokens.
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads CSV text into a table.
///
/// Empty cells are missing. A column is categorical when any non-empty cell
/// fails to parse as a finite number, or when it is named in
/// `options.categorical`. Rows are sorted by index.
pub fn parse_csv(bytes: &[u8], options: &CsvOptions) -> Result<TimeSeriesTable, CsvError> {
    std::str::from_utf8(bytes).map_err(|_| CsvError::NotUtf8)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CsvError::NoHeader);
    }
    let index_pos = match &options.index_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CsvError::MissingIndex(name.clone()))?,
        ),
        None => None,
    };
    for name in &options.categorical {
        if !header.contains(name) || Some(name) == options.index_column.as_ref() {
            return Err(CsvError::UnknownOverride(name.clone()));
        }
    }

    let mut raw_index = Vec::new();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        if record.len() == 1 && record.get(0) == Some("") && header.len() > 1 {
            continue;
        }
        if record.len() != header.len() {
            return Err(CsvError::Ragged {
                row,
                found: record.len(),
                expected: header.len(),
            });
        }
        if let Some(p) = index_pos {
            raw_index.push((row, record[p].trim().to_string()));
        }
        for (c, field) in record.iter().enumerate() {
            cells[c].push(field.to_string());
        }
    }
    let rows = cells.first().map_or(0, Vec::len);
    if rows == 0 {
        return Err(CsvError::NoRows);
    }

    let (kind, index) = match index_pos {
        None => (IndexKind::Tick, (0..rows as i64).collect()),
        Some(_) => parse_index(&raw_index)?,
    };

    let forced: BTreeSet<&str> = options.categorical.iter().map(String::as_str).collect();
    let mut columns = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if Some(c) == index_pos {
            continue;
        }
        let values = &cells[c];
        let numeric: Option<Vec<Option<f64>>> = if forced.contains(name.as_str()) {
            None
        } else {
            values
                .iter()
                .map(|v| {
                    if v.trim().is_empty() {
                        Some(None)
                    } else {
                        parse_number(v).map(Some)
                    }
                })
                .collect()
        };
        columns.push(match numeric {
            Some(v) => Column::numeric(name.clone(), v),
            None => Column::categorical(
                name.clone(),
                values
                    .iter()
                    .map(|v| (!v.is_empty()).then(|| v.clone()))
                    .collect(),
            ),
        });
    }
    Ok(TimeSeriesTable::from_unsorted("csv", kind, index, columns)?)
}

fn parse_index(raw: &[(usize, String)]) -> Result<(IndexKind, Vec<i64>), CsvError> {
    let ticks: Option<Vec<i64>> = raw.iter().map(|(_, v)| v.parse::<i64>().ok()).collect();
    if let Some(t) = ticks {
        return Ok((IndexKind::Tick, t));
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut saw_integer = false;
    for (row, v) in raw {
        if v.parse::<i64>().is_ok() {
            saw_integer = true;
        }
        match parse_timestamp(v) {
            Some(ms) => out.push(ms),
            None if saw_integer => return Err(CsvError::MixedIndex),
            None => {
                return Err(CsvError::BadIndex {
                    row: *row,
                    value: v.clone(),
                })
            }
        }
    }
    if saw_integer {
        return Err(CsvError::MixedIndex);
    }
    Ok((IndexKind::EpochMillis, out))
}

/// Shortest text that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a table as CSV with the index first, under `index_name`.
///
/// Numbers use the shortest round-trippable form, so numeric tables
/// re-parse bit-exactly.
pub fn write_csv(table: &TimeSeriesTable, index_name: &str) -> Result<String, CsvError> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec![index_name.to_string()];
    header.extend(table.names());
    w.write_record(&header)?;
    for row in 0..table.len() {
        let idx = table.index()[row];
        let mut record = vec![match table.index_kind() {
            IndexKind::Tick => idx.to_string(),
            IndexKind::EpochMillis => format_timestamp(idx),
        }];
        for c in table.columns() {
            record.push(match &c.data {
                ColumnData::Numeric(v) => v[row].map(format_number).unwrap_or_default(),
                ColumnData::Categorical(v) => v[row].clone().unwrap_or_default(),
            });
        }
        w.write_record(&record)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV writer emits UTF-8"))
}
