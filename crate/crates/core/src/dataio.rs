//! OHLCV CSV ingestion, date splitting and week blocking.

use std::collections::HashSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::HORIZON;

pub const CSV_HEADER: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];

const DATE_FORMAT: &str = "%Y-%m-%d";

/// One trading day's raw quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcvRecord {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
}

impl OhlcvRecord {
    /// Checks the record invariants: finite positive prices and `low <= high`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("{name} must be finite and positive, got {v}"));
            }
        }
        if self.low > self.high {
            return Err(format!("low {} exceeds high {}", self.low, self.high));
        }
        Ok(())
    }

    /// Intraday range, `high - low`.
    pub fn range(&self) -> f64 {
        self.high - self.low
    }
}

/// Five consecutive trading-day records, the unit of multi-step forecasting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekBlock {
    pub index: usize,
    pub records: [OhlcvRecord; HORIZON],
}

impl WeekBlock {
    pub fn opens(&self) -> [f64; HORIZON] {
        self.records.map(|r| r.open)
    }
}

/// Result of [`block_into_weeks`]: the blocks plus the trailing records dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocking {
    pub weeks: Vec<WeekBlock>,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<OhlcvRecord>,
    pub test: Vec<OhlcvRecord>,
    pub train_weeks: Vec<WeekBlock>,
    pub test_weeks: Vec<WeekBlock>,
}

impl DatasetSplit {
    /// Builds a split from already partitioned records, truncating each side
    /// to a whole number of week blocks.
    pub fn from_partitions(train: Vec<OhlcvRecord>, test: Vec<OhlcvRecord>) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::Config(format!(
                "empty partition: {} train records, {} test records",
                train.len(),
                test.len()
            )));
        }
        if let (Some(last), Some(first)) = (train.last(), test.first()) {
            if last.date >= first.date {
                return Err(Error::Config(format!(
                    "train partition ends {} which is not before test start {}",
                    last.date, first.date
                )));
            }
        }
        let train_blocks = block_into_weeks(&train);
        let test_blocks = block_into_weeks(&test);
        let mut train = train;
        let mut test = test;
        train.truncate(train_blocks.weeks.len() * HORIZON);
        test.truncate(test_blocks.weeks.len() * HORIZON);
        Ok(DatasetSplit {
            train,
            test,
            train_weeks: train_blocks.weeks,
            test_weeks: test_blocks.weeks,
        })
    }

    pub fn test_mean_open(&self) -> f64 {
        self.test.iter().map(|r| r.open).sum::<f64>() / self.test.len() as f64
    }
}

/// Ingestion counters, emitted as JSON by the `ingest` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub rows_dropped_null: usize,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub records: Vec<OhlcvRecord>,
    pub summary: IngestSummary,
}

fn is_null(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f == "null"
}

fn parse_price(field: &str, name: &str, line: u64) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Row {
        line,
        message: format!("cannot parse {name} `{field}`"),
    })
}

fn parse_volume(field: &str, line: u64) -> Result<u64> {
    let f = field.trim();
    if let Ok(v) = f.parse::<u64>() {
        return Ok(v);
    }
    // Some exports print integral volumes as floats, e.g. `123400.0`.
    match f.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 => Ok(v as u64),
        _ => Err(Error::Row {
            line,
            message: format!("cannot parse volume `{field}` as a non-negative count"),
        }),
    }
}

/// Parses a Yahoo-style daily CSV.
///
/// Rows carrying `null` or empty numeric fields are dropped and counted.
/// `Adj Close` is parsed and discarded. The result is sorted by date.
pub fn parse_ohlcv_csv(text: &str) -> Result<Parsed> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?;
    let found: Vec<&str> = header.iter().map(|h| h.trim_start_matches('\u{feff}')).collect();
    if found != CSV_HEADER {
        return Err(Error::Schema(format!(
            "expected header `{}`, found `{}`",
            CSV_HEADER.join(","),
            found.join(",")
        )));
    }

    let mut records = Vec::new();
    let mut rows_read = 0;
    let mut dropped = 0;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row { line, message: e.to_string() }
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        rows_read += 1;
        if row.len() != CSV_HEADER.len() {
            return Err(Error::Row {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), row.len()),
            });
        }
        if row.iter().skip(1).any(is_null) {
            dropped += 1;
            continue;
        }
        let date = NaiveDate::parse_from_str(row[0].trim(), DATE_FORMAT).map_err(|_| Error::Row {
            line,
            message: format!("cannot parse date `{}`", &row[0]),
        })?;
        let record = OhlcvRecord {
            date,
            open: parse_price(&row[1], "open", line)?,
            high: parse_price(&row[2], "high", line)?,
            low: parse_price(&row[3], "low", line)?,
            close: parse_price(&row[4], "close", line)?,
            volume: parse_volume(&row[6], line)?,
        };
        parse_price(&row[5], "adj close", line)?;
        record.validate().map_err(|message| Error::Row { line, message })?;
        records.push(record);
    }

    records.sort_by_key(|r| r.date);
    let mut seen = HashSet::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.date) {
            return Err(Error::DuplicateDate(r.date));
        }
    }

    let summary = IngestSummary {
        rows_read,
        rows_dropped_null: dropped,
        records: records.len(),
    };
    Ok(Parsed { records, summary })
}

/// Serializes records in the ingestion format. `Adj Close` repeats `Close`.
pub fn write_ohlcv_csv(records: &[OhlcvRecord]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.date.format(DATE_FORMAT),
            r.open,
            r.high,
            r.low,
            r.close,
            r.close,
            r.volume
        ));
    }
    out
}

/// Count-based blocking: consecutive runs of five records starting at
/// record 0. The trailing `len % 5` records are dropped.
pub fn block_into_weeks(records: &[OhlcvRecord]) -> Blocking {
    let weeks = records
        .chunks_exact(HORIZON)
        .enumerate()
        .map(|(index, chunk)| WeekBlock {
            index,
            records: chunk.try_into().expect("chunks_exact yields full chunks"),
        })
        .collect();
    Blocking {
        weeks,
        dropped: records.len() % HORIZON,
    }
}

/// Default `(train_start, train_end, test_start, test_end)`: four years of
/// daily history followed by the next nineteen months.
pub fn default_boundaries() -> [NaiveDate; 4] {
    let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
    [d(2014, 12, 29), d(2018, 12, 28), d(2018, 12, 31), d(2020, 7, 31)]
}

/// Partitions sorted records into inclusive train and test date ranges.
pub fn split_by_date(
    records: &[OhlcvRecord],
    train_start: NaiveDate,
    train_end: NaiveDate,
    test_start: NaiveDate,
    test_end: NaiveDate,
) -> Result<DatasetSplit> {
    if train_start > train_end || test_start > test_end {
        return Err(Error::Config("date range start after its end".into()));
    }
    if train_end >= test_start {
        return Err(Error::Config(format!(
            "train end {train_end} must precede test start {test_start}"
        )));
    }
    let in_range = |d: NaiveDate, a: NaiveDate, b: NaiveDate| d >= a && d <= b;
    let train: Vec<_> = records
        .iter()
        .filter(|r| in_range(r.date, train_start, train_end))
        .copied()
        .collect();
    let test: Vec<_> = records
        .iter()
        .filter(|r| in_range(r.date, test_start, test_end))
        .copied()
        .collect();
    DatasetSplit::from_partitions(train, test)
}
