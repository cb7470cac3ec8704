//! Total-return index levels per ticker, with the benchmark under a reserved id.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::types::Ticker;

/// Reserved series id for the benchmark index.
pub const BENCHMARK_ID: &str = "__BENCHMARK__";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarketDataTable {
    series: BTreeMap<Ticker, Vec<(NaiveDate, f64)>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    date: String,
    ticker: String,
    tr_level: String,
}

impl MarketDataTable {
    /// Builds a table from per-ticker series, applying the ingest checks.
    pub fn from_series(series: BTreeMap<Ticker, Vec<(NaiveDate, f64)>>) -> Result<Self, StoreError> {
        for (ticker, points) in &series {
            for (i, (date, level)) in points.iter().enumerate() {
                if !(level.is_finite() && *level > 0.0) {
                    return Err(StoreError::DataValueError { ticker: ticker.to_string(), date: *date, level: *level });
                }
                if i > 0 && points[i - 1].0 >= *date {
                    return Err(StoreError::DataOrderError { ticker: ticker.to_string(), date: *date });
                }
            }
        }
        if !series.contains_key(BENCHMARK_ID) {
            return Err(StoreError::BenchmarkMissing { date: None });
        }
        Ok(Self { series })
    }

    /// Reads `date,ticker,tr_level` CSV. Rows of one ticker must ascend by date.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, StoreError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| StoreError::format(1, e))?.clone();
        let expected = ["date", "ticker", "tr_level"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(StoreError::Format { line: 1, reason: format!("header must be date,ticker,tr_level, got {}", headers.iter().collect::<Vec<_>>().join(",")) });
        }
        let mut series: BTreeMap<Ticker, Vec<(NaiveDate, f64)>> = BTreeMap::new();
        for (i, record) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let row = record.map_err(|e| StoreError::format(line, e))?;
            let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
                .map_err(|e| StoreError::Format { line, reason: format!("bad date {:?}: {e}", row.date) })?;
            let level: f64 = row
                .tr_level
                .parse()
                .map_err(|_| StoreError::Format { line, reason: format!("bad level {:?}", row.tr_level) })?;
            if row.ticker.is_empty() {
                return Err(StoreError::Format { line, reason: "empty ticker".into() });
            }
            if !(level.is_finite() && level > 0.0) {
                return Err(StoreError::DataValueError { ticker: row.ticker, date, level });
            }
            let points = series.entry(Ticker::new(row.ticker.clone())).or_default();
            if points.last().is_some_and(|(d, _)| *d >= date) {
                return Err(StoreError::DataOrderError { ticker: row.ticker, date });
            }
            points.push((date, level));
        }
        Self::from_series(series)
    }

    pub fn ingest_prices(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| StoreError::io(path.as_ref(), e))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StoreError> {
        let mut w = csv::Writer::from_writer(writer);
        for (ticker, points) in &self.series {
            for (date, level) in points {
                w.serialize(Row { date: date.to_string(), ticker: ticker.to_string(), tr_level: format!("{level}") })
                    .map_err(|e| StoreError::format(0, e))?;
            }
        }
        w.flush().map_err(|e| StoreError::Io(e.to_string()))
    }

    /// Constituent tickers, benchmark excluded.
    pub fn tickers(&self) -> impl Iterator<Item = &Ticker> {
        self.series.keys().filter(|t| t.as_str() != BENCHMARK_ID)
    }

    pub fn level(&self, ticker: &str, date: NaiveDate) -> Option<f64> {
        let points = self.series.get(ticker)?;
        points.binary_search_by_key(&date, |(d, _)| *d).ok().map(|i| points[i].1)
    }

    /// `level(last) / level(first) - 1`; both dates must be present.
    pub fn period_return(&self, ticker: &str, first: NaiveDate, last: NaiveDate) -> Result<f64, StoreError> {
        let gap = |date| StoreError::DataGap { ticker: ticker.to_owned(), date };
        let a = self.level(ticker, first).ok_or_else(|| gap(first))?;
        let b = self.level(ticker, last).ok_or_else(|| gap(last))?;
        Ok(b / a - 1.0)
    }

    pub fn benchmark_return(&self, first: NaiveDate, last: NaiveDate) -> Result<f64, StoreError> {
        self.period_return(BENCHMARK_ID, first, last).map_err(|e| match e {
            StoreError::DataGap { date, .. } => StoreError::BenchmarkMissing { date: Some(date) },
            other => other,
        })
    }

    /// Latest date with any data.
    pub fn last_date(&self) -> Option<NaiveDate> {
        self.series.values().filter_map(|p| p.last().map(|(d, _)| *d)).max()
    }

    /// Copy holding only points dated on or before `date`.
    pub fn truncated(&self, date: NaiveDate) -> Self {
        let series = self
            .series
            .iter()
            .map(|(t, p)| (t.clone(), p.iter().copied().filter(|(d, _)| *d <= date).collect()))
            .collect();
        Self { series }
    }
}
