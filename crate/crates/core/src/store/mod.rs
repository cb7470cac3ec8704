//! Market data, the append-only run ledger, and configuration.

mod config;
mod ledger;
mod market;

use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

pub use config::{Config, ProviderConfig, Thresholds};
pub use ledger::{LedgerEnvelope, LedgerEvent, LedgerState, ReplayOutcome, RunLedger};
pub use market::{MarketDataTable, BENCHMARK_ID};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StoreError {
    #[error("dates for {ticker} not strictly increasing at {date}")]
    DataOrderError { ticker: String, date: NaiveDate },
    #[error("non-positive or non-finite level {level} for {ticker} on {date}")]
    DataValueError { ticker: String, date: NaiveDate, level: f64 },
    #[error("{}", match date { Some(d) => format!("benchmark has no level on {d}"), None => "benchmark series missing".to_owned() })]
    BenchmarkMissing { date: Option<NaiveDate> },
    #[error("market data gap for {ticker} on {date}")]
    DataGap { ticker: String, date: NaiveDate },
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("ledger line {line}: {reason}")]
    LedgerError { line: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl StoreError {
    fn format(line: usize, e: impl std::fmt::Display) -> Self {
        Self::Format { line, reason: e.to_string() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }
}
