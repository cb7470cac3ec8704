//! Monthly ranked long-short portfolios against the benchmark.
//!
//! Each cycle goes long the top-k and short the bottom-k firms by score,
//! equally weighted, opened on the first trading day and closed on the
//! last. Returns come from total-return index levels, so dividends are
//! already included. No costs or borrow fees are modelled.

mod calendar;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calendar::{read_calendar, read_calendar_from, write_calendar, MonthlyCycle};

use crate::store::{MarketDataTable, StoreError};
use crate::types::{CycleId, ProviderId, SignalStrategy, Ticker};

/// Positions per leg in the paper's strategy.
pub const DEFAULT_POSITIONS: usize = 5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BacktestError {
    #[error("need at least {needed} scored firms, have {available}")]
    InsufficientBreadth { needed: usize, available: usize },
    #[error("no return for position {ticker}")]
    MissingReturn { ticker: Ticker },
    #[error("signal for {cycle} dated {signal_date}, after the first trading day {first_day}")]
    LookAheadViolation { cycle: CycleId, signal_date: NaiveDate, first_day: NaiveDate },
    #[error("market data gap for {ticker} on {date}")]
    DataGap { ticker: String, date: NaiveDate },
    #[error("no signal for cycle {0}")]
    MissingSignal(CycleId),
    #[error("invalid signal for {cycle}: {reason}")]
    InvalidSignal { cycle: CycleId, reason: String },
    #[error("invalid cycle calendar: {0}")]
    Calendar(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn from_store(e: StoreError) -> BacktestError {
    match e {
        StoreError::DataGap { ticker, date } => BacktestError::DataGap { ticker, date },
        StoreError::BenchmarkMissing { date: Some(date) } => {
            BacktestError::DataGap { ticker: crate::store::BENCHMARK_ID.to_owned(), date }
        }
        other => BacktestError::Store(other),
    }
}

/// Scores one provider and strategy produced for one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSet {
    pub cycle_id: CycleId,
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
    pub scores: BTreeMap<Ticker, f64>,
    pub signal_date: NaiveDate,
}

impl SignalSet {
    pub fn check(&self) -> Result<(), BacktestError> {
        for (ticker, s) in &self.scores {
            if !(s.is_finite() && (0.0..=1.0).contains(s)) {
                return Err(BacktestError::InvalidSignal {
                    cycle: self.cycle_id.clone(),
                    reason: format!("score {s} for {ticker} outside [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub long: Vec<Ticker>,
    pub short: Vec<Ticker>,
}

/// Top-k and bottom-k by score; ties resolve by ascending ticker.
pub fn rank_and_select(signals: &SignalSet, k: usize) -> Result<Selection, BacktestError> {
    let needed = 2 * k;
    if k == 0 || signals.scores.len() < needed {
        return Err(BacktestError::InsufficientBreadth { needed: needed.max(2), available: signals.scores.len() });
    }
    let mut by_desc: Vec<(&Ticker, f64)> = signals.scores.iter().map(|(t, s)| (t, *s)).collect();
    by_desc.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let long: Vec<Ticker> = by_desc[..k].iter().map(|(t, _)| (*t).clone()).collect();

    // a firm tied across both boundaries stays in the long leg
    let mut by_asc = by_desc;
    by_asc.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let short: Vec<Ticker> = by_asc.iter().filter(|(t, _)| !long.contains(*t)).take(k).map(|(t, _)| (*t).clone()).collect();
    debug_assert!(long.iter().all(|t| !short.contains(t)));
    Ok(Selection { long, short })
}

fn leg_mean(leg: &[Ticker], returns: &BTreeMap<Ticker, f64>) -> Result<f64, BacktestError> {
    let mut sorted: Vec<&Ticker> = leg.iter().collect();
    sorted.sort();
    let mut sum = 0.0;
    for t in &sorted {
        sum += returns.get(*t).ok_or_else(|| BacktestError::MissingReturn { ticker: (*t).clone() })?;
    }
    Ok(sum / sorted.len() as f64)
}

/// Equal-weight long leg minus equal-weight short leg.
pub fn portfolio_return(long: &[Ticker], short: &[Ticker], returns: &BTreeMap<Ticker, f64>) -> Result<f64, BacktestError> {
    if long.is_empty() || short.is_empty() {
        return Err(BacktestError::InsufficientBreadth { needed: 2, available: long.len() + short.len() });
    }
    Ok(leg_mean(long, returns)? - leg_mean(short, returns)?)
}

/// Outcome of one cycle for one provider and strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_id: CycleId,
    pub portfolio_return: f64,
    pub benchmark_return: f64,
    pub long: Vec<Ticker>,
    pub short: Vec<Ticker>,
    /// Scores the selection was made from.
    pub scores: BTreeMap<Ticker, f64>,
    /// Holding-period total return of every scored firm.
    pub realized: BTreeMap<Ticker, f64>,
}

impl CycleRecord {
    pub fn excess(&self) -> f64 {
        self.portfolio_return - self.benchmark_return
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
    pub records: Vec<CycleRecord>,
}

impl ReturnSeries {
    pub fn alphas(&self) -> Vec<f64> {
        self.records.iter().map(CycleRecord::excess).collect()
    }

    /// Records restricted to the given cycles, order preserved.
    pub fn restricted_to(&self, cycles: &BTreeSet<&CycleId>) -> Self {
        Self {
            provider: self.provider.clone(),
            strategy: self.strategy,
            records: self.records.iter().filter(|r| cycles.contains(&r.cycle_id)).cloned().collect(),
        }
    }
}

/// One cycle: select, hold from first to last trading day, compare.
pub fn run_cycle(signals: &SignalSet, market: &MarketDataTable, cycle: &MonthlyCycle, k: usize) -> Result<CycleRecord, BacktestError> {
    signals.check()?;
    if signals.signal_date > cycle.first_day {
        return Err(BacktestError::LookAheadViolation {
            cycle: cycle.id.clone(),
            signal_date: signals.signal_date,
            first_day: cycle.first_day,
        });
    }
    let selection = rank_and_select(signals, k)?;
    let mut realized = BTreeMap::new();
    for ticker in signals.scores.keys() {
        let r = market.period_return(ticker.as_str(), cycle.first_day, cycle.last_day).map_err(from_store)?;
        realized.insert(ticker.clone(), r);
    }
    let portfolio = portfolio_return(&selection.long, &selection.short, &realized)?;
    let benchmark = market.benchmark_return(cycle.first_day, cycle.last_day).map_err(from_store)?;
    Ok(CycleRecord {
        cycle_id: cycle.id.clone(),
        portfolio_return: portfolio,
        benchmark_return: benchmark,
        long: selection.long,
        short: selection.short,
        scores: signals.scores.clone(),
        realized,
    })
}

/// Every calendar cycle in order, each needing a signal from `history`.
///
/// `history` must hold a single provider and strategy.
pub fn run_cycles(history: &[SignalSet], market: &MarketDataTable, calendar: &[MonthlyCycle], k: usize) -> Result<ReturnSeries, BacktestError> {
    let first = history.first().ok_or_else(|| match calendar.first() {
        Some(c) => BacktestError::MissingSignal(c.id.clone()),
        None => BacktestError::Calendar("empty calendar".into()),
    })?;
    if let Some(other) = history.iter().find(|s| s.provider != first.provider || s.strategy != first.strategy) {
        return Err(BacktestError::InvalidSignal {
            cycle: other.cycle_id.clone(),
            reason: format!("mixed series: {}/{} and {}/{}", first.provider, first.strategy, other.provider, other.strategy),
        });
    }
    let by_cycle: BTreeMap<&CycleId, &SignalSet> = history.iter().map(|s| (&s.cycle_id, s)).collect();
    let records = calendar
        .iter()
        .map(|cycle| {
            let signals = by_cycle.get(&cycle.id).ok_or_else(|| BacktestError::MissingSignal(cycle.id.clone()))?;
            run_cycle(signals, market, cycle, k)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReturnSeries { provider: first.provider.clone(), strategy: first.strategy, records })
}
