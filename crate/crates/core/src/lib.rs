//! Harness for generating, validating and economically evaluating
//! LLM-produced equity outperformance scores.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`scoring`]: six-category multi-factor model with cross-sectional
//!   min-max normalisation and the composite `[0, 1]` score.
//! - [`parse`]: score and metric-table extraction from free-form responses.
//! - [`validate`]: mechanical reasoning-failure checks over parsed traces.
//! - [`gateway`]: prompt templates, provider adapters, session protocol.
//! - [`backtest`]: monthly ranked long-short portfolios.
//! - [`evaluate`]: excess return, information ratio, Newey-West t,
//!   directional accuracy, F1 and report grids.
//! - [`store`]: market data, append-only run ledger, configuration.
//! - [`review`]: human-in-the-loop correction and approval workflow.
//! - [`pipeline`]: one-cycle orchestration used by the CLI.

pub mod backtest;
pub mod clock;
pub mod error;
pub mod evaluate;
pub mod gateway;
pub mod parse;
pub mod pipeline;
pub mod review;
pub mod scoring;
pub mod store;
pub mod synthetic;
pub mod types;
pub mod validate;

pub use backtest::{CycleRecord, MonthlyCycle, ReturnSeries, SignalSet};
pub use error::{Error, ErrorCategory, Result};
pub use evaluate::{PerformanceReport, ReportInput};
pub use gateway::{Gateway, PromptTemplate, ProviderProfile, SessionRecord, Strategy};
pub use parse::{ParsedResponse, ScoreTable};
pub use scoring::{CompositeScore, MetricObservation, NormalizationBounds, ScoringFramework};
pub use store::{Config, MarketDataTable, RunLedger};
pub use types::{CycleId, ProviderId, SessionId, SignalStrategy, Ticker};
pub use validate::{FindingCode, ReasoningTrace, Severity, ValidationFinding};
