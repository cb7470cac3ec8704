//! Performance metrics over backtest output and report aggregation.

mod blend;
mod classify;
mod report;
mod stats;

use thiserror::Error;

pub use blend::{blend_signal_sets, blend_with_filings, Blended};
pub use classify::{
    confusion, directional_accuracy, weighted_f1, ClassCounts, ClassificationConfig, ConfusionCounts, CrossSection, F1Score, Threshold,
    TieRule,
};
pub use report::{
    aggregate_report, report_from_series, EvaluationConfig, ExclusionVariant, MetricCell, Panel, PanelGrid, PerformanceReport,
    ReportInput, ReportOptions, Subperiod,
};
pub use stats::{
    autocovariance, cumulative_excess, excess_return_series, information_ratio, mean, newey_west_variance, nw_tstat, precise_sum,
    sample_std, CumulativeExcess, ExcessReturnSeries,
};

use crate::types::{CycleId, ProviderId, SignalStrategy, Ticker};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("empty sample")]
    EmptySample,
    #[error("need at least {needed} observations, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("excess returns are constant, tracking error is zero")]
    DegenerateTrackingError,
    #[error("long-run variance {0} is not positive")]
    NonPositiveVariance(f64),
    #[error("no metrics for provider {provider}, strategy {strategy}")]
    MissingCell { provider: ProviderId, strategy: SignalStrategy },
    #[error("no realized return for {ticker} in {cycle}")]
    MissingReturn { cycle: CycleId, ticker: Ticker },
    #[error("{0}")]
    InvalidInput(String),
}
