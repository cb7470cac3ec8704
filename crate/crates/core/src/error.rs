//! Crate-level error with a coarse category for CLI exit codes.

use thiserror::Error;

use crate::backtest::BacktestError;
use crate::evaluate::EvalError;
use crate::gateway::GatewayError;
use crate::parse::ParseError;
use crate::review::ReviewError;
use crate::scoring::ScoringError;
use crate::store::StoreError;
use crate::validate::TraceError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Backtest(#[from] BacktestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Config,
    Data,
    Provider,
    LookAhead,
    Evaluation,
    Review,
}

impl ErrorCategory {
    /// Process exit code; 0 is reserved for success.
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => 2,
            Self::Config => 3,
            Self::Data => 4,
            Self::Provider => 5,
            Self::LookAhead => 6,
            Self::Evaluation => 7,
            Self::Review => 8,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Usage => "usage",
            Self::Config => "config",
            Self::Data => "data",
            Self::Provider => "provider",
            Self::LookAhead => "look-ahead",
            Self::Evaluation => "evaluation",
            Self::Review => "review",
        }
    }
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Self::Usage(_) => ErrorCategory::Usage,
            Self::Config(_) | Self::Store(StoreError::Config(_)) => ErrorCategory::Config,
            Self::Backtest(BacktestError::LookAheadViolation { .. }) => ErrorCategory::LookAhead,
            Self::Gateway(GatewayError::TemplateError(_) | GatewayError::UnknownProvider(_)) => ErrorCategory::Config,
            Self::Gateway(_) | Self::Parse(_) => ErrorCategory::Provider,
            Self::Review(ReviewError::Gateway(_) | ReviewError::Parse(_)) => ErrorCategory::Provider,
            Self::Review(_) => ErrorCategory::Review,
            Self::Eval(_) => ErrorCategory::Evaluation,
            Self::Scoring(_) | Self::Trace(_) | Self::Backtest(_) | Self::Store(_) | Self::Io { .. } => ErrorCategory::Data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn categories_have_distinct_nonzero_codes() {
        let all = [
            ErrorCategory::Usage,
            ErrorCategory::Config,
            ErrorCategory::Data,
            ErrorCategory::Provider,
            ErrorCategory::LookAhead,
            ErrorCategory::Evaluation,
            ErrorCategory::Review,
        ];
        let codes: std::collections::BTreeSet<i32> = all.iter().map(|c| c.exit_code()).collect();
        assert_eq!(codes.len(), all.len());
        assert!(!codes.contains(&0));
    }

    #[test]
    fn look_ahead_has_its_own_category() {
        let d = NaiveDate::from_ymd_opt(2025, 4, 15).unwrap();
        let e: Error = BacktestError::LookAheadViolation { cycle: "2025-04".into(), signal_date: d, first_day: d }.into();
        assert_eq!(e.category(), ErrorCategory::LookAhead);
        assert_eq!(Error::from(StoreError::Config("x".into())).category(), ErrorCategory::Config);
    }
}
