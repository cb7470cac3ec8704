//! Turns free-form model responses into scores, metric tables and traces.

pub mod number;
mod scores;
pub mod table;
mod trace;
pub mod universe;

use thiserror::Error;

pub use scores::{extract_scores, Adjustment, Omission, ParsedResponse};
pub use table::{extract_metric_table, ScoreRow, ScoreTable, TableField, TableParseError};
pub use trace::{match_metric, to_trace, TraceContext};
pub use universe::{FirmMention, Universe, UniverseMember};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("response is empty")]
    EmptyResponse,
    #[error("no firm score could be read from the response")]
    UnparseableResponse,
    #[error(transparent)]
    Table(#[from] TableParseError),
}
