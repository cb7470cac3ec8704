//! Identifier newtypes shared by every stage.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Exchange ticker of one index constituent (e.g. `IBE`).
    Ticker
);
string_id!(
    /// Monthly cycle identifier, conventionally `YYYY-MM`.
    CycleId
);
string_id!(
    /// Provider adapter identifier from the configuration.
    ProviderId
);
string_id!(SessionId);

/// Which prompting protocol (or blend) produced a signal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignalStrategy {
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "structured")]
    Structured,
    #[serde(rename = "cot")]
    Cot,
    #[serde(rename = "filings")]
    Filings,
    #[serde(rename = "naive+filings")]
    NaiveWithFilings,
    #[serde(rename = "structured+filings")]
    StructuredWithFilings,
    #[serde(rename = "cot+filings")]
    CotWithFilings,
}

impl SignalStrategy {
    pub const BASE: [SignalStrategy; 3] = [Self::Naive, Self::Structured, Self::Cot];

    pub fn label(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Structured => "structured",
            Self::Cot => "cot",
            Self::Filings => "filings",
            Self::NaiveWithFilings => "naive+filings",
            Self::StructuredWithFilings => "structured+filings",
            Self::CotWithFilings => "cot+filings",
        }
    }

    /// The blended variant of a base strategy, if it has one.
    pub fn with_filings(self) -> Option<Self> {
        match self {
            Self::Naive => Some(Self::NaiveWithFilings),
            Self::Structured => Some(Self::StructuredWithFilings),
            Self::Cot => Some(Self::CotWithFilings),
            _ => None,
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        [
            Self::Naive,
            Self::Structured,
            Self::Cot,
            Self::Filings,
            Self::NaiveWithFilings,
            Self::StructuredWithFilings,
            Self::CotWithFilings,
        ]
        .into_iter()
        .find(|s| s.label() == label)
    }
}

impl fmt::Display for SignalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}
