//! Averaging prompt-based scores with filings-based scores.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backtest::SignalSet;
use crate::types::Ticker;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blended {
    pub value: f64,
    /// The filings score was absent and the base passed through.
    pub filings_missing: bool,
}

pub fn blend_with_filings(base: f64, filings: Option<f64>) -> Blended {
    match filings {
        Some(f) => {
            // clamp guards the last-bit rounding of (a + b) / 2
            let (lo, hi) = if base <= f { (base, f) } else { (f, base) };
            Blended { value: ((base + f) / 2.0).clamp(lo, hi), filings_missing: false }
        }
        None => Blended { value: base, filings_missing: true },
    }
}

/// Firm-level blend of two signal sets from the same cycle and provider.
///
/// The result carries the base strategy's filings variant; firms without a
/// filings score keep their base score and are listed in the second value.
pub fn blend_signal_sets(base: &SignalSet, filings: &SignalSet) -> (SignalSet, BTreeSet<Ticker>) {
    let mut missing = BTreeSet::new();
    let scores = base
        .scores
        .iter()
        .map(|(t, s)| {
            let b = blend_with_filings(*s, filings.scores.get(t).copied());
            if b.filings_missing {
                missing.insert(t.clone());
            }
            (t.clone(), b.value)
        })
        .collect();
    let set = SignalSet {
        cycle_id: base.cycle_id.clone(),
        provider: base.provider.clone(),
        strategy: base.strategy.with_filings().unwrap_or(base.strategy),
        scores,
        signal_date: base.signal_date.max(filings.signal_date),
    };
    (set, missing)
}
