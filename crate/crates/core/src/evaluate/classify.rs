//! Directional accuracy and class-averaged F1 over stock-months.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::backtest::CycleRecord;
use crate::types::{CycleId, Ticker};

/// How a score becomes an outperform call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum Threshold {
    /// Outperform iff score ≥ value.
    Fixed(f64),
    /// Outperform iff score ≥ that cycle's median score.
    CrossSectionalMedian,
}

impl Default for Threshold {
    fn default() -> Self {
        Self::Fixed(0.5)
    }
}

/// Which class a stock whose return equals the benchmark belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    Underperform,
    Outperform,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationConfig {
    #[serde(default)]
    pub threshold: Threshold,
    #[serde(default)]
    pub tie: TieRule,
}

/// One cycle's cross-section: scores, realized returns, benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub cycle_id: CycleId,
    pub scores: BTreeMap<Ticker, f64>,
    pub realized: BTreeMap<Ticker, f64>,
    pub benchmark: f64,
}

impl From<&CycleRecord> for CrossSection {
    fn from(r: &CycleRecord) -> Self {
        Self { cycle_id: r.cycle_id.clone(), scores: r.scores.clone(), realized: r.realized.clone(), benchmark: r.benchmark_return }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// 2tp / (2tp + fp + fn); `None` when the class never occurs.
    pub fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 2.0 * self.tp as f64 / denom as f64)
    }
}

/// Counts from each class's point of view over the same stock-months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub outperform: ClassCounts,
    pub underperform: ClassCounts,
}

impl ConfusionCounts {
    fn record(&mut self, predicted_out: bool, actual_out: bool) {
        match (predicted_out, actual_out) {
            (true, true) => {
                self.outperform.tp += 1;
                self.underperform.tn += 1;
            }
            (true, false) => {
                self.outperform.fp += 1;
                self.underperform.fn_ += 1;
            }
            (false, true) => {
                self.outperform.fn_ += 1;
                self.underperform.fp += 1;
            }
            (false, false) => {
                self.outperform.tn += 1;
                self.underperform.tp += 1;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.outperform.total()
    }

    pub fn correct(&self) -> u64 {
        self.outperform.tp + self.outperform.tn
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn confusion(panel: &[CrossSection], config: &ClassificationConfig) -> Result<ConfusionCounts, EvalError> {
    let mut counts = ConfusionCounts::default();
    for cs in panel {
        let cut = match config.threshold {
            Threshold::Fixed(v) => v,
            Threshold::CrossSectionalMedian => {
                let mut v: Vec<f64> = cs.scores.values().copied().collect();
                if v.is_empty() {
                    continue;
                }
                median(&mut v)
            }
        };
        for (ticker, score) in &cs.scores {
            let r = *cs.realized.get(ticker).ok_or_else(|| EvalError::MissingReturn { cycle: cs.cycle_id.clone(), ticker: ticker.clone() })?;
            let actual_out = if r == cs.benchmark { config.tie == TieRule::Outperform } else { r > cs.benchmark };
            counts.record(*score >= cut, actual_out);
        }
    }
    if counts.total() == 0 {
        return Err(EvalError::EmptySample);
    }
    Ok(counts)
}

/// Share of stock-months whose call matched the realized direction.
pub fn directional_accuracy(panel: &[CrossSection], config: &ClassificationConfig) -> Result<f64, EvalError> {
    let c = confusion(panel, config)?;
    Ok(c.correct() as f64 / c.total() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    /// Unweighted mean of the two class F1 values.
    pub value: f64,
    pub outperform: f64,
    pub underperform: f64,
    /// Classes with no predicted and no actual members, scored 0.
    pub degenerate: Vec<String>,
}

fn f1_from_counts(c: &ConfusionCounts) -> F1Score {
    let mut degenerate = Vec::new();
    let mut class = |name: &str, counts: &ClassCounts| {
        counts.f1().unwrap_or_else(|| {
            tracing::warn!(class = name, "class absent from predictions and outcomes, F1 set to 0");
            degenerate.push(name.to_owned());
            0.0
        })
    };
    let outperform = class("outperform", &c.outperform);
    let underperform = class("underperform", &c.underperform);
    F1Score { value: (outperform + underperform) / 2.0, outperform, underperform, degenerate }
}

/// Average of the per-class F1 scores for outperform and underperform.
pub fn weighted_f1(panel: &[CrossSection], config: &ClassificationConfig) -> Result<F1Score, EvalError> {
    Ok(f1_from_counts(&confusion(panel, config)?))
}
