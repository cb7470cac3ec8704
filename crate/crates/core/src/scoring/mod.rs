//! Multi-factor outperformance scoring.
//!
//! Raw metric values are mapped to `[0, 1]` by linear min-max normalisation
//! over the current cross-section (clamped), combined into category scores by
//! sub-weight, and the category scores into a composite by category weight.
//! Missing inputs renormalise the weights of their present siblings; no value
//! is ever imputed.
//!
//! All weighted means are summed in a canonical order, so the result is
//! bit-identical under any permutation of the inputs.

mod framework;
mod observations;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use framework::{CategorySpec, Direction, MetricSpec, ScoringFramework};
pub use observations::{read_observations, read_observations_from, write_observations};

use crate::types::Ticker;

/// Fixed scale of the RSI oscillator used by [`Direction::MidpointBetter`].
pub const RSI_MIDPOINT: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("empty cross-section")]
    EmptyCrossSection,
    #[error("cross-section mixes metrics {0} and {1}")]
    MixedMetrics(String, String),
    #[error("invalid value {value} for {context}")]
    InvalidValue { context: String, value: f64 },
    #[error("category has no present sub-metric")]
    CategoryMissing,
    #[error("no category present for {0}")]
    NoSignal(String),
    #[error("invalid framework: {0}")]
    Framework(String),
    #[error("observation of {metric} for {firm} dated {as_of} is after cutoff {cutoff}")]
    CutoffViolation {
        firm: String,
        metric: String,
        as_of: NaiveDate,
        cutoff: NaiveDate,
    },
    #[error("unknown metric {0}")]
    UnknownMetric(String),
    #[error("observations file: {0}")]
    Io(String),
}

/// One raw financial metric value for one firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricObservation {
    pub firm: Ticker,
    pub metric: String,
    pub raw_value: f64,
    pub as_of: NaiveDate,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub lo: f64,
    pub hi: f64,
    pub degenerate: bool,
}

impl NormalizationBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ScoringError> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(ScoringError::InvalidValue {
                context: format!("bounds [{lo}, {hi}]"),
                value: lo,
            });
        }
        Ok(Self { lo, hi, degenerate: lo == hi })
    }
}

/// Cross-sectional minimum and maximum of one metric.
pub fn build_cross_section_bounds(observations: &[MetricObservation]) -> Result<NormalizationBounds, ScoringError> {
    let first = observations.first().ok_or(ScoringError::EmptyCrossSection)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for obs in observations {
        if obs.metric != first.metric {
            return Err(ScoringError::MixedMetrics(first.metric.clone(), obs.metric.clone()));
        }
        if !obs.raw_value.is_finite() {
            return Err(ScoringError::InvalidValue {
                context: format!("{} {}", obs.firm, obs.metric),
                value: obs.raw_value,
            });
        }
        lo = lo.min(obs.raw_value);
        hi = hi.max(obs.raw_value);
    }
    NormalizationBounds::new(lo, hi)
}

pub fn normalize_metric(raw: f64, bounds: &NormalizationBounds, direction: Direction) -> Result<f64, ScoringError> {
    if !raw.is_finite() {
        return Err(ScoringError::InvalidValue { context: "raw metric".into(), value: raw });
    }
    let unit = match direction {
        Direction::MidpointBetter => 1.0 - (raw - RSI_MIDPOINT).abs() / RSI_MIDPOINT,
        Direction::PreScored => raw,
        _ if bounds.degenerate => 0.5,
        Direction::HigherBetter => (raw - bounds.lo) / (bounds.hi - bounds.lo),
        Direction::LowerBetter => (bounds.hi - raw) / (bounds.hi - bounds.lo),
    };
    Ok(unit.clamp(0.0, 1.0))
}

/// One term of a category: a unit score (absent when the input is missing)
/// and its sub-weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubScore {
    pub score: Option<f64>,
    pub weight: f64,
}

impl SubScore {
    pub fn present(score: f64, weight: f64) -> Self {
        Self { score: Some(score), weight }
    }

    pub fn missing(weight: f64) -> Self {
        Self { score: None, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub value: f64,
    /// Fraction of sub-metrics that were present.
    pub coverage: f64,
}

/// Weighted mean with weights renormalised over the present terms.
///
/// Terms are summed in `(score, weight)` order and the result is clamped to
/// the closed hull of the present scores.
pub(crate) fn canonical_weighted_mean(terms: &mut [(f64, f64)]) -> f64 {
    debug_assert!(!terms.is_empty());
    terms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let numerator: f64 = terms.iter().map(|(s, w)| s * w).sum();
    let denominator: f64 = terms.iter().map(|(_, w)| w).sum();
    let lo = terms.first().map(|t| t.0).unwrap_or(0.0);
    let hi = terms.last().map(|t| t.0).unwrap_or(0.0);
    (numerator / denominator).clamp(lo, hi)
}

pub fn score_category(sub_scores: &[SubScore]) -> Result<CategoryScore, ScoringError> {
    let mut terms = Vec::with_capacity(sub_scores.len());
    for sub in sub_scores {
        if let Some(s) = sub.score {
            if !s.is_finite() {
                return Err(ScoringError::InvalidValue { context: "sub-score".into(), value: s });
            }
            terms.push((s.clamp(0.0, 1.0), sub.weight));
        }
    }
    if terms.is_empty() {
        return Err(ScoringError::CategoryMissing);
    }
    let coverage = terms.len() as f64 / sub_scores.len() as f64;
    Ok(CategoryScore {
        value: canonical_weighted_mean(&mut terms),
        coverage,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeScore {
    pub firm: Ticker,
    pub value: f64,
    pub category_scores: BTreeMap<String, f64>,
    pub coverage: BTreeMap<String, f64>,
}

/// Combine category scores under the framework weights, renormalised over
/// the categories present in `categories`.
pub fn score_composite(
    firm: &Ticker,
    categories: &BTreeMap<String, CategoryScore>,
    framework: &ScoringFramework,
) -> Result<CompositeScore, ScoringError> {
    let mut terms = Vec::new();
    let mut category_scores = BTreeMap::new();
    let mut coverage = BTreeMap::new();
    for spec in framework.categories() {
        match categories.get(&spec.id) {
            Some(score) => {
                let value = score.value.clamp(0.0, 1.0);
                if !score.value.is_finite() {
                    return Err(ScoringError::InvalidValue { context: spec.id.clone(), value: score.value });
                }
                terms.push((value, spec.weight));
                category_scores.insert(spec.id.clone(), value);
                coverage.insert(spec.id.clone(), score.coverage);
            }
            None => {
                coverage.insert(spec.id.clone(), 0.0);
            }
        }
    }
    if terms.is_empty() {
        return Err(ScoringError::NoSignal(firm.to_string()));
    }
    Ok(CompositeScore {
        firm: firm.clone(),
        value: canonical_weighted_mean(&mut terms),
        category_scores,
        coverage,
    })
}

/// Normalised input of one firm for one metric, kept for tracing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMetric {
    pub metric: String,
    pub category: String,
    pub raw_value: f64,
    pub unit_score: f64,
    pub as_of: NaiveDate,
    pub source: String,
    pub bounds: NormalizationBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmScorecard {
    pub composite: CompositeScore,
    pub metrics: BTreeMap<String, ScoredMetric>,
}

/// Score every firm of one cycle's cross-section.
///
/// Observations dated after `cutoff` are rejected. Firms with no usable
/// category are reported as [`ScoringError::NoSignal`].
pub fn score_cross_section(
    framework: &ScoringFramework,
    observations: &[MetricObservation],
    cutoff: Option<NaiveDate>,
) -> Result<BTreeMap<Ticker, FirmScorecard>, ScoringError> {
    let mut by_metric: BTreeMap<&str, Vec<MetricObservation>> = BTreeMap::new();
    for obs in observations {
        if framework.metric(&obs.metric).is_none() {
            return Err(ScoringError::UnknownMetric(obs.metric.clone()));
        }
        if let Some(cutoff) = cutoff {
            if obs.as_of > cutoff {
                return Err(ScoringError::CutoffViolation {
                    firm: obs.firm.to_string(),
                    metric: obs.metric.clone(),
                    as_of: obs.as_of,
                    cutoff,
                });
            }
        }
        by_metric.entry(obs.metric.as_str()).or_default().push(obs.clone());
    }

    let mut scored: BTreeMap<Ticker, BTreeMap<String, ScoredMetric>> = BTreeMap::new();
    for (metric_id, obs) in &by_metric {
        let (category, spec) = framework.metric(metric_id).expect("checked above");
        let bounds = build_cross_section_bounds(obs)?;
        for o in obs {
            if spec.direction == Direction::PreScored && !(0.0..=1.0).contains(&o.raw_value) {
                return Err(ScoringError::InvalidValue {
                    context: format!("pre-scored {} for {}", o.metric, o.firm),
                    value: o.raw_value,
                });
            }
            let unit_score = normalize_metric(o.raw_value, &bounds, spec.direction)?;
            scored.entry(o.firm.clone()).or_default().insert(
                o.metric.clone(),
                ScoredMetric {
                    metric: o.metric.clone(),
                    category: category.id.clone(),
                    raw_value: o.raw_value,
                    unit_score,
                    as_of: o.as_of,
                    source: o.source.clone(),
                    bounds,
                },
            );
        }
    }

    let mut out = BTreeMap::new();
    for (firm, metrics) in scored {
        let mut categories = BTreeMap::new();
        for spec in framework.categories() {
            let subs: Vec<SubScore> = spec
                .metrics
                .iter()
                .map(|m| match metrics.get(&m.id) {
                    Some(s) => SubScore::present(s.unit_score, m.sub_weight),
                    None => SubScore::missing(m.sub_weight),
                })
                .collect();
            match score_category(&subs) {
                Ok(score) => {
                    categories.insert(spec.id.clone(), score);
                }
                Err(ScoringError::CategoryMissing) => {}
                Err(e) => return Err(e),
            }
        }
        let composite = score_composite(&firm, &categories, framework)?;
        out.insert(firm, FirmScorecard { composite, metrics });
    }
    Ok(out)
}
