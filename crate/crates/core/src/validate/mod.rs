//! Mechanical reasoning-failure checks over parsed traces.
//!
//! Only failures that can be decided from the trace alone are automated
//! here: out-of-range scores, infeasible or miscomputed aggregates, stale
//! carry-over, uniform default scores, unexplained adjustments, zero
//! imputation, cutoff breaches and mixed-period inputs. Everything that
//! needs semantic judgement of external sources is left to the reviewer.
//!
//! Every detector is a pure function of its inputs and never mutates a
//! trace.

pub mod periods;
mod suite;

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use suite::{findings_to_jsonl, run_suite, summary_table, SuiteConfig, SuiteReport};

use crate::scoring::{score_category, score_composite, CategoryScore, ScoringFramework, SubScore};
use crate::types::{CycleId, ProviderId, SessionId, SignalStrategy, Ticker};
use periods::find_periods;

/// Default absolute tolerance when comparing reported and recomputed scores.
pub const DEFAULT_AGGREGATION_TOLERANCE: f64 = 0.005;
pub const DEFAULT_CLUSTER_MIN: usize = 4;
pub const DEFAULT_MAX_PERIOD_SKEW_MONTHS: u32 = 6;
/// Two composites closer than this are treated as the same number.
pub const SAME_SCORE_EPSILON: f64 = 1e-9;
// absorbs binary representation error at an inclusive tolerance boundary
const BOUNDARY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportedSubScore {
    pub unit_score: Option<f64>,
    pub raw_value: Option<f64>,
    /// Reference-date cell, verbatim.
    pub reference: Option<String>,
    pub source: Option<String>,
    /// Set when the input was known to be missing upstream.
    #[serde(default)]
    pub flagged_missing: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace for {0} has an empty session or cycle id")]
    MissingIds(String),
    #[error("trace for {firm} reports non-finite {field}")]
    NonFinite { firm: String, field: String },
}

/// Structured record of one model response about one firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub firm: Ticker,
    pub session_id: SessionId,
    pub cycle_id: CycleId,
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
    pub reported_composite: Option<f64>,
    /// Pre-adjustment composite when the response states one
    /// ("computed 0.58, adjusted to 0.55").
    #[serde(default)]
    pub stated_computed_composite: Option<f64>,
    #[serde(default)]
    pub reported_categories: BTreeMap<String, f64>,
    #[serde(default)]
    pub reported_sub_scores: BTreeMap<String, ReportedSubScore>,
    pub weights_used: ScoringFramework,
    #[serde(default)]
    pub free_text: String,
}

impl ReasoningTrace {
    pub fn check_invariants(&self) -> Result<(), TraceError> {
        if self.session_id.as_str().is_empty() || self.cycle_id.as_str().is_empty() {
            return Err(TraceError::MissingIds(self.firm.to_string()));
        }
        let non_finite = |field: &str| TraceError::NonFinite { firm: self.firm.to_string(), field: field.to_owned() };
        for (field, v) in [("composite", self.reported_composite), ("stated composite", self.stated_computed_composite)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(non_finite(field));
            }
        }
        for (id, v) in &self.reported_categories {
            if !v.is_finite() {
                return Err(non_finite(id));
            }
        }
        for (id, s) in &self.reported_sub_scores {
            if s.unit_score.is_some_and(|v| !v.is_finite()) || s.raw_value.is_some_and(|v| !v.is_finite()) {
                return Err(non_finite(id));
            }
        }
        Ok(())
    }
}

/// Closed set of mechanically detectable failure codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FindingCode {
    A3,
    C1,
    C2,
    C4,
    D3,
    D5,
    #[serde(rename = "BOUNDS")]
    Bounds,
    #[serde(rename = "FEASIBLE")]
    Feasible,
    #[serde(rename = "CUTOFF")]
    Cutoff,
    #[serde(rename = "MISSING_CITATION")]
    MissingCitation,
}

impl FindingCode {
    pub const ALL: [FindingCode; 10] = [
        Self::A3,
        Self::C1,
        Self::C2,
        Self::C4,
        Self::D3,
        Self::D5,
        Self::Bounds,
        Self::Feasible,
        Self::Cutoff,
        Self::MissingCitation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::A3 => "A3",
            Self::C1 => "C1",
            Self::C2 => "C2",
            Self::C4 => "C4",
            Self::D3 => "D3",
            Self::D5 => "D5",
            Self::Bounds => "BOUNDS",
            Self::Feasible => "FEASIBLE",
            Self::Cutoff => "CUTOFF",
            Self::MissingCitation => "MISSING_CITATION",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::A3 => "temporal mismatch between paired inputs",
            Self::C1 => "aggregation error",
            Self::C2 => "carry-over of a previous final score",
            Self::C4 => "missing value replaced by zero",
            Self::D3 => "default score shared across firms",
            Self::D5 => "arbitrary adjustment of a computed score",
            Self::Bounds => "score outside [0, 1]",
            Self::Feasible => "category outside the range of its sub-scores",
            Self::Cutoff => "input dated after the information cutoff",
            Self::MissingCitation => "missing or unreadable date or source",
        }
    }
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationFinding {
    pub code: FindingCode,
    pub severity: Severity,
    pub cycle_id: CycleId,
    pub firm: Ticker,
    /// Category id, metric id or `composite`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub related_firms: Vec<Ticker>,
    pub evidence: String,
    pub suggested_correction_hint: String,
}

impl ValidationFinding {
    fn new(code: FindingCode, severity: Severity, trace: &ReasoningTrace, evidence: String, hint: impl Into<String>) -> Self {
        Self {
            code,
            severity,
            cycle_id: trace.cycle_id.clone(),
            firm: trace.firm.clone(),
            subject: None,
            reported: None,
            expected: None,
            related_firms: Vec::new(),
            evidence,
            suggested_correction_hint: hint.into(),
        }
    }

    fn subject(mut self, s: impl Into<String>) -> Self {
        self.subject = Some(s.into());
        self
    }

    fn values(mut self, reported: f64, expected: Option<f64>) -> Self {
        self.reported = Some(reported);
        self.expected = expected;
        self
    }

    /// Whether the finding is about `firm`, directly or as a cluster member.
    pub fn concerns(&self, firm: &Ticker) -> bool {
        &self.firm == firm || self.related_firms.contains(firm)
    }
}

fn outside_unit(v: f64) -> bool {
    !(0.0..=1.0).contains(&v)
}

pub fn check_bounds(trace: &ReasoningTrace) -> Vec<ValidationFinding> {
    let mut out = Vec::new();
    let mut flag = |subject: &str, v: f64| {
        out.push(
            ValidationFinding::new(
                FindingCode::Bounds,
                Severity::Error,
                trace,
                format!("{subject} score {v} is outside [0, 1]"),
                format!("Every score must lie in [0, 1]; recompute the {subject} score."),
            )
            .subject(subject)
            .values(v, None),
        );
    };
    if let Some(v) = trace.reported_composite {
        if outside_unit(v) {
            flag("composite", v);
        }
    }
    for (id, v) in &trace.reported_categories {
        if outside_unit(*v) {
            flag(id, *v);
        }
    }
    for (id, s) in &trace.reported_sub_scores {
        if let Some(v) = s.unit_score.filter(|v| outside_unit(*v)) {
            flag(id, v);
        }
    }
    out
}

/// Category scores recomputed from the reported sub-scores under the
/// trace's own weights.
pub fn recompute_categories(trace: &ReasoningTrace) -> BTreeMap<String, CategoryScore> {
    let mut out = BTreeMap::new();
    for category in trace.weights_used.categories() {
        let subs: Vec<SubScore> = category
            .metrics
            .iter()
            .map(|m| SubScore {
                score: trace.reported_sub_scores.get(&m.id).and_then(|s| s.unit_score),
                weight: m.sub_weight,
            })
            .collect();
        if let Ok(score) = score_category(&subs) {
            out.insert(category.id.clone(), score);
        }
    }
    out
}

/// Composite implied by the reported category scores, falling back to
/// recomputed categories where a category score was not reported.
pub fn recompute_composite(trace: &ReasoningTrace) -> Option<f64> {
    let mut categories = recompute_categories(trace);
    for (id, v) in &trace.reported_categories {
        categories.insert(id.clone(), CategoryScore { value: *v, coverage: 1.0 });
    }
    score_composite(&trace.firm, &categories, &trace.weights_used).ok().map(|c| c.value)
}

pub fn check_aggregation(trace: &ReasoningTrace, tolerance: f64) -> Vec<ValidationFinding> {
    let mut out = Vec::new();
    let recomputed = recompute_categories(trace);
    for (id, reported) in &trace.reported_categories {
        if let Some(expected) = recomputed.get(id) {
            if (reported - expected.value).abs() > tolerance + BOUNDARY_SLACK {
                out.push(
                    ValidationFinding::new(
                        FindingCode::C1,
                        Severity::Error,
                        trace,
                        format!("{id} reported {reported} but its weighted sub-scores give {:.4}", expected.value),
                        format!("Recompute {id} as the weighted average of its sub-scores ({:.4}).", expected.value),
                    )
                    .subject(id.clone())
                    .values(*reported, Some(expected.value)),
                );
            }
        }
    }
    if let (Some(reported), Some(expected)) = (trace.reported_composite, recompute_composite(trace)) {
        if (reported - expected).abs() > tolerance + BOUNDARY_SLACK {
            out.push(
                ValidationFinding::new(
                    FindingCode::C1,
                    Severity::Error,
                    trace,
                    format!("composite reported {reported} but the weighted category scores give {expected:.4}"),
                    format!("Recompute the overall score from the category weights ({expected:.4})."),
                )
                .subject("composite")
                .values(reported, Some(expected)),
            );
        }
    }
    out
}

pub fn check_feasible_range(trace: &ReasoningTrace) -> Vec<ValidationFinding> {
    let mut out = Vec::new();
    for category in trace.weights_used.categories() {
        let Some(&reported) = trace.reported_categories.get(&category.id) else {
            continue;
        };
        let subs: Vec<f64> = category
            .metrics
            .iter()
            .filter_map(|m| trace.reported_sub_scores.get(&m.id).and_then(|s| s.unit_score))
            .collect();
        if subs.is_empty() {
            continue;
        }
        let lo = subs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = subs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if reported < lo - BOUNDARY_SLACK || reported > hi + BOUNDARY_SLACK {
            let expected = recompute_categories(trace).get(&category.id).map(|c| c.value);
            out.push(
                ValidationFinding::new(
                    FindingCode::Feasible,
                    Severity::Error,
                    trace,
                    format!("{} reported {reported} outside the feasible range [{lo}, {hi}] of its sub-scores", category.id),
                    format!("A weighted average of {} sub-scores must lie in [{lo}, {hi}].", category.id),
                )
                .subject(category.id.clone())
                .values(reported, expected),
            );
        }
    }
    out
}

pub fn check_temporal_cutoff(trace: &ReasoningTrace, cutoff: NaiveDate, max_period_skew_months: u32) -> Vec<ValidationFinding> {
    let mut out = Vec::new();
    for (metric, sub) in &trace.reported_sub_scores {
        let Some(reference) = sub.reference.as_deref().map(str::trim).filter(|r| !r.is_empty()) else {
            continue;
        };
        let periods = find_periods(reference);
        if periods.is_empty() {
            out.push(
                ValidationFinding::new(
                    FindingCode::MissingCitation,
                    Severity::Warning,
                    trace,
                    format!("{metric} reference date \"{reference}\" is not a recognisable date"),
                    format!("State the exact date or period each {metric} input refers to."),
                )
                .subject(metric.clone()),
            );
            continue;
        }
        if let Some(latest) = periods.iter().filter_map(|p| p.information_date()).max() {
            if latest > cutoff {
                out.push(
                    ValidationFinding::new(
                        FindingCode::Cutoff,
                        Severity::Error,
                        trace,
                        format!("{metric} uses data dated {latest}, after the cutoff {cutoff}"),
                        format!("Replace {metric} with the latest value published on or before {cutoff}."),
                    )
                    .subject(metric.clone()),
                );
            }
        }
        if periods.len() >= 2 {
            let lo = periods.iter().map(|p| p.mid_month()).fold(f64::INFINITY, f64::min);
            let hi = periods.iter().map(|p| p.mid_month()).fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > max_period_skew_months as f64 {
                out.push(
                    ValidationFinding::new(
                        FindingCode::A3,
                        Severity::Warning,
                        trace,
                        format!("{metric} combines inputs about {:.1} months apart (\"{reference}\")", hi - lo),
                        format!("Use inputs from the same period when computing {metric}."),
                    )
                    .subject(metric.clone()),
                );
            }
        }
    }
    out
}

/// Inputs without a data source.
pub fn check_provenance(trace: &ReasoningTrace) -> Vec<ValidationFinding> {
    trace
        .reported_sub_scores
        .iter()
        .filter(|(_, s)| s.raw_value.is_some() && s.source.as_deref().is_none_or(|src| src.trim().is_empty()))
        .map(|(metric, _)| {
            ValidationFinding::new(
                FindingCode::MissingCitation,
                Severity::Warning,
                trace,
                format!("{metric} has no data source"),
                format!("Cite the document, table or URL the {metric} value was taken from."),
            )
            .subject(metric.clone())
        })
        .collect()
}

pub fn check_carryover(current: &ReasoningTrace, previous: Option<&ReasoningTrace>, tolerance: f64) -> Vec<ValidationFinding> {
    let Some(previous) = previous else {
        return Vec::new();
    };
    let (Some(now), Some(before)) = (current.reported_composite, previous.reported_composite) else {
        return Vec::new();
    };
    if (now - before).abs() > SAME_SCORE_EPSILON {
        return Vec::new();
    }
    let changed: Vec<String> = current
        .reported_categories
        .iter()
        .filter_map(|(id, v)| {
            let old = previous.reported_categories.get(id)?;
            ((v - old).abs() > tolerance + BOUNDARY_SLACK).then(|| format!("{id} {old} -> {v}"))
        })
        .collect();
    if changed.is_empty() {
        return Vec::new();
    }
    vec![ValidationFinding::new(
        FindingCode::C2,
        Severity::Warning,
        current,
        format!(
            "composite {now} repeats the {} value although categories changed ({})",
            previous.cycle_id,
            changed.join(", ")
        ),
        "Recompute the overall score from the current category scores instead of reusing the previous one.",
    )
    .subject("composite")
    .values(now, recompute_composite(current))]
}

/// Clusters of at least `cluster_min` firms sharing one composite.
pub fn check_uniformity(traces: &[&ReasoningTrace], cluster_min: usize) -> Vec<ValidationFinding> {
    let mut scored: Vec<(&ReasoningTrace, f64)> =
        traces.iter().filter_map(|t| t.reported_composite.map(|v| (*t, v))).collect();
    if cluster_min == 0 || scored.len() < cluster_min {
        return Vec::new();
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.firm.cmp(&b.0.firm)));
    let mut out = Vec::new();
    let mut start = 0;
    while start < scored.len() {
        let mut end = start + 1;
        while end < scored.len() && (scored[end].1 - scored[start].1).abs() <= SAME_SCORE_EPSILON {
            end += 1;
        }
        if end - start >= cluster_min {
            let mut firms: Vec<Ticker> = scored[start..end].iter().map(|(t, _)| t.firm.clone()).collect();
            firms.sort();
            let value = scored[start].1;
            let names = firms.iter().map(Ticker::as_str).collect::<Vec<_>>().join(", ");
            let mut finding = ValidationFinding::new(
                FindingCode::D3,
                Severity::Warning,
                scored[start].0,
                format!("{} firms share the identical score {value}: {names}", firms.len()),
                "Compute each firm's score from its own inputs instead of a shared default.",
            )
            .subject("composite")
            .values(value, None);
            finding.firm = firms[0].clone();
            finding.related_firms = firms;
            out.push(finding);
        }
        start = end;
    }
    out
}

pub fn check_unexplained_adjustment(trace: &ReasoningTrace, tolerance: f64) -> Vec<ValidationFinding> {
    let (Some(computed), Some(reported)) = (trace.stated_computed_composite, trace.reported_composite) else {
        return Vec::new();
    };
    if (computed - reported).abs() <= SAME_SCORE_EPSILON {
        return Vec::new();
    }
    let recomputed = recompute_composite(trace);
    if recomputed.is_some_and(|r| (r - reported).abs() <= tolerance + BOUNDARY_SLACK) {
        return Vec::new();
    }
    vec![ValidationFinding::new(
        FindingCode::D5,
        Severity::Warning,
        trace,
        format!("computed score {computed} changed to {reported} without a change in weights or sub-scores"),
        format!("Report the computed score {computed} or justify the adjustment through the model inputs."),
    )
    .subject("composite")
    .values(reported, Some(computed))]
}

/// Zero raw values standing in for inputs known to be missing.
pub fn check_zero_imputation(trace: &ReasoningTrace, missing: &dyn Fn(&Ticker, &str) -> bool) -> Vec<ValidationFinding> {
    trace
        .reported_sub_scores
        .iter()
        .filter(|(metric, s)| s.raw_value == Some(0.0) && (s.flagged_missing || missing(&trace.firm, metric)))
        .map(|(metric, _)| {
            ValidationFinding::new(
                FindingCode::C4,
                Severity::Error,
                trace,
                format!("{metric} is missing upstream but enters the calculation as 0"),
                format!("Drop {metric} and renormalise the remaining weights instead of using zero."),
            )
            .subject(metric.clone())
            .values(0.0, None)
        })
        .collect()
}
