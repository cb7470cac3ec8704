//! Conversion of parsed responses into per-firm reasoning traces.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::scores::ParsedResponse;
use super::table::{is_placeholder, tokens, ScoreRow, ScoreTable, TableField, HEADER_MATCH_THRESHOLD};
use crate::scoring::ScoringFramework;
use crate::types::{CycleId, ProviderId, SessionId, SignalStrategy};
use crate::validate::{ReasoningTrace, ReportedSubScore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceContext {
    pub session_id: SessionId,
    pub cycle_id: CycleId,
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
}

fn similarity(cell: &str, candidate: &str) -> f64 {
    if cell.trim().eq_ignore_ascii_case(candidate.trim()) {
        return 2.0;
    }
    let h = tokens(cell);
    let s = tokens(candidate);
    if h.is_empty() || s.is_empty() {
        return 0.0;
    }
    if s.is_subset(&h) {
        // e.g. "6m momentum" contains "momentum"
        return 1.0 - 0.01 * (h.len() - s.len()) as f64;
    }
    h.intersection(&s).count() as f64 / h.len().max(s.len()) as f64
}

/// Framework metric id a table "Variable" cell refers to, if any.
pub fn match_metric(cell: &str, framework: &ScoringFramework) -> Option<String> {
    let mut best: Option<(f64, &str)> = None;
    for category in framework.categories() {
        for metric in &category.metrics {
            let id_words = metric.id.replace('_', " ");
            let score = std::iter::once(metric.name.as_str())
                .chain(std::iter::once(id_words.as_str()))
                .chain(metric.aliases.iter().map(String::as_str))
                .map(|c| similarity(cell, c))
                .fold(0.0, f64::max);
            if score >= HEADER_MATCH_THRESHOLD && best.is_none_or(|(b, _)| score > b) {
                best = Some((score, metric.id.as_str()));
            }
        }
    }
    best.map(|(_, id)| id.to_owned())
}

fn match_category(cell: &str, framework: &ScoringFramework) -> Option<String> {
    let mut best: Option<(f64, &str)> = None;
    for category in framework.categories() {
        let id_words = category.id.replace('_', " ");
        let score = similarity(cell, &category.name).max(similarity(cell, &id_words));
        if score >= HEADER_MATCH_THRESHOLD && best.is_none_or(|(b, _)| score > b) {
            best = Some((score, category.id.as_str()));
        }
    }
    best.map(|(_, id)| id.to_owned())
}

fn mentions_missing(row: &ScoreRow) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)\bmissing\b|not available|unavailable|no data|\bn/?a\b|not disclosed|sin datos|no disponible").expect("regex")
    });
    TableField::ALL.iter().filter_map(|f| row.get(*f)).any(|c| re.is_match(c))
}

fn cell(row: &ScoreRow, field: TableField) -> Option<String> {
    row.get(field).filter(|c| !is_placeholder(c)).map(str::to_owned)
}

fn sub_scores(table: &ScoreTable, framework: &ScoringFramework) -> (BTreeMap<String, ReportedSubScore>, BTreeMap<String, f64>) {
    let mut subs = BTreeMap::new();
    let mut categories = BTreeMap::new();
    let mut current_category: Option<String> = None;
    for row in &table.rows {
        if let Some(c) = row.category.as_deref().filter(|c| !is_placeholder(c)) {
            current_category = match_category(c, framework);
        }
        if let (Some(cat), Some(v)) = (&current_category, row.number(TableField::CategoryScore)) {
            categories.entry(cat.clone()).or_insert(v);
        }
        let Some(metric) = row.variable.as_deref().and_then(|v| match_metric(v, framework)) else {
            continue;
        };
        let raw_value = row.number(TableField::RawValue);
        let sub = ReportedSubScore {
            unit_score: row.number(TableField::NormalizedScore),
            raw_value,
            reference: cell(row, TableField::ReferenceDate),
            source: cell(row, TableField::Source),
            flagged_missing: raw_value == Some(0.0) && mentions_missing(row),
        };
        subs.entry(metric).or_insert(sub);
    }
    (subs, categories)
}

/// One trace per scored firm; table details attach to the table's firm.
///
/// Values are copied as reported. Nothing is recomputed here.
pub fn to_trace(parsed: &ParsedResponse, ctx: &TraceContext, framework: &ScoringFramework) -> Vec<ReasoningTrace> {
    let table_firm = parsed.table.as_ref().and_then(|t| t.firm.clone());
    parsed
        .scores
        .iter()
        .map(|(firm, score)| {
            let (reported_sub_scores, reported_categories) = match (&parsed.table, &table_firm) {
                (Some(t), Some(f)) if f == firm => sub_scores(t, framework),
                _ => Default::default(),
            };
            ReasoningTrace {
                firm: firm.clone(),
                session_id: ctx.session_id.clone(),
                cycle_id: ctx.cycle_id.clone(),
                provider: ctx.provider.clone(),
                strategy: ctx.strategy,
                reported_composite: Some(*score),
                stated_computed_composite: parsed.adjustments.get(firm).map(|a| a.from),
                reported_categories,
                reported_sub_scores,
                weights_used: framework.clone(),
                free_text: String::new(),
            }
        })
        .collect()
}
