//! Per-firm score extraction from free text.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::number::{parse_cell_number, scan_numbers, NumberToken};
use super::table::{find_blocks, extract_metric_table, ScoreTable, TableField, TableParseError};
use super::universe::{FirmMention, Universe};
use super::ParseError;
use crate::types::Ticker;

/// Something the response should have contained but did not.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Omission {
    /// Universe member without a score.
    Firm { ticker: Ticker },
    /// Empty or placeholder cell in the metric table.
    Cell { row: usize, field: TableField },
}

/// A stated pre-adjustment score and the final one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub scores: BTreeMap<Ticker, f64>,
    pub table: Option<ScoreTable>,
    pub omissions: Vec<Omission>,
    #[serde(default)]
    pub adjustments: BTreeMap<Ticker, Adjustment>,
    /// Set when a table-like block was present but could not be read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_error: Option<String>,
    pub raw_text: String,
}

impl ParsedResponse {
    pub fn missing_firms(&self) -> impl Iterator<Item = &Ticker> {
        self.omissions.iter().filter_map(|o| match o {
            Omission::Firm { ticker } => Some(ticker),
            Omission::Cell { .. } => None,
        })
    }
}

fn is_score(t: &NumberToken) -> bool {
    t.decimal && !t.percent && (0.0..=1.0).contains(&t.value)
}

/// Blank out metric-table lines so their numbers never count as scores.
fn mask_tables(text: &str) -> String {
    let excluded: BTreeSet<usize> = find_blocks(text)
        .into_iter()
        .filter(|b| b.is_metric_table())
        .flat_map(|b| b.start..=b.end)
        .collect();
    if excluded.is_empty() {
        return text.to_owned();
    }
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if excluded.contains(&i) {
            let body = line.trim_end_matches('\n');
            out.extend(std::iter::repeat_n(' ', body.len()));
            out.push_str(&line[body.len()..]);
        } else {
            out.push_str(line);
        }
    }
    out
}

fn merge_adjacent(mentions: Vec<FirmMention>, text: &str) -> Vec<FirmMention> {
    let mut out: Vec<FirmMention> = Vec::with_capacity(mentions.len());
    for m in mentions {
        if let Some(last) = out.last_mut() {
            let gap = &text[last.end..m.start];
            if last.ticker == m.ticker && gap.len() <= 4 && gap.chars().all(|c| !c.is_alphanumeric() && c != '\n') {
                last.end = m.end;
                continue;
            }
        }
        out.push(m);
    }
    out
}

fn adjustment_patterns() -> &'static [Regex] {
    static RE: OnceLock<Vec<Regex>> = OnceLock::new();
    RE.get_or_init(|| {
        let num = r"(-?\d+(?:[.,]\d+)?)";
        vec![
            Regex::new(&format!(r"(?i)\bfrom\s+{num}\s+(?:down\s+|up\s+)?to\s+{num}")).expect("regex"),
            Regex::new(&format!(
                r"(?i)(?:computed|calculated|weighted|model)\D{{0,40}}?{num}\D{{0,80}}?(?:adjust\w*|lower\w*|reduc\w*|discount\w*)\s+(?:down\s+|up\s+)?to\s+{num}"
            ))
            .expect("regex"),
        ]
    })
}

fn adjustment_keyword(line: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)adjust|discount|uncertain|haircut|penal|reduc|lower|prudence|conservative").expect("regex"))
        .is_match(line)
}

fn find_adjustments(text: &str, mentions: &[FirmMention]) -> BTreeMap<Ticker, Adjustment> {
    let mut out = BTreeMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        if !adjustment_keyword(line) {
            continue;
        }
        let Some(caps) = adjustment_patterns().iter().find_map(|re| re.captures(line)) else {
            continue;
        };
        let (Some(from), Some(to)) = (parse_cell_number(&caps[1]), parse_cell_number(&caps[2])) else {
            continue;
        };
        if !(0.0..=1.0).contains(&from) || !(0.0..=1.0).contains(&to) {
            continue;
        }
        let line_end = line_start + line.len();
        let firm = mentions
            .iter()
            .find(|m| m.start >= line_start && m.start < line_end)
            .or_else(|| mentions.iter().rev().find(|m| m.end <= line_start));
        if let Some(m) = firm {
            out.entry(m.ticker.clone()).or_insert(Adjustment { from, to });
        }
    }
    out
}

/// Scores per universe member, the metric table if present, and omissions.
///
/// Each mention takes the first score-like number after it and before the
/// next mention; failing that, the nearest unclaimed one before it. The
/// first score found for a firm wins, except that an explicit adjustment
/// ("from 0.58 to 0.55") sets the final score.
pub fn extract_scores(text: &str, universe: &Universe) -> Result<ParsedResponse, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyResponse);
    }
    let masked = mask_tables(text);
    let mentions = merge_adjacent(universe.mentions(&masked), &masked);
    let numbers: Vec<NumberToken> = scan_numbers(&masked).into_iter().filter(is_score).collect();
    let mut claimed = vec![false; numbers.len()];
    let mut scores: BTreeMap<Ticker, f64> = BTreeMap::new();
    for (i, m) in mentions.iter().enumerate() {
        let next_start = mentions.get(i + 1).map_or(masked.len(), |n| n.start);
        let prev_end = if i == 0 { 0 } else { mentions[i - 1].end };
        let after = numbers.iter().position(|n| n.start >= m.end && n.start < next_start);
        let chosen = after.or_else(|| {
            numbers
                .iter()
                .enumerate()
                .rev()
                .find(|(j, n)| !claimed[*j] && n.end <= m.start && n.start >= prev_end)
                .map(|(j, _)| j)
        });
        if let Some(j) = chosen {
            claimed[j] = true;
            scores.entry(m.ticker.clone()).or_insert(numbers[j].value);
        }
    }
    let adjustments = find_adjustments(&masked, &mentions);
    for (ticker, adj) in &adjustments {
        scores.insert(ticker.clone(), adj.to);
    }
    if scores.is_empty() {
        return Err(ParseError::UnparseableResponse);
    }

    let (mut table, table_error) = match extract_metric_table(text) {
        Ok(t) => (t, None),
        Err(TableParseError { start, end, reason }) => (None, Some(format!("lines {start}-{end}: {reason}"))),
    };
    if let Some(t) = table.as_mut() {
        let table_start = text.split_inclusive('\n').take(t.lines.0 - 1).map(str::len).sum::<usize>();
        let full = merge_adjacent(universe.mentions(text), text);
        t.firm = full
            .iter()
            .rev()
            .find(|m| m.end <= table_start)
            .or_else(|| full.first())
            .map(|m| m.ticker.clone());
    }

    let mut omissions: Vec<Omission> = universe
        .tickers()
        .filter(|t| !scores.contains_key(*t))
        .map(|t| Omission::Firm { ticker: t.clone() })
        .collect();
    if let Some(t) = &table {
        omissions.extend(t.omissions.iter().map(|o| Omission::Cell { row: o.row, field: o.field }));
    }
    Ok(ParsedResponse { scores, table, omissions, adjustments, table_error, raw_text: text.to_owned() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe() -> Universe {
        Universe::ibex35()
    }

    #[test]
    fn decimal_comma() {
        let p = extract_scores("Iberdrola: 0,72", &universe()).unwrap();
        assert_eq!(p.scores[&Ticker::from("IBE")], 0.72);
        assert_eq!(p.missing_firms().count(), 34);
    }

    #[test]
    fn full_listing() {
        let u = universe();
        let body: String = u
            .members()
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{} ({}): 0.{:02}\n", m.ticker, m.name, 30 + i))
            .collect();
        let p = extract_scores(&body, &u).unwrap();
        assert_eq!(p.scores.len(), 35);
        assert!(p.omissions.is_empty());
        for (i, m) in u.members().iter().enumerate() {
            assert_eq!(p.scores[&m.ticker], (30 + i) as f64 / 100.0, "{}", m.ticker);
        }
    }

    #[test]
    fn partial_listing() {
        let text = "Top picks: Santander 0.81, BBVA 0.77 and Inditex 0.74.";
        let p = extract_scores(text, &universe()).unwrap();
        assert_eq!(p.scores.len(), 3);
        assert_eq!(p.omissions.len(), 32);
        assert_eq!(p.scores[&Ticker::from("ITX")], 0.74);
    }

    #[test]
    fn score_before_name() {
        let p = extract_scores("0.66 - Repsol", &universe()).unwrap();
        assert_eq!(p.scores[&Ticker::from("REP")], 0.66);
    }

    #[test]
    fn percentages_and_integers_are_not_scores() {
        let err = extract_scores("Iberdrola grew EPS 12% in 2024 and trades at 17x.", &universe()).unwrap_err();
        assert_eq!(err, ParseError::UnparseableResponse);
    }

    #[test]
    fn no_firms_is_unparseable() {
        assert_eq!(extract_scores("0.5 0.6 0.7", &universe()).unwrap_err(), ParseError::UnparseableResponse);
        assert_eq!(extract_scores("   ", &universe()).unwrap_err(), ParseError::EmptyResponse);
    }

    #[test]
    fn adjustment_sets_final_score() {
        let text = "Telefonica: weighted score 0.58.\nGiven regulatory uncertainty I adjust it from 0.58 to 0.55.";
        let p = extract_scores(text, &universe()).unwrap();
        let tef = Ticker::from("TEF");
        assert_eq!(p.scores[&tef], 0.55);
        assert_eq!(p.adjustments[&tef], Adjustment { from: 0.58, to: 0.55 });
    }

    #[test]
    fn table_numbers_are_not_scores() {
        let text = "\
Iberdrola (IBE): 0.61

| Category | Variable | Raw value | Data source | Normalized score |
|---|---|---|---|---|
| Valuation | P/E | 0.95 | BME | 0.42 |
| Valuation | P/B | 0.5 | BME | 0.35 |

Endesa (ELE): 0.57
";
        let p = extract_scores(text, &universe()).unwrap();
        assert_eq!(p.scores[&Ticker::from("IBE")], 0.61);
        assert_eq!(p.scores[&Ticker::from("ELE")], 0.57);
        let t = p.table.unwrap();
        assert_eq!(t.firm, Some(Ticker::from("IBE")));
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn ragged_table_keeps_scores() {
        let text = "Acciona: 0.52\n| Category | Variable | Raw value | Source |\n|---|---|---|---|\n| Valuation | P/E | 12 |\n";
        let p = extract_scores(text, &universe()).unwrap();
        assert_eq!(p.scores.len(), 1);
        assert!(p.table.is_none());
        assert!(p.table_error.unwrap().contains("lines 2-4"));
    }
}
