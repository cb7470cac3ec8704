//! Metric-table extraction from pipe- or whitespace-delimited blocks.
//!
//! Column headers are matched to the eight required fields by fuzzy token
//! overlap, so "(iv) Raw value obtained" and "Raw value" both land on the
//! raw-value field. Three optional columns that models commonly add
//! (normalised score, category score, weight) are recognised as well.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::number::parse_cell_number;
use crate::types::Ticker;

/// Minimum token overlap between a header cell and a field synonym.
pub const HEADER_MATCH_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableField {
    Category,
    Variable,
    Formula,
    RawValue,
    ReferenceDate,
    Source,
    NormalizationRange,
    OverallScore,
    NormalizedScore,
    CategoryScore,
    Weight,
}

impl TableField {
    /// The fields the structured prompt requires, in order (i) to (viii).
    pub const REQUIRED: [TableField; 8] = [
        Self::Category,
        Self::Variable,
        Self::Formula,
        Self::RawValue,
        Self::ReferenceDate,
        Self::Source,
        Self::NormalizationRange,
        Self::OverallScore,
    ];

    pub const ALL: [TableField; 11] = [
        Self::Category,
        Self::Variable,
        Self::Formula,
        Self::RawValue,
        Self::ReferenceDate,
        Self::Source,
        Self::NormalizationRange,
        Self::OverallScore,
        Self::NormalizedScore,
        Self::CategoryScore,
        Self::Weight,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Category => "Category",
            Self::Variable => "Variable",
            Self::Formula => "Formula",
            Self::RawValue => "Raw value",
            Self::ReferenceDate => "Reference date",
            Self::Source => "Data source",
            Self::NormalizationRange => "Normalization range",
            Self::OverallScore => "Overall score",
            Self::NormalizedScore => "Normalized score",
            Self::CategoryScore => "Category score",
            Self::Weight => "Weight",
        }
    }

    /// Roman numeral of a required field.
    pub fn numeral(self) -> Option<&'static str> {
        Some(match self {
            Self::Category => "i",
            Self::Variable => "ii",
            Self::Formula => "iii",
            Self::RawValue => "iv",
            Self::ReferenceDate => "v",
            Self::Source => "vi",
            Self::NormalizationRange => "vii",
            Self::OverallScore => "viii",
            _ => return None,
        })
    }

    fn synonyms(self) -> &'static [&'static str] {
        match self {
            Self::Category => &["category", "driver", "factor category", "categoria"],
            Self::Variable => &["variable", "metric", "indicator", "variables included in each category", "sub metric", "factor"],
            Self::Formula => &["formula", "calculation formula", "calculation"],
            Self::RawValue => &["raw value", "value", "raw", "valor"],
            Self::ReferenceDate => &[
                "reference date",
                "date",
                "as of",
                "period",
                "date each component in the formula refers to",
                "fecha",
            ],
            Self::Source => &["data source", "source", "fuente"],
            Self::NormalizationRange => &[
                "normalization range",
                "normalisation range",
                "range",
                "min max",
                "bounds",
                "values used in the normalization range",
            ],
            Self::OverallScore => &["overall score", "final score", "total score", "overall", "overall score calculated for the asset"],
            Self::NormalizedScore => &["normalized score", "normalised score", "normalized", "normalised", "score", "unit score", "normalized value"],
            Self::CategoryScore => &["category score", "category total"],
            Self::Weight => &["weight", "sub weight", "weighting"],
        }
    }
}

impl fmt::Display for TableField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.numeral() {
            Some(n) => write!(f, "({n}) {}", self.label()),
            None => f.write_str(self.label()),
        }
    }
}

/// One table row, cells kept verbatim. `None` means the cell was empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub category: Option<String>,
    pub variable: Option<String>,
    pub formula: Option<String>,
    pub raw_value: Option<String>,
    pub reference_date: Option<String>,
    pub source: Option<String>,
    pub normalization_range: Option<String>,
    pub overall_score: Option<String>,
    pub normalized_score: Option<String>,
    pub category_score: Option<String>,
    pub weight: Option<String>,
}

impl ScoreRow {
    pub fn get(&self, field: TableField) -> Option<&str> {
        match field {
            TableField::Category => self.category.as_deref(),
            TableField::Variable => self.variable.as_deref(),
            TableField::Formula => self.formula.as_deref(),
            TableField::RawValue => self.raw_value.as_deref(),
            TableField::ReferenceDate => self.reference_date.as_deref(),
            TableField::Source => self.source.as_deref(),
            TableField::NormalizationRange => self.normalization_range.as_deref(),
            TableField::OverallScore => self.overall_score.as_deref(),
            TableField::NormalizedScore => self.normalized_score.as_deref(),
            TableField::CategoryScore => self.category_score.as_deref(),
            TableField::Weight => self.weight.as_deref(),
        }
    }

    fn slot(&mut self, field: TableField) -> &mut Option<String> {
        match field {
            TableField::Category => &mut self.category,
            TableField::Variable => &mut self.variable,
            TableField::Formula => &mut self.formula,
            TableField::RawValue => &mut self.raw_value,
            TableField::ReferenceDate => &mut self.reference_date,
            TableField::Source => &mut self.source,
            TableField::NormalizationRange => &mut self.normalization_range,
            TableField::OverallScore => &mut self.overall_score,
            TableField::NormalizedScore => &mut self.normalized_score,
            TableField::CategoryScore => &mut self.category_score,
            TableField::Weight => &mut self.weight,
        }
    }

    pub fn number(&self, field: TableField) -> Option<f64> {
        self.get(field).filter(|c| !is_placeholder(c)).and_then(parse_cell_number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TableOmission {
    /// Zero-based data row index.
    pub row: usize,
    pub field: TableField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub firm: Option<Ticker>,
    pub columns: Vec<TableField>,
    pub rows: Vec<ScoreRow>,
    /// Score from a trailing "Overall" summary row, if any.
    pub overall: Option<String>,
    pub omissions: Vec<TableOmission>,
    /// One-based line span of the table in the source text.
    pub lines: (usize, usize),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("malformed table at lines {start}-{end}: {reason}")]
pub struct TableParseError {
    pub start: usize,
    pub end: usize,
    pub reason: String,
}

impl ScoreTable {
    /// Render as a pipe table; parsing the output yields `self` again.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self.columns.iter().map(|c| c.label()).collect();
        out.push_str(&format!("| {} |\n", header.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(self.columns.len())));
        for row in &self.rows {
            let cells: Vec<&str> = self.columns.iter().map(|c| row.get(*c).unwrap_or("")).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        if let Some(overall) = &self.overall {
            let cells: Vec<&str> = self
                .columns
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if *c == TableField::OverallScore {
                        overall.as_str()
                    } else if i == 0 {
                        "Overall"
                    } else {
                        ""
                    }
                })
                .collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }

    pub fn omitted_fields(&self) -> BTreeSet<TableField> {
        self.omissions.iter().map(|o| o.field).collect()
    }
}

pub(crate) fn is_placeholder(cell: &str) -> bool {
    matches!(
        cell.trim().to_lowercase().as_str(),
        "" | "-" | "--" | "—" | "–" | "n/a" | "na" | "n.a." | "nd" | "n.d." | "none" | "null" | "?"
    )
}

fn stopwords() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        ["the", "of", "to", "in", "for", "each", "which", "used", "a", "an", "and", "de", "la", "el", "obtained", "calculated", "asset", "included"]
            .into_iter()
            .collect()
    })
}

pub(crate) fn tokens(text: &str) -> BTreeSet<String> {
    static NUMERAL: OnceLock<Regex> = OnceLock::new();
    let numeral = NUMERAL.get_or_init(|| Regex::new(r"^\s*\(?\s*(?i:viii|vii|vi|iv|v|iii|ii|i|ix|x)\s*[).:]\s*").expect("regex"));
    let text = numeral.replace(text, "");
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !t.chars().all(|c| c.is_ascii_digit()))
        .map(|t| {
            let t = t.to_lowercase();
            if t.len() > 3 && t.ends_with('s') && !t.ends_with("ss") {
                t[..t.len() - 1].to_owned()
            } else {
                t
            }
        })
        .filter(|t| !stopwords().contains(t.as_str()))
        .collect()
}

/// Best token overlap of `header` with any synonym of `field`.
pub fn header_similarity(header: &str, field: TableField) -> f64 {
    let h = tokens(header);
    if h.is_empty() {
        return 0.0;
    }
    field
        .synonyms()
        .iter()
        .map(|s| {
            let s = tokens(s);
            let common = h.intersection(&s).count() as f64;
            common / h.len().max(s.len()) as f64
        })
        .fold(0.0, f64::max)
}

fn map_headers(cells: &[String]) -> Vec<Option<TableField>> {
    let mut candidates = Vec::new();
    for (col, cell) in cells.iter().enumerate() {
        for (rank, field) in TableField::ALL.iter().enumerate() {
            let score = header_similarity(cell, *field);
            if score >= HEADER_MATCH_THRESHOLD {
                candidates.push((score, col, rank, *field));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut mapping = vec![None; cells.len()];
    let mut used = BTreeSet::new();
    for (_, col, _, field) in candidates {
        if mapping[col].is_none() && used.insert(field) {
            mapping[col] = Some(field);
        }
    }
    mapping
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delimiter {
    Pipe,
    Whitespace,
}

fn delimiter_of(line: &str) -> Option<Delimiter> {
    let t = line.trim();
    if t.matches('|').count() >= 2 || (t.starts_with('|') && t.len() > 1) {
        Some(Delimiter::Pipe)
    } else if split_whitespace_cells(t).len() >= 3 {
        Some(Delimiter::Whitespace)
    } else {
        None
    }
}

fn split_whitespace_cells(line: &str) -> Vec<String> {
    static SPLIT: OnceLock<Regex> = OnceLock::new();
    let re = SPLIT.get_or_init(|| Regex::new(r"\t+| {2,}").expect("regex"));
    re.split(line.trim()).map(|c| c.trim().to_owned()).collect()
}

fn clean_cell(cell: &str) -> String {
    let mut c = cell.trim();
    while let Some(inner) = c.strip_prefix("**").and_then(|s| s.strip_suffix("**")) {
        c = inner.trim();
    }
    c.to_owned()
}

fn split_pipe_cells(line: &str) -> Vec<String> {
    let t = line.trim();
    let t = t.strip_prefix('|').unwrap_or(t);
    let t = t.strip_suffix('|').unwrap_or(t);
    t.split('|').map(clean_cell).collect()
}

fn is_separator(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && t.contains('-') && t.chars().all(|c| matches!(c, '|' | '-' | ':' | ' ' | '+' | '='))
}

fn is_summary_label(cell: &str) -> bool {
    let c = cell.trim().to_lowercase();
    ["overall", "total", "final", "composite", "puntuación", "puntuacion"].iter().any(|k| c.starts_with(k))
}

/// A candidate table: consecutive lines sharing one delimiter style.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub start: usize,
    pub end: usize,
    delimiter: Delimiter,
    lines: Vec<(usize, String)>,
}

pub(crate) fn find_blocks(text: &str) -> Vec<Block> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut current: Option<Block> = None;
    for (i, line) in text.lines().enumerate() {
        let d = delimiter_of(line);
        match (&mut current, d) {
            (Some(b), Some(d)) if b.delimiter == d => {
                b.end = i;
                b.lines.push((i, line.to_owned()));
            }
            (_, Some(d)) => {
                if let Some(b) = current.take() {
                    blocks.push(b);
                }
                current = Some(Block { start: i, end: i, delimiter: d, lines: vec![(i, line.to_owned())] });
            }
            (_, None) => {
                if let Some(b) = current.take() {
                    blocks.push(b);
                }
            }
        }
    }
    blocks.extend(current);
    blocks.retain(|b| b.lines.len() >= 2);
    blocks
}

impl Block {
    fn cells(&self, line: &str) -> Vec<String> {
        match self.delimiter {
            Delimiter::Pipe => split_pipe_cells(line),
            Delimiter::Whitespace => split_whitespace_cells(line),
        }
    }

    /// Header mapping when this block is a metric table.
    fn metric_header(&self) -> Option<Vec<Option<TableField>>> {
        let header = self.cells(&self.lines[0].1);
        let mapping = map_headers(&header);
        let fields: BTreeSet<TableField> = mapping.iter().flatten().copied().collect();
        let required = TableField::REQUIRED.iter().filter(|f| fields.contains(f)).count();
        (fields.contains(&TableField::Variable) && required >= 3).then_some(mapping)
    }

    pub fn is_metric_table(&self) -> bool {
        self.metric_header().is_some()
    }
}

fn parse_block(block: &Block, mapping: Vec<Option<TableField>>) -> Result<ScoreTable, TableParseError> {
    let width = mapping.len();
    let columns: Vec<TableField> = mapping.iter().flatten().copied().collect();
    let mut rows = Vec::new();
    let mut overall = None;
    for (idx, line) in block.lines.iter().skip(1) {
        if is_separator(line) {
            continue;
        }
        let cells = block.cells(line);
        if cells.len() != width {
            return Err(TableParseError {
                start: block.start + 1,
                end: block.end + 1,
                reason: format!("line {} has {} cells, header has {width}", idx + 1, cells.len()),
            });
        }
        let mut row = ScoreRow::default();
        for (cell, field) in cells.iter().zip(&mapping) {
            if let Some(field) = field {
                let value = cell.trim();
                if !value.is_empty() {
                    *row.slot(*field) = Some(value.to_owned());
                }
            }
        }
        let first = cells.iter().find(|c| !c.trim().is_empty());
        let summary = first.is_some_and(|c| is_summary_label(c))
            && row.variable.as_deref().is_none_or(is_summary_label)
            && row.raw_value.is_none();
        if summary {
            overall = row.overall_score.clone().or(row.normalized_score.clone());
            continue;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(TableParseError {
            start: block.start + 1,
            end: block.end + 1,
            reason: "table has a header but no data rows".into(),
        });
    }
    let mut omissions = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for field in TableField::REQUIRED {
            if row.get(field).is_none_or(is_placeholder) {
                omissions.push(TableOmission { row: i, field });
            }
        }
    }
    Ok(ScoreTable {
        firm: None,
        columns,
        rows,
        overall,
        omissions,
        lines: (block.start + 1, block.end + 1),
    })
}

/// First metric table in `text`, or `None` when the text has none.
pub fn extract_metric_table(text: &str) -> Result<Option<ScoreTable>, TableParseError> {
    for block in find_blocks(text) {
        if let Some(mapping) = block.metric_header() {
            return parse_block(&block, mapping).map(Some);
        }
    }
    Ok(None)
}
