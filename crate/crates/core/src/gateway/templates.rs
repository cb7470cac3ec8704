//! Prompt bodies and slot rendering.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::GatewayError;

/// Sentence that bars the model from post-cutoff information.
pub const CUTOFF_CLAUSE: &str = "Do not use information published after that day.";

/// Which prompt a template renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Naive,
    Structured,
    CotFollowup,
    Filings,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Self::Naive, Self::Structured, Self::CotFollowup, Self::Filings];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Structured => "structured",
            Self::CotFollowup => "cot_followup",
            Self::Filings => "filings",
        }
    }

    fn needs_cutoff_clause(self) -> Option<bool> {
        match self {
            Self::Structured | Self::Filings => Some(true),
            Self::Naive => Some(false),
            Self::CotFollowup => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const NAIVE: &str = "Your role is a financial manager. I want to start investing in Spanish equities. \
Tell me which IBEX-35 assets you expect to outperform the stock market over the next month. \
You must calculate a score from 0 to 1, based on your stock prediction, for all IBEX-35 index components.

The score must depend on different categories and factors and reflect the expected return that you have \
calculated for each company using your model. You must include in your answer: 1. The overall score \
calculated for {firm_list}. 2. A table for one of the assets showing: (i) the categories used in the \
calculation, (ii) the variables included in each category, (iii) the calculation formula for each variable, \
(iv) the raw value obtained for each variable and (v) the overall score calculated for the asset.

Check that in your response you have shown both the scores and the table.";

const STRUCTURED: &str = "Today is {query_date} and the cutoff date is {cutoff_date}. \
Do not use information published after that day. Your role is a financial manager. \
I want to start investing in Spanish equities. Tell me which IBEX-35 assets you expect to outperform \
the stock market over the next month. You must calculate a score from 0 to 1, based on your stock \
prediction, for all IBEX-35 index components.

You must use the most recent data available to calculate each variable and consider forward-looking \
information and recent trends when available. The score must be calculated using a multi-factor model \
that includes 6 categories with the following weights and variables: 1. Valuation (20%): P/E ratio (60%) \
and P/B ratio (40%) 2. Growth potential (20%): EPS Growth (60%) and Revenue Growth (40%) 3. Financial \
health (15%): Debt/Equity Ratio (60%) and ROE (40%) 4. Technical (15%): Momentum (60%) and Relative \
Strength Index (RSI) (40%) 5. Macro & Sector risk (15%): Industry growth rate (60%) and Sector Outlook \
(40%) 6. Sentiment (15%): Recent news sentiment (1 month) (80%) and analyst's recommendations (20%). \
Use the general version of each formula and a [0,1] normalization range based on the typical ibex 35 \
values for each variable.

You must include in your answer: 1. The overall [0,1] score calculated for {firm_list}. 2. A table for \
one of the assets including: (i) the categories used in the calculation, (ii) the variables included in \
each category, (iii) the calculation formula for each variable, (iv) the raw values obtained for each \
variable, (v) the date to which each component in the formula refers to, (vi) the data source, (vii) the \
values used in the normalization range and (viii) the overall score calculated for the asset.

Check that in your response you have shown both the scores and the table. I'm going to tip $1000 for a \
better solution! You will be penalized if the model is not well built.";

const COT_FOLLOWUP: &str = "Review the score you calculated for {firm_list} in your previous answer. \
The cutoff date is still {cutoff_date}. A reviewer found the following problem:

{correction_text}

Recalculate using the same multi-factor model and weights. Show the corrected overall [0,1] score \
for {firm_list} and the corrected table.";

const FILINGS: &str = "Today is {query_date} and the cutoff date is {cutoff_date}. \
Do not use information published after that day. Your role is a financial manager. \
I want to start investing in Spanish equities. Tell me which IBEX-35 assets you expect to outperform \
the stock market over the next month. Analyze in detail the documents attached and based on your \
analysis of these regulatory filings, you must calculate a score from 0 to 1 for {firm_list} given \
your stock prediction.";

/// Values substituted into template slots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptParams {
    pub query_date: Option<NaiveDate>,
    pub cutoff_date: Option<NaiveDate>,
    /// Display names, joined as "A, B and C".
    pub firms: Vec<String>,
    pub correction_text: Option<String>,
    /// Number of documents that will travel with the prompt.
    pub attachment_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub strategy: Strategy,
    pub body: String,
}

fn slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("regex"))
}

/// "A", "A and B", "A, B and C".
pub fn join_firms(firms: &[String]) -> String {
    match firms {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

impl PromptTemplate {
    pub fn builtin(strategy: Strategy) -> Self {
        let body = match strategy {
            Strategy::Naive => NAIVE,
            Strategy::Structured => STRUCTURED,
            Strategy::CotFollowup => COT_FOLLOWUP,
            Strategy::Filings => FILINGS,
        };
        Self { strategy, body: body.to_owned() }
    }

    /// Operator-supplied body, held to the same cutoff-clause rule.
    pub fn custom(strategy: Strategy, body: impl Into<String>) -> Result<Self, GatewayError> {
        let t = Self { strategy, body: body.into() };
        let has = t.body.contains(CUTOFF_CLAUSE);
        match strategy.needs_cutoff_clause() {
            Some(true) if !has => Err(GatewayError::TemplateError(format!("{strategy} template must contain the cutoff clause"))),
            Some(false) if has => Err(GatewayError::TemplateError(format!("{strategy} template must not contain the cutoff clause"))),
            _ => {
                for slot in t.slots() {
                    if !["query_date", "cutoff_date", "firm_list", "correction_text"].contains(&slot.as_str()) {
                        return Err(GatewayError::TemplateError(format!("unknown slot {{{slot}}}")));
                    }
                }
                Ok(t)
            }
        }
    }

    pub fn slots(&self) -> BTreeSet<String> {
        slot_regex().captures_iter(&self.body).map(|c| c[1].to_owned()).collect()
    }

    pub fn render(&self, params: &PromptParams) -> Result<String, GatewayError> {
        if self.strategy == Strategy::Filings && params.attachment_count == 0 {
            return Err(GatewayError::AttachmentRequired);
        }
        let mut missing = None;
        let out = slot_regex().replace_all(&self.body, |c: &regex::Captures<'_>| {
            let value = match &c[1] {
                "query_date" => params.query_date.map(|d| d.to_string()),
                "cutoff_date" => params.cutoff_date.map(|d| d.to_string()),
                "firm_list" => (!params.firms.is_empty()).then(|| join_firms(&params.firms)),
                "correction_text" => params.correction_text.clone().filter(|t| !t.trim().is_empty()),
                _ => None,
            };
            value.unwrap_or_else(|| {
                missing.get_or_insert_with(|| c[1].to_owned());
                String::new()
            })
        });
        match missing {
            Some(slot) => Err(GatewayError::TemplateError(format!("missing value for slot {{{slot}}}"))),
            None => Ok(out.into_owned()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PromptParams {
        PromptParams {
            query_date: Some("2025-04-01".parse().unwrap()),
            cutoff_date: Some("2025-03-31".parse().unwrap()),
            firms: vec!["Iberdrola".into(), "Santander".into(), "Inditex".into()],
            correction_text: None,
            attachment_count: 0,
        }
    }

    #[test]
    fn structured_has_cutoff_and_weights() {
        let text = PromptTemplate::builtin(Strategy::Structured).render(&params()).unwrap();
        assert!(text.contains("the cutoff date is 2025-03-31. Do not use information published after that day."));
        assert!(text.starts_with("Today is 2025-04-01"));
        assert!(text.contains("Valuation (20%): P/E ratio (60%) and P/B ratio (40%)"));
        assert!(text.contains("Sentiment (15%): Recent news sentiment (1 month) (80%)"));
        assert!(text.contains("I'm going to tip $1000 for a better solution!"));
        assert!(text.contains("Iberdrola, Santander and Inditex"));
        assert!(!text.contains('{'));
    }

    #[test]
    fn naive_has_no_cutoff() {
        let text = PromptTemplate::builtin(Strategy::Naive).render(&params()).unwrap();
        assert!(text.contains("Tell me which IBEX-35 assets"));
        assert!(!text.contains("Do not use information published after"));
        assert!(!text.contains("2025-03-31"));
    }

    #[test]
    fn filings_needs_attachment() {
        let t = PromptTemplate::builtin(Strategy::Filings);
        assert_eq!(t.render(&params()), Err(GatewayError::AttachmentRequired));
        let mut p = params();
        p.attachment_count = 1;
        p.firms = vec!["Iberdrola".into()];
        let text = t.render(&p).unwrap();
        assert!(text.contains(CUTOFF_CLAUSE));
        assert!(text.contains("score from 0 to 1 for Iberdrola given"));
    }

    #[test]
    fn missing_slot_is_template_error() {
        let mut p = params();
        p.cutoff_date = None;
        assert!(matches!(PromptTemplate::builtin(Strategy::Structured).render(&p), Err(GatewayError::TemplateError(_))));
        assert!(matches!(PromptTemplate::builtin(Strategy::CotFollowup).render(&params()), Err(GatewayError::TemplateError(_))));
    }

    #[test]
    fn correction_text_is_embedded_verbatim() {
        let mut p = params();
        p.firms = vec!["Iberdrola".into()];
        p.correction_text = Some("Your P/E of 17.8 is from 2023.".into());
        let text = PromptTemplate::builtin(Strategy::CotFollowup).render(&p).unwrap();
        assert!(text.contains("\n\nYour P/E of 17.8 is from 2023.\n\n"));
    }

    #[test]
    fn custom_templates_keep_the_clause_rule() {
        assert!(PromptTemplate::custom(Strategy::Structured, "Score {firm_list}.").is_err());
        assert!(PromptTemplate::custom(Strategy::Naive, format!("{CUTOFF_CLAUSE} Score {{firm_list}}.")).is_err());
        assert!(PromptTemplate::custom(Strategy::Naive, "Score {firm_list} {bogus}.").is_err());
        for s in Strategy::ALL {
            let b = PromptTemplate::builtin(s);
            assert!(PromptTemplate::custom(s, b.body.clone()).is_ok(), "{s}");
        }
    }

    #[test]
    fn firm_lists() {
        assert_eq!(join_firms(&["A".into()]), "A");
        assert_eq!(join_firms(&["A".into(), "B".into()]), "A and B");
    }
}
