use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScoringError;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// How a raw metric value maps onto the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
    /// Tent on the fixed 0..100 oscillator scale, peaking at 50.
    MidpointBetter,
    /// Qualitative input already supplied as a unit score upstream.
    PreScored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub id: String,
    pub name: String,
    pub sub_weight: f64,
    pub direction: Direction,
    /// Alternative spellings used when matching table rows to metrics.
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub id: String,
    pub name: String,
    pub weight: f64,
    #[serde(rename = "metric")]
    pub metrics: Vec<MetricSpec>,
}

/// Category and sub-metric weights plus orientation of every metric.
///
/// Construct through [`ScoringFramework::new`], [`ScoringFramework::from_toml_str`]
/// or [`ScoringFramework::table_one`]; all of them validate the weight
/// invariants, so a value of this type is always well formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFramework", into = "RawFramework")]
pub struct ScoringFramework {
    categories: Vec<CategorySpec>,
}

#[derive(Serialize, Deserialize)]
struct RawFramework {
    #[serde(rename = "category")]
    categories: Vec<CategorySpec>,
}

impl TryFrom<RawFramework> for ScoringFramework {
    type Error = ScoringError;

    fn try_from(raw: RawFramework) -> Result<Self, Self::Error> {
        ScoringFramework::new(raw.categories)
    }
}

impl From<ScoringFramework> for RawFramework {
    fn from(f: ScoringFramework) -> Self {
        RawFramework { categories: f.categories }
    }
}

impl ScoringFramework {
    pub fn new(categories: Vec<CategorySpec>) -> Result<Self, ScoringError> {
        if categories.is_empty() {
            return Err(ScoringError::Framework("no categories".into()));
        }
        let mut seen_categories = BTreeSet::new();
        let mut seen_metrics = BTreeSet::new();
        for category in &categories {
            if !seen_categories.insert(category.id.as_str()) {
                return Err(ScoringError::Framework(format!("duplicate category id {}", category.id)));
            }
            if !(category.weight.is_finite() && category.weight > 0.0) {
                return Err(ScoringError::Framework(format!("category {} has weight {}", category.id, category.weight)));
            }
            if category.metrics.is_empty() {
                return Err(ScoringError::Framework(format!("category {} has no metrics", category.id)));
            }
            for metric in &category.metrics {
                if !seen_metrics.insert(metric.id.as_str()) {
                    return Err(ScoringError::Framework(format!(
                        "metric {} appears in more than one category",
                        metric.id
                    )));
                }
                if !(metric.sub_weight.is_finite() && metric.sub_weight > 0.0) {
                    return Err(ScoringError::Framework(format!(
                        "metric {} has sub-weight {}",
                        metric.id, metric.sub_weight
                    )));
                }
            }
            let sub_total: f64 = category.metrics.iter().map(|m| m.sub_weight).sum();
            if (sub_total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(ScoringError::Framework(format!(
                    "sub-weights of {} sum to {sub_total}",
                    category.id
                )));
            }
        }
        let total: f64 = categories.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(ScoringError::Framework(format!("category weights sum to {total}")));
        }
        Ok(Self { categories })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScoringError> {
        toml::from_str(text).map_err(|e| ScoringError::Framework(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScoringError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScoringError::Framework(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("framework serialises to TOML")
    }

    pub fn categories(&self) -> &[CategorySpec] {
        &self.categories
    }

    pub fn category(&self, id: &str) -> Option<&CategorySpec> {
        self.categories.iter().find(|c| c.id == id)
    }

    /// Category owning `metric_id`, together with the metric spec.
    pub fn metric(&self, metric_id: &str) -> Option<(&CategorySpec, &MetricSpec)> {
        self.categories
            .iter()
            .find_map(|c| c.metrics.iter().find(|m| m.id == metric_id).map(|m| (c, m)))
    }

    pub fn metric_ids(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().flat_map(|c| c.metrics.iter().map(|m| m.id.as_str()))
    }

    /// The six-category model handed to the structured prompt.
    pub fn table_one() -> Self {
        fn metric(id: &str, name: &str, w: f64, direction: Direction, aliases: &[&str]) -> MetricSpec {
            MetricSpec {
                id: id.into(),
                name: name.into(),
                sub_weight: w,
                direction,
                aliases: aliases.iter().map(|a| a.to_string()).collect(),
            }
        }
        use Direction::*;
        let categories = vec![
            CategorySpec {
                id: "valuation".into(),
                name: "Valuation".into(),
                weight: 0.20,
                metrics: vec![
                    metric("pe_ratio", "P/E Ratio", 0.60, LowerBetter, &["P/E", "PER", "price to earnings", "price earnings"]),
                    metric("pb_ratio", "P/B Ratio", 0.40, LowerBetter, &["P/B", "price to book", "price book"]),
                ],
            },
            CategorySpec {
                id: "growth".into(),
                name: "Growth Potential".into(),
                weight: 0.20,
                metrics: vec![
                    metric("eps_growth", "EPS Growth", 0.60, HigherBetter, &["earnings per share growth", "EPS growth rate"]),
                    metric("revenue_growth", "Revenue Growth", 0.40, HigherBetter, &["sales growth", "revenue growth rate"]),
                ],
            },
            CategorySpec {
                id: "financial_health".into(),
                name: "Financial Health".into(),
                weight: 0.15,
                metrics: vec![
                    metric("debt_equity", "Debt/Equity", 0.60, LowerBetter, &["debt to equity", "D/E", "debt equity ratio"]),
                    metric("roe", "ROE", 0.40, HigherBetter, &["return on equity"]),
                ],
            },
            CategorySpec {
                id: "technical".into(),
                name: "Technical".into(),
                weight: 0.15,
                metrics: vec![
                    metric("momentum", "Momentum", 0.60, HigherBetter, &["price momentum"]),
                    metric("rsi", "RSI", 0.40, MidpointBetter, &["relative strength index"]),
                ],
            },
            CategorySpec {
                id: "macro_sector".into(),
                name: "Macro & Sector".into(),
                weight: 0.15,
                metrics: vec![
                    metric("industry_growth", "Industry Growth", 0.60, HigherBetter, &["industry growth rate", "sector growth"]),
                    metric("sector_outlook", "Sector Outlook", 0.40, PreScored, &["outlook"]),
                ],
            },
            CategorySpec {
                id: "sentiment".into(),
                name: "Sentiment".into(),
                weight: 0.15,
                metrics: vec![
                    metric("news_sentiment", "News Sentiment", 0.80, PreScored, &["recent news sentiment", "news"]),
                    metric("analyst_views", "Analyst Views", 0.20, PreScored, &["analyst recommendations", "analysts recommendations", "analyst consensus"]),
                ],
            },
        ];
        Self::new(categories).expect("built-in framework is valid")
    }
}
