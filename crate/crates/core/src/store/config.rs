//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::evaluate::EvaluationConfig;
use crate::gateway::{Capabilities, ProviderProfile};
use crate::types::{ProviderId, Ticker};
use crate::validate::{DEFAULT_AGGREGATION_TOLERANCE, DEFAULT_CLUSTER_MIN, DEFAULT_MAX_PERIOD_SKEW_MONTHS};

/// Provider entry. Only the credential variable's name is accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub id: ProviderId,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub attachments: bool,
    #[serde(default)]
    pub browsing: bool,
    #[serde(default)]
    pub version_label: Option<String>,
    /// Serve from the mock adapter instead of the network.
    #[serde(default)]
    pub mock: bool,
    /// Fixture directory for the mock adapter.
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn profile(&self) -> ProviderProfile {
        ProviderProfile {
            id: self.id.clone(),
            endpoint: self.endpoint.clone(),
            credential_env: self.credential_env.clone(),
            model: self.model.clone(),
            capabilities: Capabilities { attachments: self.attachments, browsing: self.browsing },
            version_label: self.version_label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_tolerance")]
    pub aggregation_tolerance: f64,
    #[serde(default = "default_cluster")]
    pub cluster_min: usize,
    #[serde(default = "default_skew")]
    pub max_period_skew_months: u32,
}

fn default_tolerance() -> f64 {
    DEFAULT_AGGREGATION_TOLERANCE
}

fn default_cluster() -> usize {
    DEFAULT_CLUSTER_MIN
}

fn default_skew() -> u32 {
    DEFAULT_MAX_PERIOD_SKEW_MONTHS
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { aggregation_tolerance: default_tolerance(), cluster_min: default_cluster(), max_period_skew_months: default_skew() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Tickers in scope; empty means every member of the universe file.
    #[serde(default)]
    pub universe: Vec<Ticker>,
    /// Alias table; the built-in IBEX-35 table when absent.
    #[serde(default)]
    pub universe_file: Option<PathBuf>,
    /// Scoring framework; the built-in six-category model when absent.
    #[serde(default)]
    pub framework_file: Option<PathBuf>,
    pub calendar_file: PathBuf,
    pub market_data_file: PathBuf,
    pub ledger_file: PathBuf,
    #[serde(default)]
    pub filings_dir: Option<PathBuf>,
    #[serde(default = "default_positions")]
    pub positions: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Seed of the synthetic world answering mock providers without fixtures.
    #[serde(default)]
    pub synthetic_seed: Option<u64>,
    #[serde(default, rename = "provider")]
    pub providers: Vec<ProviderConfig>,
}

fn default_positions() -> usize {
    crate::backtest::DEFAULT_POSITIONS
}

fn default_parallelism() -> usize {
    4
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, StoreError> {
        let config: Self = toml::from_str(text).map_err(|e| StoreError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    /// Loads `path`; relative file paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.calendar_file);
        fix(&mut self.market_data_file);
        fix(&mut self.ledger_file);
        for p in [&mut self.universe_file, &mut self.framework_file, &mut self.filings_dir].into_iter().flatten() {
            fix(p);
        }
        for p in self.providers.iter_mut().filter_map(|p| p.fixtures.as_mut()) {
            fix(p);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), StoreError> {
        if self.positions == 0 {
            return Err(StoreError::Config("positions must be at least 1".into()));
        }
        if !self.universe.is_empty() && self.universe.len() < 2 * self.positions {
            return Err(StoreError::Config(format!(
                "universe of {} firms cannot fill {} positions per leg",
                self.universe.len(),
                self.positions
            )));
        }
        if self.parallelism == 0 {
            return Err(StoreError::Config("parallelism must be at least 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.providers {
            if !seen.insert(&p.id) {
                return Err(StoreError::Config(format!("provider {} listed twice", p.id)));
            }
            if !p.mock && p.endpoint.is_empty() {
                return Err(StoreError::Config(format!("provider {} needs an endpoint or mock = true", p.id)));
            }
        }
        Ok(())
    }

    pub fn provider(&self, id: &str) -> Option<&ProviderConfig> {
        self.providers.iter().find(|p| p.id.as_str() == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
calendar_file = "calendar.csv"
market_data_file = "prices.csv"
ledger_file = "run.jsonl"
positions = 5

[thresholds]
aggregation_tolerance = 0.01

[evaluation.classification]
threshold = { mode = "cross_sectional_median" }
tie = "outperform"

[[provider]]
id = "chatgpt"
endpoint = "https://api.example.com/v1"
credential_env = "CHATGPT_API_KEY"
attachments = true

[[provider]]
id = "mock"
mock = true
"#;

    #[test]
    fn parses_and_resolves() {
        let mut c = Config::from_toml_str(TOML).unwrap();
        assert_eq!(c.thresholds.aggregation_tolerance, 0.01);
        assert_eq!(c.thresholds.cluster_min, DEFAULT_CLUSTER_MIN);
        assert_eq!(c.evaluation.classification.tie, crate::evaluate::TieRule::Outperform);
        assert_eq!(c.providers.len(), 2);
        assert_eq!(c.provider("chatgpt").unwrap().profile().credential_env.as_deref(), Some("CHATGPT_API_KEY"));
        c.resolve_paths(Path::new("/data"));
        assert_eq!(c.ledger_file, PathBuf::from("/data/run.jsonl"));
        let again = Config::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn inline_secrets_are_rejected() {
        let bad = TOML.replace("credential_env = \"CHATGPT_API_KEY\"", "api_key = \"sk-123\"");
        assert!(Config::from_toml_str(&bad).is_err());
    }

    #[test]
    fn universe_must_cover_both_legs() {
        let bad = format!("universe = [\"A\", \"B\", \"C\"]\n{TOML}");
        assert!(matches!(Config::from_toml_str(&bad), Err(StoreError::Config(_))));
    }
}
