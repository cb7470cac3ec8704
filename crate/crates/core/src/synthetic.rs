//! Seeded synthetic world for offline runs: calendar, total-return levels,
//! filings and mock provider responses.
//!
//! Each firm-month has a latent quality `z`. Realised monthly returns load
//! on `z`, and every mock provider answers with a noisy view of it whose
//! precision depends on the provider and the prompt. Structured answers
//! carry planted reasoning defects in some cycles so the review loop has
//! something to correct.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Datelike, Months, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::backtest::{write_calendar, MonthlyCycle};
use crate::gateway::{Capabilities, MockCall, MockProvider, ProviderProfile, UNDISCLOSED_MODEL};
use crate::parse::{ScoreRow, ScoreTable, TableField, Universe};
use crate::scoring::{Direction, ScoringFramework};
use crate::store::{MarketDataTable, BENCHMARK_ID};
use crate::types::{CycleId, Ticker};

pub const DEFAULT_SEED: u64 = 20250401;

/// Mock providers of the synthetic world: id, attachment support,
/// version label and skill multiplier.
pub const PROVIDERS: [(&str, bool, &str, f64); 4] = [
    ("atlas", true, "atlas-2025-03", 1.0),
    ("boreal", false, "boreal-1.5", 0.85),
    ("cirrus", true, UNDISCLOSED_MODEL, 0.9),
    ("delta", true, "delta-r1", 0.6),
];

const NAIVE_SKILL: f64 = 0.15;
const STRUCTURED_SKILL: f64 = 0.3;
const COT_SKILL: f64 = 0.55;
const FILINGS_SKILL: f64 = 0.35;
const RETURN_LOADING: f64 = 0.02;
const IDIOSYNCRATIC_VOL: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Naive,
    Structured,
    FollowUp,
    Filings,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub universe: Universe,
    pub framework: ScoringFramework,
    pub calendar: Vec<MonthlyCycle>,
    pub market: MarketDataTable,
    /// Realised first-to-last-day return per cycle and ticker.
    pub monthly_returns: BTreeMap<(CycleId, Ticker), f64>,
    latent: BTreeMap<(CycleId, Ticker), f64>,
}

fn stable_hash(parts: &[&str], seed: u64) -> u64 {
    let mut h = DefaultHasher::new();
    seed.hash(&mut h);
    parts.hash(&mut h);
    h.finish()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn first_weekday(mut d: NaiveDate) -> NaiveDate {
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d.succ_opt().expect("date in range");
    }
    d
}

fn last_weekday(mut d: NaiveDate) -> NaiveDate {
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d.pred_opt().expect("date in range");
    }
    d
}

/// Weekday-bounded monthly cycles with month-end cutoffs.
pub fn monthly_calendar(start: NaiveDate, cycles: usize) -> Vec<MonthlyCycle> {
    (0..cycles as u32)
        .map(|i| {
            let month = start.with_day(1).expect("day 1") + Months::new(i);
            let month_end = month + Months::new(1) - chrono::Days::new(1);
            MonthlyCycle::with_month_end_cutoff(month.format("%Y-%m").to_string(), first_weekday(month), last_weekday(month_end))
                .expect("weekday bounds are ordered")
        })
        .collect()
}

fn weekdays(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    from.iter_days().take_while(|d| *d <= to).filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)).collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

/// Normalisation range, formula and source shown for each metric.
fn metric_display(id: &str) -> (f64, f64, &'static str, &'static str) {
    match id {
        "pe_ratio" => (5.0, 30.0, "Price / EPS", "BME"),
        "pb_ratio" => (0.5, 4.0, "Price / Book value per share", "BME"),
        "eps_growth" => (-20.0, 30.0, "(EPS_t / EPS_t-1) - 1", "CNMV annual report"),
        "revenue_growth" => (-10.0, 20.0, "(Revenue_t / Revenue_t-1) - 1", "CNMV annual report"),
        "debt_equity" => (0.0, 3.0, "Total debt / Equity", "CNMV annual report"),
        "roe" => (0.0, 25.0, "Net income / Equity", "CNMV annual report"),
        "momentum" => (-20.0, 30.0, "6-month price change", "BME"),
        "rsi" => (0.0, 100.0, "14-day RSI", "BME"),
        "industry_growth" => (-5.0, 10.0, "Sector revenue growth", "Eurostat"),
        _ => (0.0, 1.0, "Analyst assessment", "Analyst consensus"),
    }
}

impl SyntheticWorld {
    /// Ten cycles from April 2025 over the IBEX-35 universe.
    pub fn generate(seed: u64) -> Self {
        let start = NaiveDate::from_ymd_opt(2025, 4, 1).expect("valid date");
        Self::with_shape(seed, Universe::ibex35(), monthly_calendar(start, 10))
    }

    pub fn with_shape(seed: u64, universe: Universe, calendar: Vec<MonthlyCycle>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tickers: Vec<Ticker> = universe.tickers().cloned().collect();
        let mut latent = BTreeMap::new();
        let mut monthly_returns = BTreeMap::new();
        let mut benchmark = BTreeMap::new();
        for cycle in &calendar {
            let m = 0.008 + 0.035 * normal(&mut rng);
            benchmark.insert(cycle.id.clone(), m);
            for t in &tickers {
                let z = normal(&mut rng);
                let r = (m + RETURN_LOADING * z + IDIOSYNCRATIC_VOL * normal(&mut rng)).max(-0.6);
                latent.insert((cycle.id.clone(), t.clone()), z);
                monthly_returns.insert((cycle.id.clone(), t.clone()), r);
            }
        }

        let mut series: BTreeMap<Ticker, Vec<(NaiveDate, f64)>> = BTreeMap::new();
        let bench_id = Ticker::from(BENCHMARK_ID);
        let ids: Vec<Ticker> = tickers.iter().cloned().chain(std::iter::once(bench_id.clone())).collect();
        for id in &ids {
            let mut level = 100.0 * (1.0 + 0.5 * rng_unit(&mut rng));
            let mut points = Vec::new();
            for (i, cycle) in calendar.iter().enumerate() {
                if i > 0 {
                    level *= (0.004 * normal(&mut rng)).exp();
                }
                let target = if *id == bench_id { benchmark[&cycle.id] } else { monthly_returns[&(cycle.id.clone(), id.clone())] };
                let days = weekdays(cycle.first_day, cycle.last_day);
                let steps = days.len().saturating_sub(1);
                let mut noise: Vec<f64> = (0..steps).map(|_| 0.01 * normal(&mut rng)).collect();
                let drift = (1.0 + target).ln() / steps.max(1) as f64;
                let mean = noise.iter().sum::<f64>() / steps.max(1) as f64;
                noise.iter_mut().for_each(|n| *n += drift - mean);
                let month_start = level;
                points.push((days[0], level));
                for (day, step) in days.iter().skip(1).zip(&noise) {
                    level *= step.exp();
                    points.push((*day, level));
                }
                // pin the month end so realised returns equal the targets to rounding
                if steps > 0 {
                    level = month_start * (1.0 + target);
                    points.last_mut().expect("month has days").1 = level;
                }
            }
            series.insert(id.clone(), points);
        }
        let market = MarketDataTable::from_series(series).expect("synthetic levels are valid");
        Self { seed, universe, framework: ScoringFramework::table_one(), calendar, market, monthly_returns, latent }
    }

    pub fn latent(&self, cycle: &CycleId, ticker: &Ticker) -> Option<f64> {
        self.latent.get(&(cycle.clone(), ticker.clone())).copied()
    }

    fn cycle_index(&self, cycle: &CycleId) -> Option<usize> {
        self.calendar.iter().position(|c| &c.id == cycle)
    }

    /// Noisy view of `z` with correlation `skill`, mapped into (0, 1).
    fn view(&self, provider: &str, kind: &str, cycle: &CycleId, ticker: &Ticker, skill: f64) -> f64 {
        let z = self.latent(cycle, ticker).unwrap_or(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[provider, kind, cycle.as_str(), ticker.as_str()], self.seed));
        let skill = skill.clamp(0.0, 1.0);
        let x = skill * z + (1.0 - skill * skill).sqrt() * normal(&mut rng);
        round_to(logistic(1.1 * x), 3)
    }

    fn provider_skill(provider: &str) -> f64 {
        PROVIDERS.iter().find(|p| p.0 == provider).map_or(0.7, |p| p.3)
    }

    fn table_firm(&self, cycle: &CycleId, provider: &str) -> Ticker {
        let n = self.universe.len();
        let i = (stable_hash(&[provider, cycle.as_str(), "table"], self.seed) % n as u64) as usize;
        self.universe.members()[i].ticker.clone()
    }

    /// Firms given a shared default score in a defect cycle.
    fn uniform_cluster(&self, cycle: &CycleId, provider: &str) -> Vec<Ticker> {
        let table = self.table_firm(cycle, provider);
        let n = self.universe.len();
        let start = (stable_hash(&[provider, cycle.as_str(), "cluster"], self.seed) % n as u64) as usize;
        (0..n).map(|k| self.universe.members()[(start + k) % n].ticker.clone()).filter(|t| *t != table).take(4).collect()
    }

    /// Metric table whose aggregation is internally consistent around
    /// `target`, returning it with the composite it implies.
    fn metric_table(&self, cycle: &MonthlyCycle, firm: &Ticker, target: f64, detailed: bool, defects: &Defects) -> (ScoreTable, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[cycle.id.as_str(), firm.as_str(), "table"], self.seed));
        let mut rows = Vec::new();
        let mut composite = 0.0;
        for category in self.framework.categories() {
            let (m1, m2) = (&category.metrics[0], &category.metrics[1]);
            let d = 0.04 * normal(&mut rng);
            let u1 = round_to((target + d).clamp(0.0, 1.0), 2);
            let u2 = round_to((target - d * m1.sub_weight / m2.sub_weight).clamp(0.0, 1.0), 2);
            let value = round_to(m1.sub_weight * u1 + m2.sub_weight * u2, 4);
            let reported = if defects.aggregation && category.id == "valuation" { round_to((value + 0.12).min(1.0), 4) } else { value };
            composite += category.weight * reported;
            for (k, (metric, u)) in [(m1, u1), (m2, u2)].into_iter().enumerate() {
                let (lo, hi, formula, source) = metric_display(&metric.id);
                let raw = match metric.direction {
                    Direction::HigherBetter => lo + u * (hi - lo),
                    Direction::LowerBetter => hi - u * (hi - lo),
                    Direction::MidpointBetter => 50.0 + (1.0 - u) * 50.0 * if d >= 0.0 { 1.0 } else { -1.0 },
                    Direction::PreScored => u,
                };
                let reference = if defects.cutoff && metric.id == "momentum" { cycle.first_day } else { cycle.cutoff };
                rows.push(ScoreRow {
                    category: (k == 0).then(|| category.name.clone()),
                    variable: Some(metric.name.clone()),
                    formula: Some(formula.to_owned()),
                    raw_value: Some(format!("{raw:.2}")),
                    reference_date: detailed.then(|| reference.format("%Y-%m-%d").to_string()),
                    source: detailed.then(|| source.to_owned()),
                    normalization_range: detailed.then(|| format!("{lo} to {hi}")),
                    normalized_score: Some(format!("{u:.2}")),
                    category_score: (k == 0).then(|| format!("{reported:.4}")),
                    ..ScoreRow::default()
                });
            }
        }
        let composite = round_to(composite, 3);
        let mut columns = vec![TableField::Category, TableField::Variable, TableField::Formula, TableField::RawValue];
        if detailed {
            columns.extend([TableField::ReferenceDate, TableField::Source, TableField::NormalizationRange]);
        }
        columns.extend([TableField::NormalizedScore, TableField::CategoryScore, TableField::OverallScore]);
        let table = ScoreTable {
            firm: Some(firm.clone()),
            columns,
            rows,
            overall: Some(format!("{composite:.3}")),
            omissions: Vec::new(),
            lines: (0, 0),
        };
        (table, composite)
    }

    fn name(&self, ticker: &Ticker) -> String {
        self.universe.member(ticker.as_str()).map_or_else(|| ticker.to_string(), |m| m.name.clone())
    }

    fn score_list(&self, scores: &BTreeMap<Ticker, f64>) -> String {
        let mut out = String::new();
        for m in self.universe.members() {
            if let Some(s) = scores.get(&m.ticker) {
                let _ = writeln!(out, "- {} ({}): {s:.3}", m.name, m.ticker);
            }
        }
        out
    }

    fn answer(&self, provider: &str, cycle: &MonthlyCycle, kind: Kind, firm: Option<&Ticker>) -> String {
        let skill_scale = Self::provider_skill(provider);
        let index = self.cycle_index(&cycle.id).unwrap_or(0);
        match kind {
            Kind::Naive | Kind::Structured => {
                let (label, skill) = if kind == Kind::Naive { ("naive", NAIVE_SKILL) } else { ("structured", STRUCTURED_SKILL) };
                let mut scores: BTreeMap<Ticker, f64> =
                    self.universe.tickers().map(|t| (t.clone(), self.view(provider, label, &cycle.id, t, skill * skill_scale))).collect();
                let defects = if kind == Kind::Structured { Defects::for_cycle(index) } else { Defects::default() };
                if defects.uniform {
                    for t in self.uniform_cluster(&cycle.id, provider) {
                        scores.insert(t, 0.85);
                    }
                }
                let table_firm = self.table_firm(&cycle.id, provider);
                let (table, composite) = self.metric_table(cycle, &table_firm, scores[&table_firm], kind == Kind::Structured, &defects);
                scores.insert(table_firm.clone(), composite);
                format!(
                    "Expected outperformance scores for the coming month:\n\n{}\nCalculation detail for {}:\n\n{}",
                    self.score_list(&scores),
                    self.name(&table_firm),
                    table.to_markdown()
                )
            }
            Kind::FollowUp => {
                let Some(firm) = firm else {
                    return "Please indicate which company should be reviewed.".to_owned();
                };
                let score = self.view(provider, "cot", &cycle.id, firm, COT_SKILL * skill_scale);
                if *firm == self.table_firm(&cycle.id, provider) {
                    let (table, composite) = self.metric_table(cycle, firm, score, true, &Defects::default());
                    format!(
                        "Thank you for the review. Corrected overall score:\n\n{} ({firm}): {composite:.3}\n\nCorrected calculation:\n\n{}",
                        self.name(firm),
                        table.to_markdown()
                    )
                } else {
                    format!("Thank you for the review. Corrected overall score:\n\n{} ({firm}): {score:.3}\n", self.name(firm))
                }
            }
            Kind::Filings => match firm {
                Some(firm) => {
                    let score = self.view(provider, "filings", &cycle.id, firm, FILINGS_SKILL * skill_scale);
                    format!("Based on the attached filings, the score for {} ({firm}) is {score:.3}.\n", self.name(firm))
                }
                None => "No company was specified.".to_owned(),
            },
        }
    }

    /// Responder for [`MockProvider`], keyed on the gateway session id
    /// `{provider}-{cycle}-{strategy}[-{firm}]`.
    pub fn respond(&self, provider: &str, call: &MockCall) -> Option<String> {
        let rest = call.session_id.strip_prefix(provider)?.strip_prefix('-')?;
        let cycle = self.calendar.iter().find(|c| rest.starts_with(c.id.as_str()))?;
        let rest = rest[cycle.id.as_str().len()..].trim_start_matches('-');
        let (strategy, session_firm) = match rest.split_once('-') {
            Some((s, f)) => (s, Some(Ticker::from(f))),
            None => (rest, None),
        };
        let prompt_firm = self.universe.mentions(&call.prompt).into_iter().next().map(|m| m.ticker);
        let (kind, firm) = match (strategy, call.turn) {
            ("naive", _) => (Kind::Naive, None),
            ("structured", 0) => (Kind::Structured, None),
            ("structured", _) => (Kind::FollowUp, prompt_firm),
            ("filings", _) => (Kind::Filings, session_firm.or(prompt_firm)),
            _ => return None,
        };
        Some(self.answer(provider, cycle, kind, firm.as_ref()))
    }

    pub fn profile(provider: &str) -> ProviderProfile {
        let (attachments, label) = PROVIDERS.iter().find(|p| p.0 == provider).map_or((true, "mock-1"), |p| (p.1, p.2));
        ProviderProfile {
            capabilities: Capabilities { attachments, browsing: false },
            version_label: Some(label.to_owned()),
            ..ProviderProfile::mock(provider)
        }
    }

    pub fn mock_provider(self: &Arc<Self>, profile: ProviderProfile) -> MockProvider {
        let world = Arc::clone(self);
        let id = profile.id.to_string();
        MockProvider::from_profile(profile, move |call| world.respond(&id, call))
    }

    /// Writes calendar, prices, filings and a mock-provider config into
    /// `dir`, returning the config path.
    pub fn write_workspace(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let calendar = std::fs::File::create(dir.join("calendar.csv"))?;
        write_calendar(&self.calendar, calendar).map_err(std::io::Error::other)?;
        let prices = std::fs::File::create(dir.join("prices.csv"))?;
        self.market.write_csv(std::io::BufWriter::new(prices)).map_err(std::io::Error::other)?;
        for cycle in &self.calendar {
            let folder = dir.join("filings").join(cycle.id.as_str());
            std::fs::create_dir_all(&folder)?;
            for m in self.universe.members() {
                let text = format!(
                    "{} ({}) interim financial report for the period ended {}.\nSynthetic document for offline runs.\n",
                    m.name, m.ticker, cycle.cutoff
                );
                std::fs::write(folder.join(format!("{}.txt", m.ticker)), text)?;
            }
        }
        let mut config = format!(
            "calendar_file = \"calendar.csv\"\nmarket_data_file = \"prices.csv\"\nledger_file = \"ledger.jsonl\"\n\
             filings_dir = \"filings\"\npositions = 5\nparallelism = 4\nsynthetic_seed = {}\n",
            self.seed
        );
        for (id, attachments, label, _) in PROVIDERS {
            let _ = write!(config, "\n[[provider]]\nid = \"{id}\"\nmock = true\nattachments = {attachments}\nversion_label = \"{label}\"\n");
        }
        let path = dir.join("config.toml");
        std::fs::write(&path, config)?;
        Ok(path)
    }
}

fn rng_unit(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    rng.random::<f64>()
}

/// Reasoning defects planted into structured answers.
#[derive(Debug, Clone, Copy, Default)]
struct Defects {
    aggregation: bool,
    uniform: bool,
    cutoff: bool,
}

impl Defects {
    fn for_cycle(index: usize) -> Self {
        Self { aggregation: index % 3 == 1, uniform: index % 3 == 2, cutoff: index % 4 == 3 }
    }
}
