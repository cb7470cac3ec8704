//! Provider × strategy metric grids with marginal means.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::classify::{directional_accuracy, weighted_f1, ClassificationConfig, CrossSection};
use super::stats::{cumulative_excess, information_ratio, mean, nw_tstat};
use super::EvalError;
use crate::backtest::ReturnSeries;
use crate::types::{CycleId, ProviderId, SignalStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Panel {
    ExcessReturn,
    NwTStat,
    InformationRatio,
    Accuracy,
    F1,
    CumulativeArithmetic,
    CumulativeGeometric,
}

impl Panel {
    pub const ALL: [Panel; 7] = [
        Self::ExcessReturn,
        Self::NwTStat,
        Self::InformationRatio,
        Self::Accuracy,
        Self::F1,
        Self::CumulativeArithmetic,
        Self::CumulativeGeometric,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Self::ExcessReturn => "excess_return",
            Self::NwTStat => "nw_tstat",
            Self::InformationRatio => "information_ratio",
            Self::Accuracy => "accuracy",
            Self::F1 => "f1",
            Self::CumulativeArithmetic => "cumulative_arithmetic",
            Self::CumulativeGeometric => "cumulative_geometric",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::ExcessReturn => "Excess return (monthly)",
            Self::NwTStat => "Newey-West t (lag 1)",
            Self::InformationRatio => "Information ratio (monthly)",
            Self::Accuracy => "Accuracy",
            Self::F1 => "F1 score",
            Self::CumulativeArithmetic => "Cumulative excess (arithmetic)",
            Self::CumulativeGeometric => "Cumulative excess (geometric)",
        }
    }
}

/// Metrics of one provider and strategy. `None` marks an undefined value,
/// such as an IR with zero tracking error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricCell {
    pub excess_return: Option<f64>,
    pub nw_tstat: Option<f64>,
    pub information_ratio: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub cumulative_arithmetic: Option<f64>,
    pub cumulative_geometric: Option<f64>,
}

impl MetricCell {
    pub fn get(&self, panel: Panel) -> Option<f64> {
        match panel {
            Panel::ExcessReturn => self.excess_return,
            Panel::NwTStat => self.nw_tstat,
            Panel::InformationRatio => self.information_ratio,
            Panel::Accuracy => self.accuracy,
            Panel::F1 => self.f1,
            Panel::CumulativeArithmetic => self.cumulative_arithmetic,
            Panel::CumulativeGeometric => self.cumulative_geometric,
        }
    }

    /// Metrics of one return series.
    pub fn from_series(series: &ReturnSeries, classification: &ClassificationConfig, nw_lag: usize) -> Result<Self, EvalError> {
        let alphas = series.alphas();
        let panel: Vec<CrossSection> = series.records.iter().map(CrossSection::from).collect();
        let cumulative = cumulative_excess(&alphas)?;
        Ok(Self {
            excess_return: Some(mean(&alphas)?),
            nw_tstat: nw_tstat(&alphas, nw_lag).ok(),
            information_ratio: information_ratio(&alphas).ok(),
            accuracy: directional_accuracy(&panel, classification).ok(),
            f1: weighted_f1(&panel, classification).ok().map(|f| f.value),
            cumulative_arithmetic: Some(cumulative.arithmetic),
            cumulative_geometric: Some(cumulative.geometric),
        })
    }
}

/// Cells of a provider × strategy grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportInput {
    pub providers: Vec<ProviderId>,
    pub strategies: Vec<SignalStrategy>,
    pub cells: BTreeMap<ProviderId, BTreeMap<SignalStrategy, MetricCell>>,
}

impl ReportInput {
    pub fn new(providers: Vec<ProviderId>, strategies: Vec<SignalStrategy>) -> Self {
        Self { providers, strategies, cells: BTreeMap::new() }
    }

    pub fn insert(&mut self, provider: ProviderId, strategy: SignalStrategy, cell: MetricCell) {
        self.cells.entry(provider).or_default().insert(strategy, cell);
    }

    /// Grid of every series, providers and strategies in sorted order.
    pub fn from_series(series: &[ReturnSeries], classification: &ClassificationConfig, nw_lag: usize) -> Result<Self, EvalError> {
        let providers: BTreeSet<ProviderId> = series.iter().map(|s| s.provider.clone()).collect();
        let strategies: BTreeSet<SignalStrategy> = series.iter().map(|s| s.strategy).collect();
        let mut input = Self::new(providers.into_iter().collect(), strategies.into_iter().collect());
        for s in series {
            input.insert(s.provider.clone(), s.strategy, MetricCell::from_series(s, classification, nw_lag)?);
        }
        Ok(input)
    }

    fn cell(&self, provider: &ProviderId, strategy: SignalStrategy) -> Result<&MetricCell, EvalError> {
        self.cells
            .get(provider)
            .and_then(|row| row.get(&strategy))
            .ok_or_else(|| EvalError::MissingCell { provider: provider.clone(), strategy })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelGrid {
    pub panel: Panel,
    /// `values[provider][strategy]`, in the report's axis order.
    pub values: Vec<Vec<Option<f64>>>,
    /// Cross-provider mean of each strategy column.
    pub strategy_means: Vec<Option<f64>>,
    /// Cross-strategy mean of each provider row.
    pub provider_means: Vec<Option<f64>>,
}

/// Strategy marginals recomputed without one provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionVariant {
    pub excluded: ProviderId,
    pub strategy_means: BTreeMap<Panel, Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subperiod {
    pub label: String,
    pub cycles: Vec<CycleId>,
    pub report: PerformanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub providers: Vec<ProviderId>,
    pub strategies: Vec<SignalStrategy>,
    pub panels: Vec<PanelGrid>,
    #[serde(default)]
    pub exclusions: Vec<ExclusionVariant>,
    #[serde(default)]
    pub subperiods: Vec<Subperiod>,
}

fn mean_of(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.into_iter().collect();
    v.filter(|v| !v.is_empty()).and_then(|v| mean(&v).ok())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Providers to leave out of an extra set of strategy marginals.
    #[serde(default)]
    pub exclude: Vec<ProviderId>,
}

/// Panels with per-strategy and per-provider means; every grid cell must exist.
pub fn aggregate_report(input: &ReportInput, options: &ReportOptions) -> Result<PerformanceReport, EvalError> {
    let mut grid = Vec::with_capacity(input.providers.len());
    for p in &input.providers {
        let row = input.strategies.iter().map(|s| input.cell(p, *s).copied()).collect::<Result<Vec<_>, _>>()?;
        grid.push(row);
    }
    let panels = Panel::ALL
        .iter()
        .map(|&panel| {
            let values: Vec<Vec<Option<f64>>> = grid.iter().map(|row| row.iter().map(|c| c.get(panel)).collect()).collect();
            let strategy_means = (0..input.strategies.len()).map(|j| mean_of(values.iter().map(|row| row[j]))).collect();
            let provider_means = values.iter().map(|row| mean_of(row.iter().copied())).collect();
            PanelGrid { panel, values, strategy_means, provider_means }
        })
        .collect::<Vec<_>>();
    let mut exclusions = Vec::new();
    for excluded in &options.exclude {
        if !input.providers.contains(excluded) {
            return Err(EvalError::InvalidInput(format!("cannot exclude unknown provider {excluded}")));
        }
        let keep: Vec<usize> = (0..input.providers.len()).filter(|i| &input.providers[*i] != excluded).collect();
        let strategy_means = panels
            .iter()
            .map(|g| {
                let means = (0..input.strategies.len()).map(|j| mean_of(keep.iter().map(|&i| g.values[i][j]))).collect();
                (g.panel, means)
            })
            .collect();
        exclusions.push(ExclusionVariant { excluded: excluded.clone(), strategy_means });
    }
    Ok(PerformanceReport {
        providers: input.providers.clone(),
        strategies: input.strategies.clone(),
        panels,
        exclusions,
        subperiods: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    #[serde(default)]
    pub classification: ClassificationConfig,
    #[serde(default = "default_lag")]
    pub nw_lag: usize,
    #[serde(default = "default_true")]
    pub subperiods: bool,
    #[serde(default)]
    pub report: ReportOptions,
}

fn default_lag() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { classification: ClassificationConfig::default(), nw_lag: 1, subperiods: true, report: ReportOptions::default() }
    }
}

/// Full report from return series, with first-half / second-half panels.
pub fn report_from_series(series: &[ReturnSeries], config: &EvaluationConfig) -> Result<PerformanceReport, EvalError> {
    let input = ReportInput::from_series(series, &config.classification, config.nw_lag)?;
    let mut report = aggregate_report(&input, &config.report)?;
    if config.subperiods {
        let cycles: Vec<CycleId> = series.first().map(|s| s.records.iter().map(|r| r.cycle_id.clone()).collect()).unwrap_or_default();
        if cycles.len() >= 2 {
            let (first, second) = cycles.split_at(cycles.len() / 2);
            for (label, part) in [("first_half", first), ("second_half", second)] {
                let set: BTreeSet<&CycleId> = part.iter().collect();
                let restricted: Vec<ReturnSeries> = series.iter().map(|s| s.restricted_to(&set)).collect();
                let input = ReportInput::from_series(&restricted, &config.classification, config.nw_lag)?;
                report.subperiods.push(Subperiod {
                    label: label.to_owned(),
                    cycles: part.to_vec(),
                    report: aggregate_report(&input, &config.report)?,
                });
            }
        }
    }
    Ok(report)
}

fn csv_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn text_num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"))
}

impl PerformanceReport {
    pub fn panel(&self, panel: Panel) -> &PanelGrid {
        self.panels.iter().find(|g| g.panel == panel).expect("every panel is built")
    }

    pub fn cell(&self, panel: Panel, provider: &ProviderId, strategy: SignalStrategy) -> Option<f64> {
        let i = self.providers.iter().position(|p| p == provider)?;
        let j = self.strategies.iter().position(|s| *s == strategy)?;
        self.panel(panel).values[i][j]
    }

    pub fn provider_mean(&self, panel: Panel, provider: &ProviderId) -> Option<f64> {
        let i = self.providers.iter().position(|p| p == provider)?;
        self.panel(panel).provider_means[i]
    }

    pub fn strategy_mean(&self, panel: Panel, strategy: SignalStrategy) -> Option<f64> {
        let j = self.strategies.iter().position(|s| *s == strategy)?;
        self.panel(panel).strategy_means[j]
    }

    /// One grid in CSV: provider rows, strategy columns, means at the edges.
    pub fn panel_csv(&self, panel: Panel) -> String {
        let g = self.panel(panel);
        let mut out = String::from("provider");
        for s in &self.strategies {
            write!(out, ",{s}").expect("write to string");
        }
        out.push_str(",provider_mean\n");
        for (i, p) in self.providers.iter().enumerate() {
            out.push_str(p.as_str());
            for v in &g.values[i] {
                write!(out, ",{}", csv_num(*v)).expect("write to string");
            }
            writeln!(out, ",{}", csv_num(g.provider_means[i])).expect("write to string");
        }
        out.push_str("strategy_mean");
        for v in &g.strategy_means {
            write!(out, ",{}", csv_num(*v)).expect("write to string");
        }
        writeln!(out, ",{}", csv_num(mean_of(g.strategy_means.iter().copied()))).expect("write to string");
        out
    }

    /// Provider summary: one row per provider, one column per panel.
    pub fn provider_csv(&self) -> String {
        let mut out = String::from("provider");
        for p in Panel::ALL {
            write!(out, ",{}", p.slug()).expect("write to string");
        }
        out.push('\n');
        for (i, provider) in self.providers.iter().enumerate() {
            out.push_str(provider.as_str());
            for g in &self.panels {
                write!(out, ",{}", csv_num(g.provider_means[i])).expect("write to string");
            }
            out.push('\n');
        }
        out
    }

    fn exclusion_csv(&self, v: &ExclusionVariant) -> String {
        let mut out = String::from("panel");
        for s in &self.strategies {
            write!(out, ",{s}").expect("write to string");
        }
        out.push('\n');
        for (panel, means) in &v.strategy_means {
            out.push_str(panel.slug());
            for m in means {
                write!(out, ",{}", csv_num(*m)).expect("write to string");
            }
            out.push('\n');
        }
        out
    }

    /// Every CSV export keyed by file name.
    pub fn csv_files(&self) -> BTreeMap<String, String> {
        let mut files = BTreeMap::new();
        self.collect_csv("", &mut files);
        files
    }

    fn collect_csv(&self, prefix: &str, files: &mut BTreeMap<String, String>) {
        for p in Panel::ALL {
            files.insert(format!("{prefix}{}.csv", p.slug()), self.panel_csv(p));
        }
        files.insert(format!("{prefix}providers.csv"), self.provider_csv());
        for v in &self.exclusions {
            files.insert(format!("{prefix}ex_{}.csv", v.excluded), self.exclusion_csv(v));
        }
        for sp in &self.subperiods {
            sp.report.collect_csv(&format!("{prefix}{}_", sp.label), files);
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.render_text(&mut out);
        for sp in &self.subperiods {
            writeln!(out, "\n=== Subperiod {} ({} cycles: {} .. {}) ===", sp.label, sp.cycles.len(),
                sp.cycles.first().map_or("", |c| c.as_str()), sp.cycles.last().map_or("", |c| c.as_str())).expect("write to string");
            sp.report.render_text(&mut out);
        }
        out
    }

    fn render_text(&self, out: &mut String) {
        let width = self.providers.iter().map(|p| p.as_str().len()).chain([14]).max().unwrap_or(14) + 2;
        for g in &self.panels {
            writeln!(out, "{}", g.panel.title()).expect("write to string");
            write!(out, "{:width$}", "").expect("write to string");
            for s in &self.strategies {
                write!(out, "{:>20}", s.label()).expect("write to string");
            }
            writeln!(out, "{:>20}", "mean").expect("write to string");
            for (i, p) in self.providers.iter().enumerate() {
                write!(out, "{:width$}", p.as_str()).expect("write to string");
                for v in &g.values[i] {
                    write!(out, "{:>20}", text_num(*v)).expect("write to string");
                }
                writeln!(out, "{:>20}", text_num(g.provider_means[i])).expect("write to string");
            }
            write!(out, "{:width$}", "strategy mean").expect("write to string");
            for v in &g.strategy_means {
                write!(out, "{:>20}", text_num(*v)).expect("write to string");
            }
            writeln!(out, "\n").expect("write to string");
        }
        for v in &self.exclusions {
            writeln!(out, "Strategy means excluding {}", v.excluded).expect("write to string");
            for (panel, means) in &v.strategy_means {
                write!(out, "  {:30}", panel.title()).expect("write to string");
                for m in means {
                    write!(out, "{:>12}", text_num(*m)).expect("write to string");
                }
                out.push('\n');
            }
            out.push('\n');
        }
    }
}
