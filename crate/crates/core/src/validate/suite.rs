use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub tolerance: f64,
    pub cluster_min: usize,
    pub max_period_skew_months: u32,
    /// Information cutoff per cycle; cycles without an entry skip the
    /// cutoff and period checks.
    #[serde(default)]
    pub cutoffs: BTreeMap<CycleId, NaiveDate>,
    /// `(firm, metric)` pairs known to be missing upstream.
    #[serde(default)]
    pub missing_inputs: BTreeSet<(Ticker, String)>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_AGGREGATION_TOLERANCE,
            cluster_min: DEFAULT_CLUSTER_MIN,
            max_period_skew_months: DEFAULT_MAX_PERIOD_SKEW_MONTHS,
            cutoffs: BTreeMap::new(),
            missing_inputs: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub findings: Vec<ValidationFinding>,
    pub counts: BTreeMap<FindingCode, usize>,
}

impl SuiteReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn count(&self, code: FindingCode) -> usize {
        self.counts.get(&code).copied().unwrap_or(0)
    }
}

type Lineage<'a> = (&'a ProviderId, SignalStrategy);

/// Run every detector over a corpus of traces.
///
/// Carry-over compares each trace with the latest earlier cycle of the same
/// firm, provider and strategy found in `traces`; uniformity is evaluated per
/// cycle, provider and strategy. A FEASIBLE finding subsumes the C1 finding
/// for the same category, and a D5 finding subsumes the composite C1 of the
/// same trace. Output is sorted by cycle, firm, code and subject.
pub fn run_suite(traces: &[ReasoningTrace], config: &SuiteConfig) -> SuiteReport {
    let missing = |firm: &Ticker, metric: &str| config.missing_inputs.contains(&(firm.clone(), metric.to_owned()));
    let mut findings = Vec::new();

    let mut history: BTreeMap<(&Ticker, Lineage), Vec<&ReasoningTrace>> = BTreeMap::new();
    let mut cohorts: BTreeMap<(&CycleId, Lineage), Vec<&ReasoningTrace>> = BTreeMap::new();
    for t in traces {
        history.entry((&t.firm, (&t.provider, t.strategy))).or_default().push(t);
        cohorts.entry((&t.cycle_id, (&t.provider, t.strategy))).or_default().push(t);
    }

    for trace in traces {
        let mut local = Vec::new();
        local.extend(check_bounds(trace));
        local.extend(check_feasible_range(trace));
        local.extend(check_aggregation(trace, config.tolerance));
        local.extend(check_unexplained_adjustment(trace, config.tolerance));
        local.extend(check_zero_imputation(trace, &missing));
        local.extend(check_provenance(trace));
        if let Some(cutoff) = config.cutoffs.get(&trace.cycle_id) {
            local.extend(check_temporal_cutoff(trace, *cutoff, config.max_period_skew_months));
        }
        let previous = history[&(&trace.firm, (&trace.provider, trace.strategy))]
            .iter()
            .filter(|p| p.cycle_id < trace.cycle_id)
            .max_by(|a, b| a.cycle_id.cmp(&b.cycle_id))
            .copied();
        local.extend(check_carryover(trace, previous, config.tolerance));
        findings.extend(subsume(local));
    }
    for cohort in cohorts.values() {
        findings.extend(check_uniformity(cohort, config.cluster_min));
    }

    findings.sort_by(|a, b| {
        (&a.cycle_id, &a.firm, a.code, &a.subject, &a.evidence).cmp(&(&b.cycle_id, &b.firm, b.code, &b.subject, &b.evidence))
    });
    let mut counts = BTreeMap::new();
    for f in &findings {
        *counts.entry(f.code).or_insert(0) += 1;
    }
    SuiteReport { findings, counts }
}

fn subsume(findings: Vec<ValidationFinding>) -> Vec<ValidationFinding> {
    let infeasible: BTreeSet<Option<String>> = findings
        .iter()
        .filter(|f| f.code == FindingCode::Feasible)
        .map(|f| f.subject.clone())
        .collect();
    let adjusted = findings.iter().any(|f| f.code == FindingCode::D5);
    findings
        .into_iter()
        .filter(|f| {
            if f.code != FindingCode::C1 {
                return true;
            }
            if infeasible.contains(&f.subject) {
                return false;
            }
            !(adjusted && f.subject.as_deref() == Some("composite"))
        })
        .collect()
}

/// One JSON object per line.
pub fn findings_to_jsonl(findings: &[ValidationFinding]) -> String {
    let mut out = String::new();
    for f in findings {
        out.push_str(&serde_json::to_string(f).expect("finding serialises"));
        out.push('\n');
    }
    out
}

pub fn summary_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<18} {:>6}  {}\n", "code", "count", "description"));
    for code in FindingCode::ALL {
        let n = report.count(code);
        if n > 0 {
            out.push_str(&format!("{:<18} {:>6}  {}\n", code.as_str(), n, code.description()));
        }
    }
    out.push_str(&format!("{:<18} {:>6}\n", "total", report.findings.len()));
    out
}
