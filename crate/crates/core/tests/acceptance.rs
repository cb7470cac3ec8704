//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always print.
//! The process fails when a criterion fails, except those listed in
//! `DOCUMENTED_RED`, which print FAIL with their explanation and leave
//! the exit status alone.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use alphalab_core::backtest::{run_cycle, BacktestError, CycleRecord, MonthlyCycle, SignalSet};
use alphalab_core::evaluate::{
    aggregate_report, cumulative_excess, directional_accuracy, nw_tstat, weighted_f1, ClassificationConfig, CrossSection, MetricCell,
    Panel, ReportInput, ReportOptions,
};
use alphalab_core::gateway::{MockCall, RetryPolicy};
use alphalab_core::parse::{extract_scores, to_trace, TraceContext};
use alphalab_core::pipeline::{backtest_state, report_from_state, OpenOptions, Pipeline};
use alphalab_core::scoring::{score_cross_section, CategorySpec, Direction, MetricSpec};
use alphalab_core::store::LedgerEvent;
use alphalab_core::synthetic::{SyntheticWorld, DEFAULT_SEED};
use alphalab_core::validate::{run_suite, ReportedSubScore, SuiteConfig};
use alphalab_core::{
    Config, CycleId, Error, FindingCode, MetricObservation, ProviderId, ReasoningTrace, RunLedger, ScoringFramework, SignalStrategy, Ticker,
};
use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// pinned thresholds
const TABLE5_TOL: f64 = 0.005;
const PANEL_A_MARGINAL_TOL: f64 = 0.0005;
const PANEL_BCD_MARGINAL_TOL: f64 = 0.005;
const SCORING_ORACLE_TOL: f64 = 1e-12;
const SCORING_CASES: usize = 1000;
const HAC_TOL: f64 = 1e-9;
const HAC_SERIES: usize = 100;
const HAC_LEN: usize = 10;
const CONFUSION_FIXTURES: usize = 1000;
const RANDOM_SAMPLES: usize = 10_000;
const RANDOM_ACCURACY_BAND: f64 = 0.02;
const ANTISYMMETRY_CASES: usize = 100;
// inclusive tolerance comparisons absorb binary rounding of decimal inputs
const ROUNDING_SLACK: f64 = 1e-12;

/// Criteria that cannot pass on the published numbers, with the reason.
const DOCUMENTED_RED: &[(&str, &str)] = &[(
    "table4-to-table5",
    "DeepSeek IR: the mean of its Table 4 row is 0.3433, Table 5 prints 0.35",
)];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (&'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("table4-to-table5", Duration::from_secs(1), table4_to_table5),
        ("table4-marginals", Duration::from_secs(1), table4_marginals),
        ("cumulative-excess", Duration::from_secs(1), cumulative_constant_alpha),
        ("scoring-oracle", Duration::from_secs(10), scoring_oracle),
        ("validator-fixtures", Duration::from_secs(5), validator_fixtures),
        ("statistics-oracles", Duration::from_secs(30), statistics_oracles),
        ("end-to-end-determinism", Duration::from_secs(60), end_to_end),
        ("backtest-antisymmetry", Duration::from_secs(10), backtest_antisymmetry),
    ];
    let mut unexpected = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let mut verdict = check();
        let elapsed = start.elapsed();
        if elapsed > limit {
            verdict.pass = false;
            verdict.detail.push_str(&format!("; runtime {elapsed:.2?} over {limit:?}"));
        }
        let known = DOCUMENTED_RED.iter().find(|(n, _)| *n == name);
        let status = if verdict.pass { "PASS" } else { "FAIL" };
        println!("{status} {name:<24} {:>9.3?}  {}", elapsed, verdict.detail);
        match (verdict.pass, known) {
            (false, Some((_, why))) => println!("     {name:<24} documented: {why}"),
            (false, None) => unexpected += 1,
            (true, Some(_)) => println!("     {name:<24} documented red now passes; update DOCUMENTED_RED"),
            (true, None) => {}
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol + ROUNDING_SLACK
}

// Table 4, providers x (naive, structured, cot)
const PROVIDERS: [&str; 4] = ["ChatGPT", "DeepSeek", "Gemini", "Perplexity"];
const T4_EXCESS: [[f64; 3]; 4] = [[-0.0072, 0.015, 0.030], [0.0069, 0.024, 0.027], [0.0094, 0.028, 0.030], [0.0050, 0.023, 0.035]];
const T4_IR: [[f64; 3]; 4] = [[-0.15, 0.41, 0.61], [0.13, 0.34, 0.56], [0.18, 0.86, 0.89], [0.083, 0.70, 0.65]];
const T4_ACC: [[f64; 3]; 4] = [[0.569, 0.569, 0.543], [0.549, 0.569, 0.549], [0.546, 0.571, 0.586], [0.551, 0.609, 0.606]];
const T4_F1: [[f64; 3]; 4] = [[0.527, 0.524, 0.528], [0.526, 0.534, 0.534], [0.525, 0.546, 0.567], [0.521, 0.568, 0.579]];
const T4_STRATEGY_ROW: [[f64; 3]; 4] = [[0.0035, 0.022, 0.030], [0.060, 0.58, 0.68], [0.554, 0.579, 0.571], [0.525, 0.543, 0.552]];
// Table 5, providers x (excess, IR, accuracy, F1)
const T5: [[f64; 4]; 4] = [[0.013, 0.29, 0.560, 0.526], [0.019, 0.35, 0.555, 0.531], [0.022, 0.64, 0.568, 0.546], [0.021, 0.48, 0.589, 0.556]];
const PANELS: [Panel; 4] = [Panel::ExcessReturn, Panel::InformationRatio, Panel::Accuracy, Panel::F1];
const STRATEGIES: [SignalStrategy; 3] = [SignalStrategy::Naive, SignalStrategy::Structured, SignalStrategy::Cot];

fn table4_report() -> alphalab_core::PerformanceReport {
    let providers: Vec<ProviderId> = PROVIDERS.iter().map(|p| ProviderId::from(*p)).collect();
    let mut input = ReportInput::new(providers.clone(), STRATEGIES.to_vec());
    for (i, p) in providers.iter().enumerate() {
        for (j, s) in STRATEGIES.iter().enumerate() {
            let cell = MetricCell {
                excess_return: Some(T4_EXCESS[i][j]),
                information_ratio: Some(T4_IR[i][j]),
                accuracy: Some(T4_ACC[i][j]),
                f1: Some(T4_F1[i][j]),
                ..MetricCell::default()
            };
            input.insert(p.clone(), *s, cell);
        }
    }
    aggregate_report(&input, &ReportOptions::default()).expect("complete grid")
}

fn table4_to_table5() -> Verdict {
    let report = table4_report();
    let mut misses = Vec::new();
    let mut hits = 0;
    for (i, p) in PROVIDERS.iter().enumerate() {
        for (k, panel) in PANELS.iter().enumerate() {
            let got = report.provider_mean(*panel, &ProviderId::from(*p)).unwrap_or(f64::NAN);
            if close(got, T5[i][k], TABLE5_TOL) {
                hits += 1;
            } else {
                misses.push(format!("{p} {} {got:.4} vs {}", panel.slug(), T5[i][k]));
            }
        }
    }
    let mut detail = format!("{hits}/16 Table 5 values within ±{TABLE5_TOL}");
    if !misses.is_empty() {
        detail.push_str(&format!("; off: {}", misses.join(", ")));
    }
    Verdict::new(misses.is_empty(), detail)
}

fn table4_marginals() -> Verdict {
    let report = table4_report();
    let mut misses = Vec::new();
    for (k, panel) in PANELS.iter().enumerate() {
        let tol = if k == 0 { PANEL_A_MARGINAL_TOL } else { PANEL_BCD_MARGINAL_TOL };
        for (j, s) in STRATEGIES.iter().enumerate() {
            let got = report.strategy_mean(*panel, *s).unwrap_or(f64::NAN);
            if !close(got, T4_STRATEGY_ROW[k][j], tol) {
                misses.push(format!("{} {s} {got:.5} vs {}", panel.slug(), T4_STRATEGY_ROW[k][j]));
            }
        }
    }
    let detail = format!(
        "12 strategy marginals, ±{PANEL_A_MARGINAL_TOL} panel A, ±{PANEL_BCD_MARGINAL_TOL} panels B-D{}",
        if misses.is_empty() { String::new() } else { format!("; off: {}", misses.join(", ")) }
    );
    Verdict::new(misses.is_empty(), detail)
}

fn cumulative_constant_alpha() -> Verdict {
    let c = cumulative_excess(&[0.0402; 10]).expect("non-empty");
    let exact = c.arithmetic == 0.402;
    Verdict::new(exact, format!("10 x 0.0402 -> {} (target 0.402 exactly)", c.arithmetic))
}

// Scoring oracle: written from the model definition, sharing no code with the library.

fn oracle_scores(framework: &[CategorySpec], obs: &[MetricObservation]) -> BTreeMap<Ticker, f64> {
    let mut bounds: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for o in obs {
        let b = bounds.entry(o.metric.as_str()).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        b.0 = b.0.min(o.raw_value);
        b.1 = b.1.max(o.raw_value);
    }
    let mut unit: BTreeMap<(&Ticker, &str), f64> = BTreeMap::new();
    for o in obs {
        let metric = framework.iter().flat_map(|c| &c.metrics).find(|m| m.id == o.metric).unwrap();
        let (lo, hi) = bounds[o.metric.as_str()];
        let v = match metric.direction {
            _ if lo == hi && matches!(metric.direction, Direction::HigherBetter | Direction::LowerBetter) => 0.5,
            Direction::HigherBetter => (o.raw_value - lo) / (hi - lo),
            Direction::LowerBetter => (hi - o.raw_value) / (hi - lo),
            Direction::MidpointBetter => 1.0 - (o.raw_value - 50.0).abs() / 50.0,
            Direction::PreScored => o.raw_value,
        };
        unit.insert((&o.firm, o.metric.as_str()), v.clamp(0.0, 1.0));
    }
    let firms: std::collections::BTreeSet<&Ticker> = obs.iter().map(|o| &o.firm).collect();
    let mut out = BTreeMap::new();
    for firm in firms {
        let (mut num, mut den) = (0.0, 0.0);
        for c in framework {
            let (mut cn, mut cd) = (0.0, 0.0);
            for m in &c.metrics {
                if let Some(u) = unit.get(&(firm, m.id.as_str())) {
                    cn += u * m.sub_weight;
                    cd += m.sub_weight;
                }
            }
            if cd > 0.0 {
                num += (cn / cd) * c.weight;
                den += c.weight;
            }
        }
        out.insert(firm.clone(), num / den);
    }
    out
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    // push the rounding residue into the last weight so the sum is 1 to the ulp
    let partial: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - partial;
    w
}

fn random_case(rng: &mut ChaCha8Rng) -> (ScoringFramework, Vec<MetricObservation>) {
    let as_of = NaiveDate::from_ymd_opt(2025, 3, 31).unwrap();
    let n_cat = rng.random_range(1..=6);
    let cw = random_weights(rng, n_cat);
    let mut cats = Vec::new();
    let mut metric_no = 0;
    for (ci, weight) in cw.into_iter().enumerate() {
        let n_m = rng.random_range(1..=4);
        let metrics = random_weights(rng, n_m)
            .into_iter()
            .map(|sub_weight| {
                metric_no += 1;
                let direction = match rng.random_range(0..4) {
                    0 => Direction::HigherBetter,
                    1 => Direction::LowerBetter,
                    2 => Direction::MidpointBetter,
                    _ => Direction::PreScored,
                };
                MetricSpec { id: format!("m{metric_no}"), name: format!("metric {metric_no}"), sub_weight, direction, aliases: vec![] }
            })
            .collect();
        cats.push(CategorySpec { id: format!("c{ci}"), name: format!("category {ci}"), weight, metrics });
    }
    let framework = ScoringFramework::new(cats).expect("weights sum to one");
    let n_firms = rng.random_range(2..=15);
    let mut obs = Vec::new();
    for f in 0..n_firms {
        let mut any = false;
        for c in framework.categories() {
            for m in &c.metrics {
                if !rng.random_bool(0.85) {
                    continue;
                }
                any = true;
                let raw_value = match m.direction {
                    Direction::PreScored => rng.random_range(0.0..=1.0),
                    Direction::MidpointBetter => rng.random_range(0.0..=100.0),
                    // a coarse grid produces ties and degenerate ranges
                    _ if rng.random_bool(0.2) => rng.random_range(0..3) as f64,
                    _ => rng.random_range(-50.0..50.0),
                };
                obs.push(MetricObservation { firm: format!("F{f:02}").into(), metric: m.id.clone(), raw_value, as_of, source: "oracle".into() });
            }
        }
        if !any {
            let m = &framework.categories()[0].metrics[0];
            let raw_value = if m.direction == Direction::MidpointBetter { 50.0 } else { 0.5 };
            obs.push(MetricObservation { firm: format!("F{f:02}").into(), metric: m.id.clone(), raw_value, as_of, source: "oracle".into() });
        }
    }
    (framework, obs)
}

fn scoring_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c0e);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut monotone_checks = 0;
    for case in 0..SCORING_CASES {
        let (framework, mut obs) = random_case(&mut rng);
        let scored = match score_cross_section(&framework, &obs, None) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let oracle = oracle_scores(framework.categories(), &obs);
        for (firm, expected) in &oracle {
            let got = scored.get(firm).map(|s| s.composite.value).unwrap_or(f64::NAN);
            let err = (got - expected).abs();
            worst = worst.max(err);
            if !(err <= SCORING_ORACLE_TOL) {
                failures.push(format!("case {case} {firm}: {got} vs {expected}"));
            }
        }

        // permutation: reordering the observations changes nothing, bit for bit
        let mut shuffled = obs.clone();
        shuffled.shuffle(&mut rng);
        if score_cross_section(&framework, &shuffled, None).ok().as_ref() != Some(&scored) {
            failures.push(format!("case {case}: permutation changed the scores"));
        }

        // monotonicity: improving one oriented input never lowers that firm's composite
        let candidates: Vec<usize> = obs
            .iter()
            .enumerate()
            .filter(|(_, o)| {
                let (_, m) = framework.metric(&o.metric).unwrap();
                matches!(m.direction, Direction::HigherBetter | Direction::LowerBetter)
            })
            .map(|(i, _)| i)
            .collect();
        if let Some(&i) = candidates.get(rng.random_range(0..candidates.len().max(1))) {
            let (_, m) = framework.metric(&obs[i].metric).unwrap();
            let step = rng.random_range(0.1..20.0);
            let firm = obs[i].firm.clone();
            let before = scored[&firm].composite.value;
            obs[i].raw_value += if m.direction == Direction::HigherBetter { step } else { -step };
            let after = score_cross_section(&framework, &obs, None).unwrap()[&firm].composite.value;
            monotone_checks += 1;
            if after < before - SCORING_ORACLE_TOL {
                failures.push(format!("case {case}: improving {} lowered {firm} from {before} to {after}", obs[i].metric));
            }
        }
    }
    let detail = format!(
        "{SCORING_CASES} random frameworks, max |composite - oracle| {worst:.1e} (tol {SCORING_ORACLE_TOL:e}), {monotone_checks} monotonicity and {SCORING_CASES} permutation checks{}",
        if failures.is_empty() { String::new() } else { format!("; {} failures, first: {}", failures.len(), failures[0]) }
    );
    Verdict::new(failures.is_empty(), detail)
}

// Validator fixture corpus.

fn base_trace(firm: &str, cycle: &str) -> ReasoningTrace {
    ReasoningTrace {
        firm: firm.into(),
        session_id: "fixture".into(),
        cycle_id: cycle.into(),
        provider: "fixture".into(),
        strategy: SignalStrategy::Structured,
        reported_composite: None,
        stated_computed_composite: None,
        reported_categories: BTreeMap::new(),
        reported_sub_scores: BTreeMap::new(),
        weights_used: ScoringFramework::table_one(),
        free_text: String::new(),
    }
}

fn cited(score: f64, reference: &str) -> ReportedSubScore {
    ReportedSubScore {
        unit_score: Some(score),
        raw_value: Some(1.0),
        reference: Some(reference.into()),
        source: Some("CNMV".into()),
        flagged_missing: false,
    }
}

fn seeded_corpus() -> Vec<ReasoningTrace> {
    let mut out = Vec::new();

    let mut t = base_trace("BND", "2025-04");
    t.reported_composite = Some(1.2);
    out.push(t);

    let mut t = base_trace("FEA", "2025-04");
    t.reported_sub_scores.insert("pe_ratio".into(), cited(0.4, "2025-03-31"));
    t.reported_sub_scores.insert("pb_ratio".into(), cited(0.6, "2025-03-31"));
    t.reported_categories.insert("valuation".into(), 0.7);
    out.push(t);

    // 0.6 * 0.40 + 0.4 * 0.80 = 0.56, reported 0.71, inside the sub-score range
    let mut t = base_trace("AGG", "2025-04");
    t.reported_sub_scores.insert("pe_ratio".into(), cited(0.40, "2025-03-31"));
    t.reported_sub_scores.insert("pb_ratio".into(), cited(0.80, "2025-03-31"));
    t.reported_categories.insert("valuation".into(), 0.71);
    out.push(t);

    // same composite two months running although the categories moved
    for (cycle, v, g) in [("2025-04", 0.6, 0.8), ("2025-05", 0.8, 0.6)] {
        let mut t = base_trace("CRY", cycle);
        t.reported_categories.insert("valuation".into(), v);
        t.reported_categories.insert("growth".into(), g);
        t.reported_composite = Some(0.7);
        out.push(t);
    }

    let mut t = base_trace("ZER", "2025-04");
    let mut s = cited(0.0, "2025-03-31");
    s.raw_value = Some(0.0);
    s.flagged_missing = true;
    t.reported_sub_scores.insert("eps_growth".into(), s);
    out.push(t);

    let mut t = base_trace("CUT", "2025-04");
    t.reported_sub_scores.insert("momentum".into(), cited(0.5, "2025-04-02"));
    out.push(t);

    let mut t = base_trace("MIX", "2025-04");
    t.reported_sub_scores.insert("pe_ratio".into(), cited(0.5, "EPS: 2025; price: 2024"));
    out.push(t);

    for firm in ["UNA", "UNB", "UNC", "UND"] {
        let mut t = base_trace(firm, "2025-04");
        t.reported_composite = Some(0.85);
        out.push(t);
    }

    let mut t = base_trace("ADJ", "2025-04");
    t.stated_computed_composite = Some(0.58);
    t.reported_composite = Some(0.55);
    out.push(t);
    out
}

fn suite_for(calendar: &[MonthlyCycle]) -> SuiteConfig {
    SuiteConfig { cutoffs: calendar.iter().map(|c| (c.id.clone(), c.cutoff)).collect(), ..SuiteConfig::default() }
}

/// Structured answers of every provider for the first synthetic cycle,
/// which carries no planted defect.
fn clean_corpus(world: &SyntheticWorld) -> Vec<ReasoningTrace> {
    let mut out = Vec::new();
    {
        let cycle = &world.calendar[0].id;
        for (provider, ..) in alphalab_core::synthetic::PROVIDERS {
            let session = format!("{provider}-{cycle}-structured");
            let call = MockCall { session_id: session.clone(), turn: 0, prompt: String::new(), attachments: vec![] };
            let answer = world.respond(provider, &call).expect("structured answer");
            let parsed = extract_scores(&answer, &world.universe).expect("parses");
            let ctx = TraceContext { session_id: session.as_str().into(), cycle_id: cycle.clone(), provider: provider.into(), strategy: SignalStrategy::Structured };
            out.extend(to_trace(&parsed, &ctx, &world.framework));
        }
    }
    out
}

fn validator_fixtures() -> Verdict {
    let expected = [
        FindingCode::Bounds,
        FindingCode::Feasible,
        FindingCode::C1,
        FindingCode::C2,
        FindingCode::C4,
        FindingCode::Cutoff,
        FindingCode::A3,
        FindingCode::D3,
        FindingCode::D5,
    ];
    let cutoffs: BTreeMap<CycleId, NaiveDate> =
        [("2025-04", (2025, 3, 31)), ("2025-05", (2025, 4, 30))].into_iter().map(|(c, (y, m, d))| (c.into(), NaiveDate::from_ymd_opt(y, m, d).unwrap())).collect();
    let config = SuiteConfig { cutoffs, ..SuiteConfig::default() };
    let seeded = run_suite(&seeded_corpus(), &config);
    let mut got: Vec<FindingCode> = seeded.findings.iter().map(|f| f.code).collect();
    got.sort();
    let mut want = expected.to_vec();
    want.sort();
    let seeded_ok = got == want;

    let world = SyntheticWorld::generate(DEFAULT_SEED);
    let clean = clean_corpus(&world);
    let clean_report = run_suite(&clean, &suite_for(&world.calendar));
    let pass = seeded_ok && clean_report.is_clean();
    let mut detail = format!(
        "seeded corpus -> {} findings {:?}; clean corpus of {} traces -> {} findings",
        seeded.findings.len(),
        got.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
        clean.len(),
        clean_report.findings.len()
    );
    if let Some(f) = clean_report.findings.first() {
        detail.push_str(&format!("; first clean finding {} {} {}", f.code, f.firm, f.evidence));
    }
    Verdict::new(pass, detail)
}

// Statistics oracles.

fn hac_oracle(a: &[f64], lag: usize) -> f64 {
    let n = a.len() as f64;
    let m = a.iter().sum::<f64>() / n;
    let gamma = |j: usize| (j..a.len()).map(|t| (a[t] - m) * (a[t - j] - m)).sum::<f64>() / n;
    let mut s = gamma(0);
    for j in 1..=lag {
        s += 2.0 * (1.0 - j as f64 / (lag + 1) as f64) * gamma(j);
    }
    m / (s / n).sqrt()
}

/// Brute-force confusion enumeration: (accuracy, mean of class F1s).
fn confusion_oracle(panel: &[CrossSection]) -> (f64, f64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for cs in panel {
        for (t, s) in &cs.scores {
            let predicted = *s >= 0.5;
            let actual = cs.realized[t] > cs.benchmark;
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    let f1 = |tp: u64, fp: u64, fn_: u64| if 2 * tp + fp + fn_ == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    let acc = (tp + tn) as f64 / (tp + fp + tn + fn_) as f64;
    (acc, (f1(tp, fp, fn_) + f1(tn, fn_, fp)) / 2.0)
}

fn random_panel(rng: &mut ChaCha8Rng, cycles: usize, firms: usize, coarse: bool) -> Vec<CrossSection> {
    (0..cycles)
        .map(|c| {
            let benchmark = if coarse { rng.random_range(-2..=2) as f64 / 100.0 } else { rng.random_range(-0.05..0.05) };
            let mut scores = BTreeMap::new();
            let mut realized = BTreeMap::new();
            for f in 0..firms {
                let t = Ticker::from(format!("T{f:03}").as_str());
                let (s, r) = if coarse {
                    (rng.random_range(0..=10) as f64 / 10.0, rng.random_range(-3..=3) as f64 / 100.0)
                } else {
                    (rng.random::<f64>(), rng.random_range(-0.1..0.1))
                };
                scores.insert(t.clone(), s);
                realized.insert(t, r);
            }
            CrossSection { cycle_id: format!("c{c}").as_str().into(), scores, realized, benchmark }
        })
        .collect()
}

fn statistics_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57a7);
    let normal = Normal::new(0.01, 0.03).unwrap();
    let mut problems = Vec::new();

    let mut worst_hac: f64 = 0.0;
    for _ in 0..HAC_SERIES {
        let mut a: Vec<f64> = Vec::with_capacity(HAC_LEN);
        let mut prev = 0.0;
        for _ in 0..HAC_LEN {
            // mild persistence so the lag-1 term matters
            let x = 0.4 * prev + normal.sample(&mut rng);
            a.push(x);
            prev = x;
        }
        let got = nw_tstat(&a, 1).unwrap();
        let want = hac_oracle(&a, 1);
        let err = (got - want).abs() / want.abs().max(1.0);
        worst_hac = worst_hac.max(err);
    }
    if !(worst_hac <= HAC_TOL) {
        problems.push(format!("HAC error {worst_hac:e}"));
    }

    // deviations alternate with zeros, so every lag-1 product vanishes
    let mut worst_classical: f64 = 0.0;
    for _ in 0..HAC_SERIES {
        let mut u: Vec<f64> = (0..HAC_LEN / 2).map(|_| rng.random_range(-0.03..0.03)).collect();
        let shift = u.iter().sum::<f64>() / u.len() as f64;
        u.iter_mut().for_each(|x| *x -= shift);
        let m = rng.random_range(-0.02..0.04);
        let a: Vec<f64> = u.iter().flat_map(|d| [m + d, m]).collect();
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let classical = mean / (var / n).sqrt();
        let got = nw_tstat(&a, 1).unwrap();
        worst_classical = worst_classical.max((got - classical).abs() / classical.abs().max(1.0));
    }
    if !(worst_classical <= HAC_TOL) {
        problems.push(format!("zero-autocovariance error {worst_classical:e}"));
    }

    let config = ClassificationConfig::default();
    let mut mismatches = 0;
    for _ in 0..CONFUSION_FIXTURES {
        let cycles = rng.random_range(1..=4);
        let firms = rng.random_range(1..=12);
        let coarse = rng.random_bool(0.5);
        let panel = random_panel(&mut rng, cycles, firms, coarse);
        let (acc, f1) = confusion_oracle(&panel);
        let got_acc = directional_accuracy(&panel, &config).unwrap();
        let got_f1 = weighted_f1(&panel, &config).unwrap().value;
        if got_acc != acc || got_f1 != f1 {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        problems.push(format!("{mismatches} confusion mismatches"));
    }

    let panel = random_panel(&mut rng, 1, RANDOM_SAMPLES, false);
    let random_acc = directional_accuracy(&panel, &config).unwrap();
    if (random_acc - 0.5).abs() > RANDOM_ACCURACY_BAND {
        problems.push(format!("random accuracy {random_acc}"));
    }

    let detail = format!(
        "HAC max rel err {worst_hac:.1e}, zero-γ1 vs classical {worst_classical:.1e} (tol {HAC_TOL:e}); {} confusion fixtures exact: {}; random accuracy {random_acc:.4} (0.50 ± {RANDOM_ACCURACY_BAND})",
        CONFUSION_FIXTURES,
        mismatches == 0
    );
    Verdict::new(problems.is_empty(), detail)
}

// End to end.

fn open_pipeline(config: &Path) -> alphalab_core::Result<Pipeline> {
    let options = OpenOptions { auto_review: true, retry: RetryPolicy::immediate(), ..OpenOptions::default() };
    Pipeline::open(Config::load(config)?, options)
}

fn end_to_end() -> Verdict {
    match end_to_end_inner() {
        Ok(v) => v,
        Err(e) => Verdict::new(false, format!("pipeline error: {e}")),
    }
}

fn end_to_end_inner() -> alphalab_core::Result<Verdict> {
    let dir = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
    let world = SyntheticWorld::generate(DEFAULT_SEED);
    let config_path = world.write_workspace(dir.path()).map_err(|e| Error::io(dir.path(), e))?;

    let (report_json, report_text, cycles) = {
        let p = open_pipeline(&config_path)?;
        p.run_all(None, None)?;
        p.backtest()?;
        let report = p.report()?;
        let cycles = p.state()?.return_series().first().map_or(0, |s| s.records.len());
        (serde_json::to_vec(&report).unwrap(), report.to_text(), cycles)
    };

    let replayed = RunLedger::replay(dir.path().join("ledger.jsonl"))?.state;
    let rebuilt = report_from_state(&replayed, &Config::load(&config_path)?.evaluation)?;
    let stored = replayed.reports.last().map(|r| serde_json::to_vec(r).unwrap());
    let identical = serde_json::to_vec(&rebuilt).unwrap() == report_json && rebuilt.to_text() == report_text && stored.as_ref() == Some(&report_json);

    // a mid-month signal slipped into the ledger must stop the backtest
    let cycle = &world.calendar[3];
    let mut signal = replayed.signals_for(&"atlas".into(), SignalStrategy::Naive).into_iter().find(|s| s.cycle_id == cycle.id).expect("signal recorded");
    signal.signal_date = cycle.first_day + chrono::Days::new(14);
    RunLedger::open(dir.path().join("ledger.jsonl"))?.persist_event(Some(&cycle.id), None, LedgerEvent::Signal { signal })?;
    let p = open_pipeline(&config_path)?;
    let look_ahead = matches!(p.backtest(), Err(Error::Backtest(BacktestError::LookAheadViolation { .. })));
    let direct = backtest_state(&p.state()?, p.market(), p.calendar(), 5);
    let look_ahead = look_ahead && matches!(direct, Err(Error::Backtest(BacktestError::LookAheadViolation { .. })));

    let detail = format!(
        "{cycles}-cycle mock run, {} report bytes; replayed report identical: {identical}; mid-month signal -> LookAheadViolation: {look_ahead}",
        report_json.len()
    );
    Ok(Verdict::new(cycles == 10 && identical && look_ahead, detail))
}

fn backtest_antisymmetry() -> Verdict {
    let world = SyntheticWorld::generate(DEFAULT_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(0xa5a5);
    let grid: Vec<u32> = (0..=100).collect();
    let tickers: Vec<Ticker> = world.universe.tickers().cloned().collect();
    let mut failures = 0;
    for case in 0..ANTISYMMETRY_CASES {
        let cycle = &world.calendar[case % world.calendar.len()];
        let mut values = grid.clone();
        values.shuffle(&mut rng);
        let scores: BTreeMap<Ticker, f64> = tickers.iter().cloned().zip(values.iter().map(|v| *v as f64 / 100.0)).collect();
        let mirrored: BTreeMap<Ticker, f64> = scores.iter().map(|(t, s)| (t.clone(), 1.0 - s)).collect();
        let set = |scores| SignalSet { cycle_id: cycle.id.clone(), provider: "anti".into(), strategy: SignalStrategy::Naive, scores, signal_date: cycle.first_day };
        let k = rng.random_range(1..=tickers.len() / 2);
        let a: CycleRecord = run_cycle(&set(scores), &world.market, cycle, k).unwrap();
        let b: CycleRecord = run_cycle(&set(mirrored), &world.market, cycle, k).unwrap();
        let mut la = a.long.clone();
        let mut sb = b.short.clone();
        la.sort();
        sb.sort();
        let mut lb = b.long.clone();
        let mut sa = a.short.clone();
        lb.sort();
        sa.sort();
        if !(la == sb && lb == sa && a.portfolio_return == -b.portfolio_return) {
            failures += 1;
        }
    }
    Verdict::new(
        failures == 0,
        format!("{ANTISYMMETRY_CASES} signal sets scored s and 1 - s: legs swapped and return negated exactly in {} cases", ANTISYMMETRY_CASES - failures),
    )
}
