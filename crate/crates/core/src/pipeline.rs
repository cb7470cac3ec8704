//! Cycle orchestration used by the CLI: prompts, parsing, validation,
//! signals, backtest and report. Every step lands in the run ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::backtest::{read_calendar, run_cycles, MonthlyCycle, ReturnSeries, SignalSet};
use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::evaluate::{blend_signal_sets, report_from_series, EvaluationConfig, PerformanceReport};
use crate::gateway::{
    Attachment, Gateway, HttpChatProvider, MockProvider, PromptParams, PromptTemplate, Provider, RetryPolicy, SessionKey, SessionRecord,
    Strategy, TranscriptEntry,
};
use crate::parse::{extract_scores, to_trace, TraceContext, Universe};
use crate::review::{ReviewService, ReviewSetup};
use crate::scoring::ScoringFramework;
use crate::store::{Config, LedgerEvent, LedgerState, MarketDataTable, RunLedger};
use crate::synthetic::SyntheticWorld;
use crate::types::{CycleId, ProviderId, SignalStrategy, Ticker};
use crate::validate::{run_suite, ReasoningTrace, SuiteConfig, ValidationFinding};

/// Correction rounds per item in unattended review.
pub const AUTO_REVIEW_ROUNDS: u32 = 3;

const HTTP_TIMEOUT: Duration = Duration::from_secs(180);

pub struct OpenOptions {
    /// Serve every provider from the mock adapter.
    pub force_mock: bool,
    /// Approve chain-of-thought items without a reviewer.
    pub auto_review: bool,
    pub clock: Arc<dyn Clock>,
    pub retry: RetryPolicy,
}

impl Default for OpenOptions {
    fn default() -> Self {
        Self { force_mock: false, auto_review: false, clock: Arc::new(SystemClock), retry: RetryPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub cycle_id: CycleId,
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
    pub traces: usize,
    pub findings: Vec<ValidationFinding>,
    pub signal: Option<SignalSet>,
    /// Chain-of-thought items still waiting for a reviewer.
    pub pending_review: usize,
    pub skipped: Option<String>,
}

impl RunOutcome {
    fn new(cycle: &CycleId, provider: &ProviderId, strategy: SignalStrategy) -> Self {
        Self {
            cycle_id: cycle.clone(),
            provider: provider.clone(),
            strategy,
            traces: 0,
            findings: Vec::new(),
            signal: None,
            pending_review: 0,
            skipped: None,
        }
    }

    fn skipped(mut self, reason: impl Into<String>) -> Self {
        self.skipped = Some(reason.into());
        self
    }
}

type SeriesId = (CycleId, ProviderId, SignalStrategy);

#[derive(Default)]
struct Memo {
    signals: BTreeSet<SeriesId>,
    traces: BTreeMap<SeriesId, Vec<ReasoningTrace>>,
}

pub struct Pipeline {
    config: Config,
    universe: Universe,
    framework: ScoringFramework,
    calendar: Vec<MonthlyCycle>,
    market: MarketDataTable,
    gateway: Arc<Gateway>,
    ledger: Arc<Mutex<RunLedger>>,
    review: Arc<ReviewService>,
    suite: SuiteConfig,
    auto_review: bool,
    memo: Mutex<Memo>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("ledger", &self.config.ledger_file).finish_non_exhaustive()
    }
}

/// Universe named by the config, narrowed to its ticker list.
pub fn load_universe(config: &Config) -> Result<Universe> {
    let universe = match &config.universe_file {
        Some(path) => Universe::load(path).map_err(Error::Config)?,
        None => Universe::ibex35(),
    };
    if config.universe.is_empty() {
        return Ok(universe);
    }
    if let Some(missing) = config.universe.iter().find(|t| !universe.contains(t.as_str())) {
        return Err(Error::Config(format!("ticker {missing} is not in the universe table")));
    }
    universe.subset(&config.universe).map_err(Error::Config)
}

pub fn load_framework(config: &Config) -> Result<ScoringFramework> {
    Ok(match &config.framework_file {
        Some(path) => ScoringFramework::load(path)?,
        None => ScoringFramework::table_one(),
    })
}

fn build_gateway(config: &Config, universe: &Universe, calendar: &[MonthlyCycle], options: &OpenOptions) -> Result<Gateway> {
    let mut gateway = Gateway::new(config.parallelism).with_retry(options.retry).with_clock(options.clock.clone());
    let mut world: Option<Arc<SyntheticWorld>> = None;
    for p in &config.providers {
        let profile = p.profile();
        let provider: Arc<dyn Provider> = if p.mock || options.force_mock {
            match (&p.fixtures, config.synthetic_seed) {
                (Some(dir), _) => Arc::new(MockProvider::from_dir_with_profile(profile, dir)),
                (None, Some(seed)) => {
                    let w = world.get_or_insert_with(|| Arc::new(SyntheticWorld::with_shape(seed, universe.clone(), calendar.to_vec())));
                    Arc::new(w.mock_provider(profile))
                }
                (None, None) => {
                    return Err(Error::Config(format!("mock provider {} needs fixtures or synthetic_seed", p.id)));
                }
            }
        } else {
            Arc::new(HttpChatProvider::new(profile, HTTP_TIMEOUT).map_err(|e| Error::Config(e.to_string()))?)
        };
        gateway.register(provider);
    }
    Ok(gateway)
}

/// Filing documents for `firm` in `{filings_dir}/{cycle}/`, by name.
///
/// A file belongs to a firm when its stem is the ticker or starts with the
/// ticker followed by `_` or `-`.
pub fn filing_paths(filings_dir: &Path, cycle: &CycleId, firm: &Ticker) -> Vec<PathBuf> {
    let Ok(entries) = std::fs::read_dir(filings_dir.join(cycle.as_str())) else {
        return Vec::new();
    };
    let t = firm.as_str();
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            stem == t || stem.strip_prefix(t).is_some_and(|rest| rest.starts_with('_') || rest.starts_with('-'))
        })
        .collect();
    paths.sort();
    paths
}

/// Return series for every provider with signals in `state`.
///
/// When any filings signal exists, each base strategy also gets its
/// blended variant; firm-months without a filings score keep the base score.
pub fn backtest_state(state: &LedgerState, market: &MarketDataTable, calendar: &[MonthlyCycle], k: usize) -> Result<Vec<ReturnSeries>> {
    let providers: BTreeSet<&ProviderId> = state.signals.keys().map(|key| &key.provider).collect();
    let blend = state.signals.keys().any(|key| key.strategy == SignalStrategy::Filings);
    let mut out = Vec::new();
    for provider in providers {
        let filings: BTreeMap<CycleId, SignalSet> =
            state.signals_for(provider, SignalStrategy::Filings).into_iter().map(|s| (s.cycle_id.clone(), s)).collect();
        for base in SignalStrategy::BASE {
            let history = state.signals_for(provider, base);
            if history.is_empty() {
                continue;
            }
            let cycles: BTreeSet<&CycleId> = history.iter().map(|s| &s.cycle_id).collect();
            let cal: Vec<MonthlyCycle> = calendar.iter().filter(|c| cycles.contains(&c.id)).cloned().collect();
            out.push(run_cycles(&history, market, &cal, k)?);
            if blend {
                let blended_strategy = base.with_filings().expect("base strategies have a blend");
                let blended: Vec<SignalSet> = history
                    .iter()
                    .map(|s| match filings.get(&s.cycle_id) {
                        Some(f) => blend_signal_sets(s, f).0,
                        None => SignalSet { strategy: blended_strategy, ..s.clone() },
                    })
                    .collect();
                out.push(run_cycles(&blended, market, &cal, k)?);
            }
        }
    }
    Ok(out)
}

/// Report derived purely from the portfolio records in `state`.
pub fn report_from_state(state: &LedgerState, evaluation: &EvaluationConfig) -> Result<PerformanceReport> {
    Ok(report_from_series(&state.return_series(), evaluation)?)
}

impl Pipeline {
    pub fn open(config: Config, options: OpenOptions) -> Result<Self> {
        config.check()?;
        let universe = load_universe(&config)?;
        if universe.len() < 2 * config.positions {
            return Err(Error::Config(format!("universe of {} firms cannot fill {} positions per leg", universe.len(), config.positions)));
        }
        let framework = load_framework(&config)?;
        let calendar = read_calendar(&config.calendar_file)?;
        let market = MarketDataTable::ingest_prices(&config.market_data_file)?;
        let gateway = Arc::new(build_gateway(&config, &universe, &calendar, &options)?);

        let state = if config.ledger_file.exists() { RunLedger::replay(&config.ledger_file)?.state } else { LedgerState::default() };
        let ledger = Arc::new(Mutex::new(RunLedger::open_with_clock(&config.ledger_file, options.clock.clone())?));
        let suite = SuiteConfig {
            tolerance: config.thresholds.aggregation_tolerance,
            cluster_min: config.thresholds.cluster_min,
            max_period_skew_months: config.thresholds.max_period_skew_months,
            cutoffs: calendar.iter().map(|c| (c.id.clone(), c.cutoff)).collect(),
            missing_inputs: BTreeSet::new(),
        };
        let review = ReviewService::new(ReviewSetup {
            ledger: ledger.clone(),
            gateway: gateway.clone(),
            universe: universe.clone(),
            framework: framework.clone(),
            suite: suite.clone(),
            calendar: calendar.clone(),
        })
        .with_clock(options.clock.clone());
        review.restore(&state);

        let mut memo = Memo::default();
        for key in state.signals.keys() {
            memo.signals.insert((key.cycle_id.clone(), key.provider.clone(), key.strategy));
        }
        for (key, trace) in &state.traces {
            memo.traces.entry((key.cycle_id.clone(), key.provider.clone(), key.strategy)).or_default().push(trace.clone());
        }
        Ok(Self {
            config,
            universe,
            framework,
            calendar,
            market,
            gateway,
            ledger,
            review: Arc::new(review),
            suite,
            auto_review: options.auto_review,
            memo: Mutex::new(memo),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn calendar(&self) -> &[MonthlyCycle] {
        &self.calendar
    }

    pub fn market(&self) -> &MarketDataTable {
        &self.market
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn review(&self) -> &Arc<ReviewService> {
        &self.review
    }

    pub fn ledger_path(&self) -> &Path {
        &self.config.ledger_file
    }

    /// State rebuilt from the ledger file.
    pub fn state(&self) -> Result<LedgerState> {
        Ok(RunLedger::replay(&self.config.ledger_file)?.state)
    }

    fn cycle(&self, id: &CycleId) -> Result<&MonthlyCycle> {
        self.calendar.iter().find(|c| &c.id == id).ok_or_else(|| Error::Usage(format!("cycle {id} is not in the calendar")))
    }

    fn persist(&self, cycle: &CycleId, model_version: Option<&str>, event: LedgerEvent) -> Result<()> {
        self.ledger.lock().expect("ledger lock").persist_event(Some(cycle), model_version, event)?;
        Ok(())
    }

    fn display_names(&self) -> Vec<String> {
        self.universe.members().iter().map(|m| m.name.clone()).collect()
    }

    fn has_signal(&self, cycle: &CycleId, provider: &ProviderId, strategy: SignalStrategy) -> bool {
        self.memo.lock().expect("memo lock").signals.contains(&(cycle.clone(), provider.clone(), strategy))
    }

    fn publish(&self, signal: &SignalSet) -> Result<()> {
        signal.check()?;
        self.persist(&signal.cycle_id, None, LedgerEvent::Signal { signal: signal.clone() })?;
        self.memo.lock().expect("memo lock").signals.insert((signal.cycle_id.clone(), signal.provider.clone(), signal.strategy));
        Ok(())
    }

    /// Opens the session for `key`, reusing one that was opened but never
    /// answered (an earlier run that failed in transport).
    fn session_for(&self, key: SessionKey) -> Result<(SessionRecord, bool)> {
        if let Some(existing) = self.gateway.session(&key.session_id()) {
            if existing.transcript.is_empty() {
                return Ok((existing, false));
            }
        }
        Ok((self.gateway.open_fresh_session(key)?, true))
    }

    fn query(&self, key: SessionKey, prompt: &str, attachments: &[Attachment]) -> Result<(SessionRecord, bool, TranscriptEntry)> {
        let (session, fresh) = self.session_for(key)?;
        if fresh {
            self.persist(&session.key.cycle, Some(&session.model_version), LedgerEvent::SessionOpened { session: session.clone() })?;
        }
        let entry = self.gateway.submit_query(&session.session_id, prompt, attachments)?;
        Ok((session, fresh, entry))
    }

    fn record_exchange(&self, session: &SessionRecord, entry: &TranscriptEntry) -> Result<()> {
        self.persist(
            &session.key.cycle,
            entry.model_version.as_deref().or(Some(&session.model_version)),
            LedgerEvent::Exchange { session_id: session.session_id.clone(), entry: entry.clone() },
        )
    }

    /// Findings for this cycle's traces; the previous cycle rides along so
    /// carry-over can be detected.
    fn validate(&self, cycle: &CycleId, provider: &ProviderId, strategy: SignalStrategy, traces: &[ReasoningTrace]) -> Vec<ValidationFinding> {
        let previous = self
            .calendar
            .iter()
            .position(|c| &c.id == cycle)
            .and_then(|i| i.checked_sub(1))
            .map(|i| self.calendar[i].id.clone());
        let mut corpus: Vec<ReasoningTrace> = previous
            .and_then(|p| self.memo.lock().expect("memo lock").traces.get(&(p, provider.clone(), strategy)).cloned())
            .unwrap_or_default();
        corpus.extend_from_slice(traces);
        run_suite(&corpus, &self.suite).findings.into_iter().filter(|f| &f.cycle_id == cycle).collect()
    }

    /// Executes one cycle of one strategy for one provider.
    pub fn run(&self, cycle_id: &CycleId, provider: &ProviderId, strategy: SignalStrategy) -> Result<RunOutcome> {
        self.gateway.provider(provider)?;
        let cycle = self.cycle(cycle_id)?.clone();
        match strategy {
            SignalStrategy::Naive | SignalStrategy::Structured => self.run_prompted(&cycle, provider, strategy),
            SignalStrategy::Cot => self.run_cot(&cycle, provider),
            SignalStrategy::Filings => self.run_filings(&cycle, provider),
            other => Err(Error::Usage(format!("{other} is derived during backtest and cannot be run directly"))),
        }
    }

    fn run_prompted(&self, cycle: &MonthlyCycle, provider: &ProviderId, strategy: SignalStrategy) -> Result<RunOutcome> {
        let outcome = RunOutcome::new(&cycle.id, provider, strategy);
        if self.has_signal(&cycle.id, provider, strategy) {
            return Ok(outcome.skipped("signal already recorded"));
        }
        let template = if strategy == SignalStrategy::Naive { Strategy::Naive } else { Strategy::Structured };
        let params = PromptParams {
            query_date: Some(cycle.first_day),
            cutoff_date: Some(cycle.cutoff),
            firms: self.display_names(),
            correction_text: None,
            attachment_count: 0,
        };
        let prompt = PromptTemplate::builtin(template).render(&params)?;
        let key = SessionKey { provider: provider.clone(), cycle: cycle.id.clone(), strategy: template, firm: None };
        let (session, _, entry) = self.query(key, &prompt, &[])?;
        self.record_exchange(&session, &entry)?;

        let parsed = extract_scores(&entry.response, &self.universe)?;
        if let Some(reason) = &parsed.table_error {
            tracing::warn!(cycle = %cycle.id, %provider, %reason, "metric table ignored");
        }
        let ctx = TraceContext { session_id: session.session_id.clone(), cycle_id: cycle.id.clone(), provider: provider.clone(), strategy };
        let traces = to_trace(&parsed, &ctx, &self.framework);
        for trace in &traces {
            trace.check_invariants()?;
            self.persist(&cycle.id, None, LedgerEvent::Trace { trace: trace.clone() })?;
        }
        let findings = self.validate(&cycle.id, provider, strategy, &traces);
        self.persist(
            &cycle.id,
            None,
            LedgerEvent::Findings { cycle_id: cycle.id.clone(), provider: provider.clone(), strategy, findings: findings.clone() },
        )?;
        self.memo.lock().expect("memo lock").traces.insert((cycle.id.clone(), provider.clone(), strategy), traces.clone());

        let signal = SignalSet {
            cycle_id: cycle.id.clone(),
            provider: provider.clone(),
            strategy,
            scores: parsed.scores.clone(),
            signal_date: cycle.first_day,
        };
        self.publish(&signal)?;

        let mut outcome = RunOutcome { traces: traces.len(), findings: findings.clone(), signal: Some(signal), ..outcome };
        if strategy == SignalStrategy::Structured {
            let cot: Vec<ReasoningTrace> = traces.into_iter().map(|t| ReasoningTrace { strategy: SignalStrategy::Cot, ..t }).collect();
            outcome.pending_review = self.review.open_items(&session.session_id, &cot, &findings)?.len();
        }
        Ok(outcome)
    }

    fn run_cot(&self, cycle: &MonthlyCycle, provider: &ProviderId) -> Result<RunOutcome> {
        let outcome = RunOutcome::new(&cycle.id, provider, SignalStrategy::Cot);
        if self.has_signal(&cycle.id, provider, SignalStrategy::Cot) {
            return Ok(outcome.skipped("signal already recorded"));
        }
        let items: Vec<_> = self.review.items(&cycle.id).into_iter().filter(|i| &i.provider == provider).collect();
        if items.is_empty() {
            return Err(Error::Usage(format!("no review items for {provider} in {}; run the structured strategy first", cycle.id)));
        }
        let findings: Vec<ValidationFinding> = items.iter().flat_map(|i| i.findings.iter().cloned()).collect();
        let outcome = RunOutcome { traces: items.len(), findings, ..outcome };
        if !self.auto_review {
            let pending = self.review.list_pending(&cycle.id)?.iter().filter(|i| &i.provider == provider).count();
            return Ok(RunOutcome { pending_review: pending, ..outcome });
        }
        let signal = self.review.auto_review(&cycle.id, provider, AUTO_REVIEW_ROUNDS)?;
        if let Some(s) = &signal {
            self.memo.lock().expect("memo lock").signals.insert((s.cycle_id.clone(), s.provider.clone(), s.strategy));
        }
        Ok(RunOutcome { signal, ..outcome })
    }

    fn run_filings(&self, cycle: &MonthlyCycle, provider: &ProviderId) -> Result<RunOutcome> {
        let outcome = RunOutcome::new(&cycle.id, provider, SignalStrategy::Filings);
        if self.has_signal(&cycle.id, provider, SignalStrategy::Filings) {
            return Ok(outcome.skipped("signal already recorded"));
        }
        if !self.gateway.provider(provider)?.profile().capabilities.attachments {
            return Ok(outcome.skipped("provider does not accept attachments"));
        }
        let Some(dir) = &self.config.filings_dir else {
            return Ok(outcome.skipped("no filings_dir configured"));
        };
        let mut jobs = Vec::new();
        for m in self.universe.members() {
            let paths = filing_paths(dir, &cycle.id, &m.ticker);
            if paths.is_empty() {
                continue;
            }
            let attachments =
                paths.iter().map(|p| Attachment::load(p).map_err(|e| Error::io(p, e))).collect::<Result<Vec<_>>>()?;
            let params = PromptParams {
                query_date: Some(cycle.first_day),
                cutoff_date: Some(cycle.cutoff),
                firms: vec![m.name.clone()],
                correction_text: None,
                attachment_count: attachments.len(),
            };
            let prompt = PromptTemplate::builtin(Strategy::Filings).render(&params)?;
            let key = SessionKey { provider: provider.clone(), cycle: cycle.id.clone(), strategy: Strategy::Filings, firm: Some(m.ticker.clone()) };
            jobs.push((m.ticker.clone(), key, prompt, attachments));
        }
        if jobs.is_empty() {
            return Ok(outcome.skipped("no filings found for this cycle"));
        }

        // sessions are independent; the gateway bounds how many run at once
        let results: Vec<Result<(SessionRecord, bool, TranscriptEntry)>> = std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(_, key, prompt, attachments)| {
                    s.spawn(move || {
                        let (session, fresh) = self.session_for(key.clone())?;
                        let entry = self.gateway.submit_query(&session.session_id, prompt, attachments)?;
                        Ok((session, fresh, entry))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("filings worker panicked")).collect()
        });

        let mut scores = BTreeMap::new();
        let mut traces = Vec::new();
        for ((firm, _, _, _), result) in jobs.iter().zip(results) {
            let (session, fresh, entry) = result?;
            if fresh {
                self.persist(&cycle.id, Some(&session.model_version), LedgerEvent::SessionOpened { session: session.clone() })?;
            }
            self.record_exchange(&session, &entry)?;
            let parsed = match extract_scores(&entry.response, &self.universe) {
                Ok(p) => p,
                Err(e) => {
                    tracing::warn!(cycle = %cycle.id, %provider, %firm, error = %e, "filings answer unusable");
                    continue;
                }
            };
            let Some(score) = parsed.scores.get(firm).copied() else {
                tracing::warn!(cycle = %cycle.id, %provider, %firm, "filings answer has no score for the firm");
                continue;
            };
            scores.insert(firm.clone(), score);
            let ctx = TraceContext {
                session_id: session.session_id.clone(),
                cycle_id: cycle.id.clone(),
                provider: provider.clone(),
                strategy: SignalStrategy::Filings,
            };
            for trace in to_trace(&parsed, &ctx, &self.framework).into_iter().filter(|t| &t.firm == firm) {
                self.persist(&cycle.id, None, LedgerEvent::Trace { trace: trace.clone() })?;
                traces.push(trace);
            }
        }
        let findings = self.validate(&cycle.id, provider, SignalStrategy::Filings, &traces);
        self.persist(
            &cycle.id,
            None,
            LedgerEvent::Findings { cycle_id: cycle.id.clone(), provider: provider.clone(), strategy: SignalStrategy::Filings, findings: findings.clone() },
        )?;
        self.memo.lock().expect("memo lock").traces.insert((cycle.id.clone(), provider.clone(), SignalStrategy::Filings), traces.clone());
        if scores.is_empty() {
            return Ok(RunOutcome { findings, ..outcome.skipped("no usable filings answers") });
        }
        let signal = SignalSet { cycle_id: cycle.id.clone(), provider: provider.clone(), strategy: SignalStrategy::Filings, scores, signal_date: cycle.first_day };
        self.publish(&signal)?;
        Ok(RunOutcome { traces: traces.len(), findings, signal: Some(signal), ..outcome })
    }

    /// Every strategy for every provider over every calendar cycle, in
    /// calendar order. Providers run concurrently within a cycle.
    pub fn run_all(&self, cycles: Option<&[CycleId]>, providers: Option<&[ProviderId]>) -> Result<Vec<RunOutcome>> {
        let all_providers: Vec<ProviderId> = self.gateway.provider_ids().cloned().collect();
        let providers = providers.map_or(all_providers, <[ProviderId]>::to_vec);
        let cycles: Vec<CycleId> = cycles.map_or_else(|| self.calendar.iter().map(|c| c.id.clone()).collect(), <[CycleId]>::to_vec);
        let strategies = [SignalStrategy::Naive, SignalStrategy::Structured, SignalStrategy::Cot, SignalStrategy::Filings];
        let mut outcomes = Vec::new();
        for cycle in &cycles {
            let per_provider: Vec<Result<Vec<RunOutcome>>> = std::thread::scope(|s| {
                let handles: Vec<_> = providers
                    .iter()
                    .map(|p| s.spawn(move || strategies.iter().map(|st| self.run(cycle, p, *st)).collect::<Result<Vec<_>>>()))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("provider worker panicked")).collect()
            });
            for r in per_provider {
                outcomes.extend(r?);
            }
        }
        Ok(outcomes)
    }

    /// Backtests every recorded signal series and writes the portfolio
    /// records to the ledger.
    pub fn backtest(&self) -> Result<Vec<ReturnSeries>> {
        let state = self.state()?;
        let series = backtest_state(&state, &self.market, &self.calendar, self.config.positions)?;
        for s in &series {
            for record in &s.records {
                let known = state.portfolios.get(&(s.provider.clone(), s.strategy)).is_some_and(|rs| rs.contains(record));
                if !known {
                    self.persist(
                        &record.cycle_id,
                        None,
                        LedgerEvent::Portfolio { provider: s.provider.clone(), strategy: s.strategy, record: record.clone() },
                    )?;
                }
            }
        }
        Ok(series)
    }

    /// Metrics over the ledger's portfolio records, appended as a report event.
    pub fn report(&self) -> Result<PerformanceReport> {
        let report = report_from_state(&self.state()?, &self.config.evaluation)?;
        let cycle = self.calendar.last().map(|c| c.id.clone()).unwrap_or_else(|| CycleId::from(""));
        self.persist(&cycle, None, LedgerEvent::Report { report: report.clone() })?;
        Ok(report)
    }
}
