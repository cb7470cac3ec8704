//! Human review of chain-of-thought items: correction, re-validation, approval.
//!
//! A review item is one firm's structured-prompt trace for one cycle and
//! provider. Reviewers send corrections back into the model's structured
//! session and finally approve a score. The chain-of-thought signal for a
//! cycle and provider is published only once every item is approved.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtest::{MonthlyCycle, SignalSet};
use crate::clock::{Clock, SystemClock};
use crate::gateway::{Gateway, GatewayError, PromptParams, PromptTemplate, SessionKey, Strategy, TranscriptEntry};
use crate::parse::{extract_scores, to_trace, TraceContext, Universe};
use crate::scoring::ScoringFramework;
use crate::store::{LedgerEvent, LedgerState, RunLedger, StoreError};
use crate::types::{CycleId, ProviderId, SessionId, SignalStrategy, Ticker};
use crate::validate::{run_suite, ReasoningTrace, Severity, SuiteConfig, ValidationFinding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Corrected,
    Approved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub cycle_id: CycleId,
    pub firm: Ticker,
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
    pub session_id: SessionId,
    pub trace: ReasoningTrace,
    pub findings: Vec<ValidationFinding>,
    pub status: ReviewStatus,
    /// Corrections applied so far.
    #[serde(default)]
    pub iterations: u32,
    #[serde(default)]
    pub final_score: Option<f64>,
}

impl ReviewItem {
    pub fn id_for(cycle: &CycleId, provider: &ProviderId, firm: &Ticker) -> String {
        format!("c{cycle}-{provider}-{firm}")
    }

    pub fn worst_severity(&self) -> Option<Severity> {
        self.findings.iter().map(|f| f.severity).min()
    }

    pub fn model_score(&self) -> Option<f64> {
        self.trace.reported_composite
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRef {
    pub session_id: SessionId,
    /// Index of the exchange within the session transcript.
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    pub item_id: String,
    pub note: String,
    pub prompt: String,
    pub response: ResponseRef,
    pub iteration: u32,
    pub findings_before: usize,
    pub findings_after: usize,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalEvent {
    pub item_id: String,
    pub cycle_id: CycleId,
    pub provider: ProviderId,
    pub firm: Ticker,
    pub final_score: f64,
    pub model_score: Option<f64>,
    /// Reviewer score minus model score.
    pub delta: Option<f64>,
    pub iterations: u32,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApprovalOutcome {
    pub event: ApprovalEvent,
    /// The cycle's chain-of-thought signal, when this approval completed it.
    pub published: Option<SignalSet>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReviewError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("item {0} is approved and locked")]
    ItemLocked(String),
    #[error("item {0} already has a correction in flight")]
    ItemBusy(String),
    #[error("final score {0} is outside [0, 1]")]
    InvalidScore(f64),
    #[error("correction note is empty")]
    EmptyNote,
    #[error("correction response unusable: {0}")]
    Parse(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Transcript of an item's session with its corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptView {
    pub item_id: String,
    pub session_id: SessionId,
    pub entries: Vec<TranscriptEntry>,
    pub corrections: Vec<CorrectionEvent>,
}

/// Shared state behind the review console.
pub struct ReviewService {
    ledger: Arc<Mutex<RunLedger>>,
    gateway: Arc<Gateway>,
    universe: Universe,
    framework: ScoringFramework,
    suite: SuiteConfig,
    calendar: BTreeMap<CycleId, MonthlyCycle>,
    clock: Arc<dyn Clock>,
    items: Mutex<BTreeMap<String, ReviewItem>>,
    corrections: Mutex<Vec<CorrectionEvent>>,
    busy: Mutex<BTreeSet<String>>,
    cycle_locks: Mutex<BTreeMap<CycleId, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for ReviewService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReviewService").finish_non_exhaustive()
    }
}

pub struct ReviewSetup {
    pub ledger: Arc<Mutex<RunLedger>>,
    pub gateway: Arc<Gateway>,
    pub universe: Universe,
    pub framework: ScoringFramework,
    pub suite: SuiteConfig,
    pub calendar: Vec<MonthlyCycle>,
}

/// Reviewer note listing every finding and its hint.
pub fn correction_note(findings: &[ValidationFinding]) -> String {
    findings
        .iter()
        .map(|f| format!("- [{}] {} {}", f.code, f.evidence, f.suggested_correction_hint).trim_end().to_owned())
        .collect::<Vec<_>>()
        .join("\n")
}

impl ReviewService {
    pub fn new(setup: ReviewSetup) -> Self {
        let mut suite = setup.suite;
        for c in &setup.calendar {
            suite.cutoffs.entry(c.id.clone()).or_insert(c.cutoff);
        }
        Self {
            ledger: setup.ledger,
            gateway: setup.gateway,
            universe: setup.universe,
            framework: setup.framework,
            suite,
            calendar: setup.calendar.into_iter().map(|c| (c.id.clone(), c)).collect(),
            clock: Arc::new(SystemClock),
            items: Mutex::new(BTreeMap::new()),
            corrections: Mutex::new(Vec::new()),
            busy: Mutex::new(BTreeSet::new()),
            cycle_locks: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Loads items, corrections and sessions from replayed ledger state.
    pub fn restore(&self, state: &LedgerState) {
        self.gateway.restore(state.sessions.values().cloned());
        *self.items.lock().expect("items lock") = state.review_items.clone();
        *self.corrections.lock().expect("corrections lock") = state.corrections.clone();
    }

    fn persist(&self, cycle: &CycleId, event: LedgerEvent) -> Result<u64, ReviewError> {
        Ok(self.ledger.lock().expect("ledger lock").persist_event(Some(cycle), None, event)?)
    }

    fn cycle_lock(&self, cycle: &CycleId) -> Arc<Mutex<()>> {
        self.cycle_locks.lock().expect("cycle locks").entry(cycle.clone()).or_default().clone()
    }

    /// Creates one pending item per trace; findings are matched by firm.
    pub fn open_items(&self, session_id: &SessionId, traces: &[ReasoningTrace], findings: &[ValidationFinding]) -> Result<Vec<ReviewItem>, ReviewError> {
        let mut out = Vec::with_capacity(traces.len());
        for trace in traces {
            let item = ReviewItem {
                item_id: ReviewItem::id_for(&trace.cycle_id, &trace.provider, &trace.firm),
                cycle_id: trace.cycle_id.clone(),
                firm: trace.firm.clone(),
                provider: trace.provider.clone(),
                strategy: SignalStrategy::Cot,
                session_id: session_id.clone(),
                trace: trace.clone(),
                findings: findings.iter().filter(|f| f.cycle_id == trace.cycle_id && f.concerns(&trace.firm)).cloned().collect(),
                status: ReviewStatus::Pending,
                iterations: 0,
                final_score: None,
            };
            self.persist(&item.cycle_id, LedgerEvent::ReviewItem { item: item.clone() })?;
            self.items.lock().expect("items lock").insert(item.item_id.clone(), item.clone());
            out.push(item);
        }
        Ok(out)
    }

    /// Unapproved items of a cycle: errors first, then warnings, then
    /// clean items, each group by firm.
    pub fn list_pending(&self, cycle: &CycleId) -> Result<Vec<ReviewItem>, ReviewError> {
        let items = self.items.lock().expect("items lock");
        let known = self.calendar.contains_key(cycle) || items.values().any(|i| &i.cycle_id == cycle);
        if !known {
            return Err(ReviewError::NotFound(format!("cycle {cycle}")));
        }
        let mut out: Vec<ReviewItem> =
            items.values().filter(|i| &i.cycle_id == cycle && i.status != ReviewStatus::Approved).cloned().collect();
        // None sorts after Some(Warning) once mapped to a rank
        let rank = |i: &ReviewItem| match i.worst_severity() {
            Some(Severity::Error) => 0,
            Some(Severity::Warning) => 1,
            None => 2,
        };
        out.sort_by(|a, b| rank(a).cmp(&rank(b)).then_with(|| a.firm.cmp(&b.firm)).then_with(|| a.provider.cmp(&b.provider)));
        Ok(out)
    }

    pub fn items(&self, cycle: &CycleId) -> Vec<ReviewItem> {
        self.items.lock().expect("items lock").values().filter(|i| &i.cycle_id == cycle).cloned().collect()
    }

    pub fn item(&self, id: &str) -> Result<ReviewItem, ReviewError> {
        self.items.lock().expect("items lock").get(id).cloned().ok_or_else(|| ReviewError::NotFound(format!("item {id}")))
    }

    pub fn transcript(&self, id: &str) -> Result<TranscriptView, ReviewError> {
        let item = self.item(id)?;
        let entries = self.gateway.session(&item.session_id).map(|s| s.transcript).unwrap_or_default();
        let corrections = self.corrections.lock().expect("corrections lock").iter().filter(|c| c.item_id == id).cloned().collect();
        Ok(TranscriptView { item_id: item.item_id, session_id: item.session_id, entries, corrections })
    }

    /// Sends `note` as a follow-up in the item's session and re-validates.
    ///
    /// The request is written to the ledger before the query is sent. On
    /// failure the item keeps its previous trace and status.
    pub fn submit_correction(&self, id: &str, note: &str) -> Result<CorrectionEvent, ReviewError> {
        if note.trim().is_empty() {
            return Err(ReviewError::EmptyNote);
        }
        let item = self.item(id)?;
        let lock = self.cycle_lock(&item.cycle_id);
        let _guard = lock.lock().expect("cycle lock");
        let item = self.item(id)?;
        if item.status == ReviewStatus::Approved {
            return Err(ReviewError::ItemLocked(id.to_owned()));
        }
        if !self.busy.lock().expect("busy lock").insert(id.to_owned()) {
            return Err(ReviewError::ItemBusy(id.to_owned()));
        }
        let result = self.correct(item, note);
        self.busy.lock().expect("busy lock").remove(id);
        result
    }

    fn correct(&self, item: ReviewItem, note: &str) -> Result<CorrectionEvent, ReviewError> {
        let cycle_id = item.cycle_id.clone();
        let cycle = &cycle_id;
        let name = self.universe.member(item.firm.as_str()).map_or_else(|| item.firm.to_string(), |m| m.name.clone());
        let params = PromptParams {
            query_date: self.calendar.get(cycle).map(|c| c.first_day),
            cutoff_date: self.calendar.get(cycle).map(|c| c.cutoff).or_else(|| self.suite.cutoffs.get(cycle).copied()),
            firms: vec![name],
            correction_text: Some(note.to_owned()),
            attachment_count: 0,
        };
        let prompt = PromptTemplate::builtin(Strategy::CotFollowup).render(&params)?;
        self.persist(cycle, LedgerEvent::CorrectionRequested { item_id: item.item_id.clone(), note: note.to_owned(), prompt: prompt.clone(), at: self.clock.now() })?;

        let fail = |err: ReviewError| -> ReviewError {
            let _ = self.persist(cycle, LedgerEvent::CorrectionFailed { item_id: item.item_id.clone(), error: err.to_string() });
            err
        };
        let key = SessionKey { provider: item.provider.clone(), cycle: cycle.clone(), strategy: Strategy::CotFollowup, firm: None };
        let session = self.gateway.open_fresh_session(key).map_err(|e| fail(e.into()))?;
        let entry = self.gateway.submit_query(&session.session_id, &prompt, &[]).map_err(|e| fail(e.into()))?;
        let turn = self.gateway.session(&session.session_id).map_or(0, |s| s.transcript.len().saturating_sub(1));
        self.persist(cycle, LedgerEvent::Exchange { session_id: session.session_id.clone(), entry: entry.clone() })?;

        let parsed = extract_scores(&entry.response, &self.universe).map_err(|e| fail(ReviewError::Parse(e.to_string())))?;
        let ctx = TraceContext { session_id: session.session_id.clone(), cycle_id: cycle.clone(), provider: item.provider.clone(), strategy: SignalStrategy::Cot };
        let trace = to_trace(&parsed, &ctx, &self.framework)
            .into_iter()
            .find(|t| t.firm == item.firm)
            .ok_or_else(|| fail(ReviewError::Parse(format!("no score for {} in the follow-up response", item.firm))))?;
        let findings = run_suite(std::slice::from_ref(&trace), &self.suite).findings;

        let event = CorrectionEvent {
            item_id: item.item_id.clone(),
            note: note.to_owned(),
            prompt,
            response: ResponseRef { session_id: session.session_id.clone(), turn },
            iteration: item.iterations + 1,
            findings_before: item.findings.len(),
            findings_after: findings.len(),
            at: self.clock.now(),
        };
        let updated = ReviewItem { trace, findings, status: ReviewStatus::Corrected, iterations: item.iterations + 1, ..item };
        self.persist(cycle, LedgerEvent::Correction { event: event.clone() })?;
        self.persist(cycle, LedgerEvent::ReviewItem { item: updated.clone() })?;
        self.items.lock().expect("items lock").insert(updated.item_id.clone(), updated);
        self.corrections.lock().expect("corrections lock").push(event.clone());
        Ok(event)
    }

    /// Records the reviewer's final score and locks the item.
    pub fn approve_scores(&self, id: &str, final_score: f64) -> Result<ApprovalOutcome, ReviewError> {
        if !(final_score.is_finite() && (0.0..=1.0).contains(&final_score)) {
            return Err(ReviewError::InvalidScore(final_score));
        }
        let item = self.item(id)?;
        let lock = self.cycle_lock(&item.cycle_id);
        let _guard = lock.lock().expect("cycle lock");
        let item = self.item(id)?;
        if item.status == ReviewStatus::Approved {
            return Err(ReviewError::ItemLocked(id.to_owned()));
        }
        if self.busy.lock().expect("busy lock").contains(id) {
            return Err(ReviewError::ItemBusy(id.to_owned()));
        }
        let model_score = item.model_score();
        let event = ApprovalEvent {
            item_id: item.item_id.clone(),
            cycle_id: item.cycle_id.clone(),
            provider: item.provider.clone(),
            firm: item.firm.clone(),
            final_score,
            model_score,
            delta: model_score.map(|m| final_score - m),
            iterations: item.iterations,
            at: self.clock.now(),
        };
        let approved = ReviewItem { status: ReviewStatus::Approved, final_score: Some(final_score), ..item };
        self.persist(&approved.cycle_id, LedgerEvent::Approval { event: event.clone() })?;
        self.persist(&approved.cycle_id, LedgerEvent::ReviewItem { item: approved.clone() })?;
        self.items.lock().expect("items lock").insert(approved.item_id.clone(), approved.clone());

        let published = self.completed_signal(&approved.cycle_id, &approved.provider);
        if let Some(signal) = &published {
            self.persist(&approved.cycle_id, LedgerEvent::Signal { signal: signal.clone() })?;
        }
        Ok(ApprovalOutcome { event, published })
    }

    fn completed_signal(&self, cycle: &CycleId, provider: &ProviderId) -> Option<SignalSet> {
        let items = self.items.lock().expect("items lock");
        let group: Vec<&ReviewItem> = items.values().filter(|i| &i.cycle_id == cycle && &i.provider == provider).collect();
        if group.is_empty() || group.iter().any(|i| i.status != ReviewStatus::Approved) {
            return None;
        }
        let signal_date = self.calendar.get(cycle)?.first_day;
        Some(SignalSet {
            cycle_id: cycle.clone(),
            provider: provider.clone(),
            strategy: SignalStrategy::Cot,
            scores: group.iter().filter_map(|i| Some((i.firm.clone(), i.final_score?))).collect(),
            signal_date,
        })
    }

    /// Non-interactive review: correct flagged items up to `max_rounds`
    /// times using the findings' hints, then approve each item at its
    /// latest model score.
    pub fn auto_review(&self, cycle: &CycleId, provider: &ProviderId, max_rounds: u32) -> Result<Option<SignalSet>, ReviewError> {
        let ids: Vec<String> = self.items(cycle).into_iter().filter(|i| &i.provider == provider).map(|i| i.item_id).collect();
        let mut published = None;
        for id in ids {
            for _ in 0..max_rounds {
                let item = self.item(&id)?;
                if item.findings.is_empty() || item.status == ReviewStatus::Approved {
                    break;
                }
                match self.submit_correction(&id, &correction_note(&item.findings)) {
                    Ok(_) => {}
                    Err(ReviewError::Parse(reason)) => {
                        tracing::warn!(item = %id, %reason, "follow-up unusable, keeping previous trace");
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            let item = self.item(&id)?;
            if item.status == ReviewStatus::Approved {
                continue;
            }
            let score = item.model_score().filter(|s| s.is_finite()).unwrap_or(0.5).clamp(0.0, 1.0);
            if let Some(signal) = self.approve_scores(&id, score)?.published {
                published = Some(signal);
            }
        }
        Ok(published)
    }
}

#[cfg(test)]
mod tests;
