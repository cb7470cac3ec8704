//! Append-only JSON-lines event log and its replay.
//!
//! One envelope per line. Replaying the same bytes always yields the same
//! [`LedgerState`]. A torn final line (a crash mid-append) is dropped with
//! a warning; a bad line anywhere else is an error.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::backtest::{CycleRecord, ReturnSeries, SignalSet};
use crate::clock::{Clock, SystemClock};
use crate::evaluate::PerformanceReport;
use crate::gateway::{SessionRecord, TranscriptEntry};
use crate::review::{ApprovalEvent, CorrectionEvent, ReviewItem};
use crate::types::{CycleId, ProviderId, SessionId, SignalStrategy, Ticker};
use crate::validate::{ReasoningTrace, ValidationFinding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LedgerEvent {
    SessionOpened { session: SessionRecord },
    Exchange { session_id: SessionId, entry: TranscriptEntry },
    Trace { trace: ReasoningTrace },
    Findings { cycle_id: CycleId, provider: ProviderId, strategy: SignalStrategy, findings: Vec<ValidationFinding> },
    Signal { signal: SignalSet },
    Portfolio { provider: ProviderId, strategy: SignalStrategy, record: CycleRecord },
    ReviewItem { item: ReviewItem },
    /// Written before the follow-up query leaves the process.
    CorrectionRequested { item_id: String, note: String, prompt: String, at: DateTime<Utc> },
    CorrectionFailed { item_id: String, error: String },
    Correction { event: CorrectionEvent },
    Approval { event: ApprovalEvent },
    Report { report: PerformanceReport },
}

impl LedgerEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SessionOpened { .. } => "session_opened",
            Self::Exchange { .. } => "exchange",
            Self::Trace { .. } => "trace",
            Self::Findings { .. } => "findings",
            Self::Signal { .. } => "signal",
            Self::Portfolio { .. } => "portfolio",
            Self::ReviewItem { .. } => "review_item",
            Self::CorrectionRequested { .. } => "correction_requested",
            Self::CorrectionFailed { .. } => "correction_failed",
            Self::Correction { .. } => "correction",
            Self::Approval { .. } => "approval",
            Self::Report { .. } => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEnvelope {
    pub seq: u64,
    #[serde(default)]
    pub cycle_id: Option<CycleId>,
    pub recorded_at: DateTime<Utc>,
    #[serde(default)]
    pub model_version: Option<String>,
    pub event: LedgerEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TraceKey {
    pub cycle_id: CycleId,
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
    pub firm: Ticker,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SeriesKey {
    pub cycle_id: CycleId,
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
}

/// Everything derivable from the event sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LedgerState {
    pub last_seq: Option<u64>,
    pub sessions: BTreeMap<SessionId, SessionRecord>,
    /// Latest trace per key.
    pub traces: BTreeMap<TraceKey, ReasoningTrace>,
    pub findings: BTreeMap<SeriesKey, Vec<ValidationFinding>>,
    pub signals: BTreeMap<SeriesKey, SignalSet>,
    /// Portfolio records per provider and strategy in first-append order;
    /// a later record for the same cycle replaces the earlier one.
    pub portfolios: BTreeMap<(ProviderId, SignalStrategy), Vec<CycleRecord>>,
    pub review_items: BTreeMap<String, ReviewItem>,
    pub pending_corrections: BTreeMap<String, String>,
    pub corrections: Vec<CorrectionEvent>,
    pub approvals: Vec<ApprovalEvent>,
    pub reports: Vec<PerformanceReport>,
}

impl LedgerState {
    pub fn apply(&mut self, envelope: &LedgerEnvelope) -> Result<(), String> {
        if let Some(last) = self.last_seq {
            if envelope.seq <= last {
                return Err(format!("sequence {} does not follow {last}", envelope.seq));
            }
        }
        self.last_seq = Some(envelope.seq);
        match &envelope.event {
            LedgerEvent::SessionOpened { session } => {
                if self.sessions.insert(session.session_id.clone(), session.clone()).is_some() {
                    return Err(format!("session {} opened twice", session.session_id));
                }
            }
            LedgerEvent::Exchange { session_id, entry } => {
                let s = self.sessions.get_mut(session_id).ok_or_else(|| format!("exchange for unknown session {session_id}"))?;
                s.transcript.push(entry.clone());
            }
            LedgerEvent::Trace { trace } => {
                let key = TraceKey {
                    cycle_id: trace.cycle_id.clone(),
                    provider: trace.provider.clone(),
                    strategy: trace.strategy,
                    firm: trace.firm.clone(),
                };
                self.traces.insert(key, trace.clone());
            }
            LedgerEvent::Findings { cycle_id, provider, strategy, findings } => {
                let key = SeriesKey { cycle_id: cycle_id.clone(), provider: provider.clone(), strategy: *strategy };
                self.findings.insert(key, findings.clone());
            }
            LedgerEvent::Signal { signal } => {
                let key = SeriesKey { cycle_id: signal.cycle_id.clone(), provider: signal.provider.clone(), strategy: signal.strategy };
                self.signals.insert(key, signal.clone());
            }
            LedgerEvent::Portfolio { provider, strategy, record } => {
                let records = self.portfolios.entry((provider.clone(), *strategy)).or_default();
                match records.iter_mut().find(|r| r.cycle_id == record.cycle_id) {
                    Some(existing) => *existing = record.clone(),
                    None => records.push(record.clone()),
                }
            }
            LedgerEvent::ReviewItem { item } => {
                self.review_items.insert(item.item_id.clone(), item.clone());
            }
            LedgerEvent::CorrectionRequested { item_id, note, .. } => {
                self.pending_corrections.insert(item_id.clone(), note.clone());
            }
            LedgerEvent::CorrectionFailed { item_id, .. } => {
                self.pending_corrections.remove(item_id);
            }
            LedgerEvent::Correction { event } => {
                self.pending_corrections.remove(&event.item_id);
                self.corrections.push(event.clone());
            }
            LedgerEvent::Approval { event } => self.approvals.push(event.clone()),
            LedgerEvent::Report { report } => self.reports.push(report.clone()),
        }
        Ok(())
    }

    /// Portfolio records regrouped as return series.
    pub fn return_series(&self) -> Vec<ReturnSeries> {
        self.portfolios
            .iter()
            .map(|((provider, strategy), records)| ReturnSeries { provider: provider.clone(), strategy: *strategy, records: records.clone() })
            .collect()
    }

    pub fn signals_for(&self, provider: &ProviderId, strategy: SignalStrategy) -> Vec<SignalSet> {
        self.signals.values().filter(|s| &s.provider == provider && s.strategy == strategy).cloned().collect()
    }

    pub fn traces_for(&self, cycle: &CycleId, provider: &ProviderId, strategy: SignalStrategy) -> Vec<ReasoningTrace> {
        self.traces
            .iter()
            .filter(|(k, _)| &k.cycle_id == cycle && &k.provider == provider && k.strategy == strategy)
            .map(|(_, t)| t.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub state: LedgerState,
    pub events: Vec<LedgerEnvelope>,
    /// Set when a torn final line was skipped.
    pub warning: Option<String>,
}

/// Single-writer handle on a ledger file.
pub struct RunLedger {
    path: PathBuf,
    file: File,
    next_seq: u64,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for RunLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunLedger").field("path", &self.path).field("next_seq", &self.next_seq).finish()
    }
}

impl RunLedger {
    /// Opens (or creates) the ledger, continuing after its last event.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with_clock(path, Arc::new(SystemClock))
    }

    pub fn open_with_clock(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let next_seq = if path.exists() {
            let outcome = Self::replay(&path)?;
            if let Some(w) = &outcome.warning {
                return Err(StoreError::LedgerError { line: outcome.events.len() + 1, reason: format!("refusing to append after a torn record: {w}") });
            }
            outcome.state.last_seq.map_or(0, |s| s + 1)
        } else {
            0
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| StoreError::io(&path, e))?;
        Ok(Self { path, file, next_seq, clock })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one event and syncs it to disk; returns its sequence number.
    pub fn persist_event(&mut self, cycle_id: Option<&CycleId>, model_version: Option<&str>, event: LedgerEvent) -> Result<u64, StoreError> {
        let envelope = LedgerEnvelope {
            seq: self.next_seq,
            cycle_id: cycle_id.cloned(),
            recorded_at: self.clock.now(),
            model_version: model_version.map(str::to_owned),
            event,
        };
        let mut line = serde_json::to_string(&envelope).map_err(|e| StoreError::LedgerError { line: 0, reason: e.to_string() })?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| StoreError::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| StoreError::io(&self.path, e))?;
        self.next_seq += 1;
        Ok(envelope.seq)
    }

    pub fn replay(path: impl AsRef<Path>) -> Result<ReplayOutcome, StoreError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
        Self::replay_from(BufReader::new(file))
    }

    pub fn replay_from<R: BufRead>(reader: R) -> Result<ReplayOutcome, StoreError> {
        let mut lines: Vec<(usize, String)> = Vec::new();
        for (i, line) in reader.split(b'\n').enumerate() {
            let bytes = line.map_err(|e| StoreError::Io(e.to_string()))?;
            let text = String::from_utf8(bytes).map_err(|_| StoreError::LedgerError { line: i + 1, reason: "invalid UTF-8".into() })?;
            if !text.trim().is_empty() {
                lines.push((i + 1, text));
            }
        }
        let mut state = LedgerState::default();
        let mut events = Vec::with_capacity(lines.len());
        let mut warning = None;
        let count = lines.len();
        for (idx, (line_no, text)) in lines.into_iter().enumerate() {
            match serde_json::from_str::<LedgerEnvelope>(&text) {
                Ok(env) => {
                    state.apply(&env).map_err(|reason| StoreError::LedgerError { line: line_no, reason })?;
                    events.push(env);
                }
                Err(e) if idx + 1 == count && e.is_eof() => {
                    let msg = format!("ledger line {line_no} is incomplete and was ignored");
                    tracing::warn!("{msg}");
                    warning = Some(msg);
                }
                Err(e) => return Err(StoreError::LedgerError { line: line_no, reason: e.to_string() }),
            }
        }
        Ok(ReplayOutcome { state, events, warning })
    }
}
