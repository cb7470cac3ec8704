//! Provider-agnostic model access: prompt rendering, sessions, retries.
//!
//! Each (provider, cycle, strategy) pair gets exactly one fresh session,
//! and filings sessions are additionally keyed by firm. Chain-of-thought
//! follow-ups reuse the structured session so the model sees its own
//! earlier answer. Calls within a session are serialised; calls across
//! sessions share a global parallelism bound.

mod http;
mod mock;
mod provider;
mod templates;

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpChatProvider;
pub use mock::{MockCall, MockProvider};
pub use provider::{Attachment, Capabilities, ChatMessage, Provider, ProviderFailure, ProviderProfile, ProviderReply, ProviderRequest, Role, UNDISCLOSED_MODEL};
pub use templates::{join_firms, PromptParams, PromptTemplate, Strategy, CUTOFF_CLAUSE};

use crate::clock::{Clock, SystemClock};
use crate::types::{CycleId, ProviderId, SessionId, Ticker};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("template: {0}")]
    TemplateError(String),
    #[error("filings prompts need at least one attached document")]
    AttachmentRequired,
    #[error("provider {provider} does not support {capability}")]
    CapabilityError { provider: ProviderId, capability: String },
    #[error("provider {provider} failed after {attempts} attempts: {last}")]
    TransportError { provider: ProviderId, attempts: u32, last: String },
    #[error("provider {provider} rejected the request: {reason}")]
    ProviderError { provider: ProviderId, reason: String },
    #[error("session already open for {0}")]
    SessionExists(String),
    #[error("no structured session to follow up for {0}")]
    NoStructuredSession(String),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("unknown provider {0}")]
    UnknownProvider(ProviderId),
}

/// Identity of a session: one per provider, cycle and strategy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionKey {
    pub provider: ProviderId,
    pub cycle: CycleId,
    pub strategy: Strategy,
    /// Set for per-firm sessions (filings).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub firm: Option<Ticker>,
}

impl SessionKey {
    pub fn session_id(&self) -> SessionId {
        match &self.firm {
            Some(f) => SessionId::new(format!("{}-{}-{}-{f}", self.provider, self.cycle, self.strategy)),
            None => SessionId::new(format!("{}-{}-{}", self.provider, self.cycle, self.strategy)),
        }
    }
}

impl std::fmt::Display for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.session_id().as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt: String,
    pub response: String,
    pub sent_at: DateTime<Utc>,
    pub received_at: DateTime<Utc>,
    #[serde(default)]
    pub attachments: Vec<String>,
    /// Failed attempts before this response arrived.
    #[serde(default)]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: SessionId,
    pub key: SessionKey,
    /// Label captured at open time.
    pub model_version: String,
    pub opened_at: DateTime<Utc>,
    pub transcript: Vec<TranscriptEntry>,
}

impl SessionRecord {
    fn messages(&self, prompt: &str) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(self.transcript.len() * 2 + 1);
        for e in &self.transcript {
            out.push(ChatMessage { role: Role::User, content: e.prompt.clone() });
            out.push(ChatMessage { role: Role::Assistant, content: e.response.clone() });
        }
        out.push(ChatMessage { role: Role::User, content: prompt.to_owned() });
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, the first included.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self { base_delay: Duration::ZERO, ..Self::default() }
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { permits: Mutex::new(n.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("semaphore lock");
        while *n == 0 {
            n = self.freed.wait(n).expect("semaphore lock");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore lock") += 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    providers: BTreeMap<ProviderId, Arc<dyn Provider>>,
    sessions: Mutex<BTreeMap<SessionId, Arc<Mutex<SessionRecord>>>>,
    slots: Semaphore,
    retry: RetryPolicy,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("providers", &self.providers.keys().collect::<Vec<_>>()).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(parallelism: usize) -> Self {
        Self {
            providers: BTreeMap::new(),
            sessions: Mutex::new(BTreeMap::new()),
            slots: Semaphore::new(parallelism),
            retry: RetryPolicy::default(),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn register(&mut self, provider: Arc<dyn Provider>) {
        self.providers.insert(provider.profile().id.clone(), provider);
    }

    pub fn provider(&self, id: &ProviderId) -> Result<&Arc<dyn Provider>, GatewayError> {
        self.providers.get(id).ok_or_else(|| GatewayError::UnknownProvider(id.clone()))
    }

    pub fn provider_ids(&self) -> impl Iterator<Item = &ProviderId> {
        self.providers.keys()
    }

    /// Opens the session for `key`, or for a follow-up returns the
    /// structured session it continues.
    pub fn open_fresh_session(&self, key: SessionKey) -> Result<SessionRecord, GatewayError> {
        let provider = self.provider(&key.provider)?;
        let mut sessions = self.sessions.lock().expect("session map lock");
        if key.strategy == Strategy::CotFollowup {
            let base = SessionKey { strategy: Strategy::Structured, ..key.clone() };
            return sessions
                .get(&base.session_id())
                .map(|s| s.lock().expect("session lock").clone())
                .ok_or_else(|| GatewayError::NoStructuredSession(base.to_string()));
        }
        let id = key.session_id();
        if sessions.contains_key(&id) {
            return Err(GatewayError::SessionExists(key.to_string()));
        }
        let record = SessionRecord {
            session_id: id.clone(),
            key,
            model_version: provider.model_version(),
            opened_at: self.clock.now(),
            transcript: Vec::new(),
        };
        sessions.insert(id, Arc::new(Mutex::new(record.clone())));
        Ok(record)
    }

    /// Re-installs sessions read back from a ledger.
    pub fn restore(&self, records: impl IntoIterator<Item = SessionRecord>) {
        let mut sessions = self.sessions.lock().expect("session map lock");
        for r in records {
            sessions.insert(r.session_id.clone(), Arc::new(Mutex::new(r)));
        }
    }

    pub fn session(&self, id: &SessionId) -> Option<SessionRecord> {
        let handle = self.sessions.lock().expect("session map lock").get(id).cloned()?;
        let record = handle.lock().expect("session lock").clone();
        Some(record)
    }

    pub fn sessions(&self) -> Vec<SessionRecord> {
        let handles: Vec<_> = self.sessions.lock().expect("session map lock").values().cloned().collect();
        handles.iter().map(|h| h.lock().expect("session lock").clone()).collect()
    }

    /// Sends `prompt` within the session and appends the exchange.
    pub fn submit_query(&self, session: &SessionId, prompt: &str, attachments: &[Attachment]) -> Result<TranscriptEntry, GatewayError> {
        let handle = self
            .sessions
            .lock()
            .expect("session map lock")
            .get(session)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownSession(session.clone()))?;
        let mut record = handle.lock().expect("session lock");
        let provider = self.provider(&record.key.provider)?.clone();
        if !attachments.is_empty() && !provider.profile().capabilities.attachments {
            return Err(GatewayError::CapabilityError { provider: record.key.provider.clone(), capability: "attachments".into() });
        }
        let messages = record.messages(prompt);
        let request = ProviderRequest { session_id: session.as_str(), turn: record.transcript.len(), messages: &messages, attachments };

        let _permit = self.slots.acquire();
        let sent_at = self.clock.now();
        let mut failures = 0u32;
        let reply = loop {
            match provider.send(request) {
                Ok(reply) => break reply,
                Err(ProviderFailure::Permanent(reason)) => {
                    return Err(GatewayError::ProviderError { provider: record.key.provider.clone(), reason });
                }
                Err(ProviderFailure::Transient(reason)) => {
                    failures += 1;
                    tracing::warn!(session = %session, attempt = failures, %reason, "transient provider failure");
                    if failures >= self.retry.max_attempts {
                        return Err(GatewayError::TransportError { provider: record.key.provider.clone(), attempts: failures, last: reason });
                    }
                    let delay = self.retry.base_delay.saturating_mul(1 << (failures - 1).min(16));
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
            }
        };
        let entry = TranscriptEntry {
            prompt: prompt.to_owned(),
            response: reply.text,
            sent_at,
            received_at: self.clock.now(),
            attachments: attachments.iter().map(Attachment::name).collect(),
            retries: failures,
            model_version: reply.model_version,
        };
        record.transcript.push(entry.clone());
        Ok(entry)
    }
}

#[cfg(test)]
mod tests;
