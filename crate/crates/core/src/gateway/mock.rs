//! Deterministic fixture-backed provider for tests and offline runs.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;

use super::provider::{Provider, ProviderFailure, ProviderProfile, ProviderReply, ProviderRequest};
use crate::types::ProviderId;

/// What the responder sees of a call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockCall {
    pub session_id: String,
    pub turn: usize,
    pub prompt: String,
    pub attachments: Vec<String>,
}

type Responder = Box<dyn Fn(&MockCall) -> Option<String> + Send + Sync>;

pub struct MockProvider {
    profile: ProviderProfile,
    responder: Responder,
    failures: Mutex<VecDeque<ProviderFailure>>,
    calls: Mutex<Vec<MockCall>>,
}

impl std::fmt::Debug for MockProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockProvider").field("profile", &self.profile).finish_non_exhaustive()
    }
}

impl MockProvider {
    /// Answers every prompt with `text`.
    pub fn fixed(id: impl Into<ProviderId>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self::with_responder(id, move |_| Some(text.clone()))
    }

    /// Answers from a closure; `None` becomes a permanent failure.
    pub fn with_responder(id: impl Into<ProviderId>, f: impl Fn(&MockCall) -> Option<String> + Send + Sync + 'static) -> Self {
        Self::from_profile(ProviderProfile::mock(id), f)
    }

    pub fn from_profile(profile: ProviderProfile, f: impl Fn(&MockCall) -> Option<String> + Send + Sync + 'static) -> Self {
        Self { profile, responder: Box::new(f), failures: Mutex::new(VecDeque::new()), calls: Mutex::new(Vec::new()) }
    }

    /// Answers from `dir`, trying `{session}-{turn}.txt`, `{session}.txt`,
    /// then `default.txt`.
    pub fn from_dir(id: impl Into<ProviderId>, dir: impl Into<PathBuf>) -> Self {
        Self::from_dir_with_profile(ProviderProfile::mock(id), dir)
    }

    pub fn from_dir_with_profile(profile: ProviderProfile, dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        Self::from_profile(profile, move |call| {
            [format!("{}-{}.txt", call.session_id, call.turn), format!("{}.txt", call.session_id), "default.txt".to_owned()]
                .iter()
                .find_map(|name| std::fs::read_to_string(dir.join(name)).ok())
        })
    }

    /// Makes the next calls fail with the given errors, in order.
    pub fn inject_failures(&self, failures: impl IntoIterator<Item = ProviderFailure>) {
        self.failures.lock().expect("mock lock").extend(failures);
    }

    pub fn fail_next_transient(&self, n: usize) {
        self.inject_failures((0..n).map(|i| ProviderFailure::Transient(format!("injected failure {}", i + 1))));
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.calls.lock().expect("mock lock").clone()
    }
}

impl Provider for MockProvider {
    fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn send(&self, request: ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
        let call = MockCall {
            session_id: request.session_id.to_owned(),
            turn: request.turn,
            prompt: request.messages.last().map(|m| m.content.clone()).unwrap_or_default(),
            attachments: request.attachments.iter().map(|a| a.name()).collect(),
        };
        self.calls.lock().expect("mock lock").push(call.clone());
        if let Some(fail) = self.failures.lock().expect("mock lock").pop_front() {
            return Err(fail);
        }
        match (self.responder)(&call) {
            Some(text) => Ok(ProviderReply { text, model_version: None }),
            None => Err(ProviderFailure::Permanent(format!("no fixture for {} turn {}", call.session_id, call.turn))),
        }
    }
}
