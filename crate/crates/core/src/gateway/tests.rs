use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use super::*;
use crate::clock::SteppingClock;

fn key(strategy: Strategy) -> SessionKey {
    SessionKey { provider: ProviderId::from("mock"), cycle: CycleId::from("2025-04"), strategy, firm: None }
}

fn gateway(provider: MockProvider) -> (Gateway, Arc<MockProvider>) {
    let p = Arc::new(provider);
    let start = "2025-04-01T08:00:00Z".parse().unwrap();
    let mut g = Gateway::new(4).with_retry(RetryPolicy::immediate()).with_clock(Arc::new(SteppingClock::new(start, chrono::Duration::seconds(1))));
    g.register(p.clone());
    (g, p)
}

#[test]
fn mock_echoes_fixture() {
    let (g, _) = gateway(MockProvider::fixed("mock", "IBE: 0.61"));
    let s = g.open_fresh_session(key(Strategy::Naive)).unwrap();
    let e = g.submit_query(&s.session_id, "prompt", &[]).unwrap();
    assert_eq!(e.response, "IBE: 0.61");
    assert_eq!(e.retries, 0);
    assert_eq!(g.session(&s.session_id).unwrap().transcript.len(), 1);
}

#[test]
fn two_failures_then_success() {
    let (g, p) = gateway(MockProvider::fixed("mock", "ok"));
    p.fail_next_transient(2);
    let s = g.open_fresh_session(key(Strategy::Structured)).unwrap();
    let e = g.submit_query(&s.session_id, "prompt", &[]).unwrap();
    assert_eq!(e.retries, 2);
    assert_eq!(p.calls().len(), 3);
    assert_eq!(g.session(&s.session_id).unwrap().transcript[0].retries, 2);
}

#[test]
fn persistent_failure_is_transport_error() {
    let (g, p) = gateway(MockProvider::fixed("mock", "ok"));
    p.fail_next_transient(5);
    let s = g.open_fresh_session(key(Strategy::Structured)).unwrap();
    match g.submit_query(&s.session_id, "prompt", &[]) {
        Err(GatewayError::TransportError { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert!(g.session(&s.session_id).unwrap().transcript.is_empty());
}

#[test]
fn permanent_failure_is_not_retried() {
    let (g, p) = gateway(MockProvider::fixed("mock", "ok"));
    p.inject_failures([ProviderFailure::Permanent("bad request".into())]);
    let s = g.open_fresh_session(key(Strategy::Structured)).unwrap();
    assert!(matches!(g.submit_query(&s.session_id, "p", &[]), Err(GatewayError::ProviderError { .. })));
    assert_eq!(p.calls().len(), 1);
}

#[test]
fn attachment_needs_capability() {
    let mut profile = ProviderProfile::mock("gemini");
    profile.capabilities.attachments = false;
    let (g, _) = gateway(MockProvider::from_profile(profile, |_| Some("x".into())));
    let k = SessionKey { provider: ProviderId::from("gemini"), firm: Some(Ticker::from("IBE")), ..key(Strategy::Filings) };
    let s = g.open_fresh_session(k).unwrap();
    let doc = Attachment { path: "ibe-2024.pdf".into(), media_type: "application/pdf".into(), bytes: vec![1, 2, 3] };
    assert!(matches!(g.submit_query(&s.session_id, "p", &[doc]), Err(GatewayError::CapabilityError { .. })));
}

#[test]
fn sessions_are_fresh_per_key() {
    let (g, _) = gateway(MockProvider::fixed("mock", "ok"));
    let a = g.open_fresh_session(key(Strategy::Structured)).unwrap();
    assert_eq!(a.session_id.as_str(), "mock-2025-04-structured");
    assert_eq!(a.model_version, "mock-1");
    assert!(matches!(g.open_fresh_session(key(Strategy::Structured)), Err(GatewayError::SessionExists(_))));
    let b = g.open_fresh_session(key(Strategy::Naive)).unwrap();
    assert_ne!(a.session_id, b.session_id);
    let other_cycle = SessionKey { cycle: CycleId::from("2025-05"), ..key(Strategy::Structured) };
    assert!(g.open_fresh_session(other_cycle).is_ok());
}

#[test]
fn followup_reuses_structured_session() {
    let (g, p) = gateway(MockProvider::fixed("mock", "ok"));
    assert!(matches!(g.open_fresh_session(key(Strategy::CotFollowup)), Err(GatewayError::NoStructuredSession(_))));
    let s = g.open_fresh_session(key(Strategy::Structured)).unwrap();
    g.submit_query(&s.session_id, "first", &[]).unwrap();
    let f = g.open_fresh_session(key(Strategy::CotFollowup)).unwrap();
    assert_eq!(f.session_id, s.session_id);
    g.submit_query(&f.session_id, "second", &[]).unwrap();
    assert_eq!(p.calls()[1].turn, 1);
    assert_eq!(g.session(&s.session_id).unwrap().transcript.len(), 2);
}

#[test]
fn unknown_provider_label_is_undisclosed() {
    let mut profile = ProviderProfile::mock("perplexity");
    profile.version_label = None;
    let p = MockProvider::from_profile(profile, |_| Some("x".into()));
    assert_eq!(p.model_version(), UNDISCLOSED_MODEL);
}

struct Slow {
    profile: ProviderProfile,
    active: AtomicUsize,
    peak: AtomicUsize,
}

impl Provider for Slow {
    fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn send(&self, _: ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        thread::sleep(Duration::from_millis(20));
        self.active.fetch_sub(1, Ordering::SeqCst);
        Ok(ProviderReply { text: "ok".into(), model_version: None })
    }
}

#[test]
fn parallelism_is_bounded() {
    let slow = Arc::new(Slow { profile: ProviderProfile::mock("slow"), active: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
    let mut g = Gateway::new(2);
    g.register(slow.clone());
    let g = Arc::new(g);
    let ids: Vec<SessionId> = (0..6)
        .map(|i| {
            let k = SessionKey { provider: ProviderId::from("slow"), cycle: CycleId::new(format!("c{i}")), strategy: Strategy::Naive, firm: None };
            g.open_fresh_session(k).unwrap().session_id
        })
        .collect();
    let handles: Vec<_> = ids
        .into_iter()
        .map(|id| {
            let g = g.clone();
            thread::spawn(move || g.submit_query(&id, "p", &[]).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert!(slow.peak.load(Ordering::SeqCst) <= 2);
}

#[test]
fn one_call_in_flight_per_session() {
    let slow = Arc::new(Slow { profile: ProviderProfile::mock("slow"), active: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
    let mut g = Gateway::new(8);
    g.register(slow.clone());
    let g = Arc::new(g);
    let k = SessionKey { provider: ProviderId::from("slow"), cycle: CycleId::from("c"), strategy: Strategy::Structured, firm: None };
    let id = g.open_fresh_session(k).unwrap().session_id;
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (g, id) = (g.clone(), id.clone());
            thread::spawn(move || g.submit_query(&id, "p", &[]).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(slow.peak.load(Ordering::SeqCst), 1);
    assert_eq!(g.session(&id).unwrap().transcript.len(), 4);
}

#[test]
fn fixture_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("mock-2025-04-structured-1.txt"), "second").unwrap();
    std::fs::write(dir.path().join("default.txt"), "fallback").unwrap();
    let (g, _) = gateway(MockProvider::from_dir("mock", dir.path()));
    let s = g.open_fresh_session(key(Strategy::Structured)).unwrap();
    assert_eq!(g.submit_query(&s.session_id, "a", &[]).unwrap().response, "fallback");
    assert_eq!(g.submit_query(&s.session_id, "b", &[]).unwrap().response, "second");
}
