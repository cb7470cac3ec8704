use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::NaiveDate;

use super::*;
use crate::gateway::{MockProvider, RetryPolicy};
use crate::parse::UniverseMember;

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

fn universe() -> Universe {
    let m = |t: &str, n: &str| UniverseMember { ticker: t.into(), name: n.into(), aliases: vec![] };
    Universe::new(vec![m("IBE", "Iberdrola"), m("SAN", "Banco Santander")]).unwrap()
}

struct Fixture {
    service: ReviewService,
    ledger_path: std::path::PathBuf,
    _dir: tempfile::TempDir,
    session: SessionId,
}

// valuation should aggregate to 0.6 * 0.60 + 0.4 * 0.50 = 0.56
const FIRST_ANSWER: &str = "\
Banco Santander: 0.40
Iberdrola: 0.62

| Category | Variable | Raw value | Data source | Normalized score | Category score |
|---|---|---|---|---|---|
| Valuation | P/E | 14.1 | BME | 0.60 | 0.71 |
| | P/B | 1.8 | BME | 0.50 | |
";

/// Iberdrola's table carries an aggregation error; every follow-up answers
/// with `follow_up`.
fn fixture(follow_up: &'static str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let ledger_path = dir.path().join("ledger.jsonl");
    let ledger = Arc::new(Mutex::new(RunLedger::open(&ledger_path).unwrap()));
    let provider = MockProvider::with_responder("mock", move |call| {
        Some(if call.turn == 0 { FIRST_ANSWER.to_owned() } else { follow_up.to_owned() })
    });
    let mut gateway = Gateway::new(2).with_retry(RetryPolicy::immediate());
    gateway.register(Arc::new(provider));
    let gateway = Arc::new(gateway);

    let cycle = MonthlyCycle::new("2025-04", d(2025, 4, 1), d(2025, 4, 30), d(2025, 3, 31)).unwrap();
    let service = ReviewService::new(ReviewSetup {
        ledger: ledger.clone(),
        gateway: gateway.clone(),
        universe: universe(),
        framework: ScoringFramework::table_one(),
        suite: SuiteConfig::default(),
        calendar: vec![cycle],
    });

    let key = SessionKey { provider: "mock".into(), cycle: "2025-04".into(), strategy: Strategy::Structured, firm: None };
    let record = gateway.open_fresh_session(key).unwrap();
    let session = record.session_id.clone();
    let entry = gateway.submit_query(&session, "score", &[]).unwrap();
    {
        let mut l = ledger.lock().unwrap();
        let cycle = CycleId::from("2025-04");
        l.persist_event(Some(&cycle), None, LedgerEvent::SessionOpened { session: record }).unwrap();
        l.persist_event(Some(&cycle), None, LedgerEvent::Exchange { session_id: session.clone(), entry: entry.clone() }).unwrap();
    }
    let parsed = extract_scores(&entry.response, &universe()).unwrap();
    let ctx = TraceContext { session_id: session.clone(), cycle_id: "2025-04".into(), provider: "mock".into(), strategy: SignalStrategy::Cot };
    let traces = to_trace(&parsed, &ctx, &ScoringFramework::table_one());
    let findings = run_suite(&traces, &service.suite).findings;
    service.open_items(&session, &traces, &findings).unwrap();
    Fixture { service, ledger_path, _dir: dir, session }
}

#[test]
fn pending_items_sorted_by_severity() {
    let f = fixture("Iberdrola: 0.55");
    let pending = f.service.list_pending(&"2025-04".into()).unwrap();
    let ids: Vec<&str> = pending.iter().map(|i| i.item_id.as_str()).collect();
    assert_eq!(ids, ["c2025-04-mock-IBE", "c2025-04-mock-SAN"]);
    assert_eq!(pending[0].worst_severity(), Some(Severity::Error));
    assert!(pending[1].findings.is_empty());
    assert!(matches!(f.service.list_pending(&"1999-01".into()), Err(ReviewError::NotFound(_))));
}

#[test]
fn correction_revalidates_in_the_same_session() {
    let f = fixture("Iberdrola: 0.55");
    let event = f.service.submit_correction("c2025-04-mock-IBE", "valuation should be 0.56").unwrap();
    assert_eq!(event.iteration, 1);
    assert_eq!(event.findings_after, 0);
    assert_eq!(event.response, ResponseRef { session_id: f.session.clone(), turn: 1 });
    assert!(event.prompt.contains("valuation should be 0.56"));

    let item = f.service.item("c2025-04-mock-IBE").unwrap();
    assert_eq!(item.status, ReviewStatus::Corrected);
    assert_eq!(item.model_score(), Some(0.55));
    assert!(item.findings.is_empty());

    let view = f.service.transcript("c2025-04-mock-IBE").unwrap();
    assert_eq!(view.entries.len(), 2);
    assert_eq!(view.corrections.len(), 1);
}

#[test]
fn empty_note_and_unknown_item_rejected() {
    let f = fixture("Iberdrola: 0.55");
    assert_eq!(f.service.submit_correction("c2025-04-mock-IBE", "  "), Err(ReviewError::EmptyNote));
    assert!(matches!(f.service.submit_correction("nope", "x"), Err(ReviewError::NotFound(_))));
    assert!(matches!(f.service.approve_scores("nope", 0.5), Err(ReviewError::NotFound(_))));
}

#[test]
fn unusable_follow_up_leaves_item_unchanged() {
    let f = fixture("I cannot help with that.");
    let before = f.service.item("c2025-04-mock-IBE").unwrap();
    assert!(matches!(f.service.submit_correction(&before.item_id, "fix it"), Err(ReviewError::Parse(_))));
    assert_eq!(f.service.item(&before.item_id).unwrap(), before);

    let state = RunLedger::replay(&f.ledger_path).unwrap().state;
    assert!(state.pending_corrections.is_empty());
}

#[test]
fn approval_locks_and_publishes_when_cycle_complete() {
    let f = fixture("Iberdrola: 0.55");
    assert_eq!(f.service.approve_scores("c2025-04-mock-IBE", 1.5), Err(ReviewError::InvalidScore(1.5)));

    let first = f.service.approve_scores("c2025-04-mock-IBE", 0.6).unwrap();
    assert!(first.published.is_none());
    assert!((first.event.delta.unwrap() - (0.6 - 0.62)).abs() < 1e-12);
    assert_eq!(f.service.approve_scores("c2025-04-mock-IBE", 0.6), Err(ReviewError::ItemLocked("c2025-04-mock-IBE".into())));
    assert_eq!(f.service.submit_correction("c2025-04-mock-IBE", "again"), Err(ReviewError::ItemLocked("c2025-04-mock-IBE".into())));

    let second = f.service.approve_scores("c2025-04-mock-SAN", 0.4).unwrap();
    let signal = second.published.expect("signal after last approval");
    assert_eq!(signal.strategy, SignalStrategy::Cot);
    assert_eq!(signal.signal_date, d(2025, 4, 1));
    assert_eq!(signal.scores.get(&Ticker::from("IBE")), Some(&0.6));
    assert!(f.service.list_pending(&"2025-04".into()).unwrap().is_empty());
}

#[test]
fn restore_from_ledger_matches_live_state() {
    let f = fixture("Iberdrola: 0.55");
    f.service.submit_correction("c2025-04-mock-IBE", "fix").unwrap();
    f.service.approve_scores("c2025-04-mock-SAN", 0.4).unwrap();

    let state = RunLedger::replay(&f.ledger_path).unwrap().state;
    let fresh = fixture("Iberdrola: 0.55");
    fresh.service.restore(&state);
    for id in ["c2025-04-mock-IBE", "c2025-04-mock-SAN"] {
        assert_eq!(fresh.service.item(id).unwrap(), f.service.item(id).unwrap());
    }
    assert_eq!(fresh.service.transcript("c2025-04-mock-IBE").unwrap().corrections.len(), 1);
}

#[test]
fn auto_review_corrects_then_approves() {
    let f = fixture("Iberdrola: 0.55");
    let signal = f.service.auto_review(&"2025-04".into(), &"mock".into(), 2).unwrap().expect("published");
    assert_eq!(signal.scores.get(&Ticker::from("IBE")), Some(&0.55));
    assert_eq!(signal.scores.get(&Ticker::from("SAN")), Some(&0.40));
    assert_eq!(f.service.item("c2025-04-mock-IBE").unwrap().iterations, 1);
}

#[test]
fn concurrent_corrections_on_one_item_do_not_interleave() {
    let f = Arc::new(fixture("Iberdrola: 0.55"));
    let ok = Arc::new(AtomicUsize::new(0));
    std::thread::scope(|s| {
        for _ in 0..4 {
            let (f, ok) = (f.clone(), ok.clone());
            s.spawn(move || {
                if f.service.submit_correction("c2025-04-mock-IBE", "fix").is_ok() {
                    ok.fetch_add(1, Ordering::SeqCst);
                }
            });
        }
    });
    let n = ok.load(Ordering::SeqCst) as u32;
    let view = f.service.transcript("c2025-04-mock-IBE").unwrap();
    assert_eq!(view.entries.len() as u32, 1 + n);
    assert_eq!(f.service.item("c2025-04-mock-IBE").unwrap().iterations, n);
    let turns: Vec<usize> = view.corrections.iter().map(|c| c.response.turn).collect();
    assert_eq!(turns, (1..=n as usize).collect::<Vec<_>>());
}
