use std::hint::black_box;

use alphalab_bench::observations;
use alphalab_core::gateway::{MockCall, RetryPolicy};
use alphalab_core::parse::{extract_scores, to_trace, TraceContext};
use alphalab_core::pipeline::{backtest_state, report_from_state, OpenOptions, Pipeline};
use alphalab_core::scoring::score_cross_section;
use alphalab_core::synthetic::{SyntheticWorld, DEFAULT_SEED};
use alphalab_core::validate::{run_suite, SuiteConfig};
use alphalab_core::{Config, SignalStrategy};
use criterion::{criterion_group, criterion_main, Criterion};

fn scoring(c: &mut Criterion) {
    let world = SyntheticWorld::generate(DEFAULT_SEED);
    let cycle = &world.calendar[0];
    let obs = observations(&world.framework, &world.universe, cycle.cutoff);
    c.bench_function("score_cross_section/35", |b| {
        b.iter(|| score_cross_section(&world.framework, black_box(&obs), Some(cycle.cutoff)).unwrap())
    });
}

fn parse_and_validate(c: &mut Criterion) {
    let world = SyntheticWorld::generate(DEFAULT_SEED);
    let call = MockCall { session_id: "atlas-2025-05-structured".into(), turn: 0, prompt: String::new(), attachments: vec![] };
    let answer = world.respond("atlas", &call).expect("structured answer");
    c.bench_function("extract_scores/structured", |b| b.iter(|| extract_scores(black_box(&answer), &world.universe).unwrap()));

    let parsed = extract_scores(&answer, &world.universe).unwrap();
    let ctx = TraceContext { session_id: call.session_id.as_str().into(), cycle_id: "2025-05".into(), provider: "atlas".into(), strategy: SignalStrategy::Structured };
    let traces = to_trace(&parsed, &ctx, &world.framework);
    let suite = SuiteConfig { cutoffs: world.calendar.iter().map(|c| (c.id.clone(), c.cutoff)).collect(), ..SuiteConfig::default() };
    c.bench_function("run_suite/35", |b| b.iter(|| run_suite(black_box(&traces), &suite)));
}

fn backtest_and_report(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let config = SyntheticWorld::generate(DEFAULT_SEED).write_workspace(dir.path()).unwrap();
    let options = OpenOptions { auto_review: true, retry: RetryPolicy::immediate(), ..OpenOptions::default() };
    let pipeline = Pipeline::open(Config::load(config).unwrap(), options).unwrap();
    pipeline.run_all(None, None).unwrap();
    let state = pipeline.state().unwrap();
    let k = pipeline.config().positions;
    c.bench_function("backtest/10x24", |b| b.iter(|| backtest_state(black_box(&state), pipeline.market(), pipeline.calendar(), k).unwrap()));
    pipeline.backtest().unwrap();
    let state = pipeline.state().unwrap();
    c.bench_function("report/4x6", |b| b.iter(|| report_from_state(black_box(&state), &pipeline.config().evaluation).unwrap()));
}

criterion_group!(benches, scoring, parse_and_validate, backtest_and_report);
criterion_main!(benches);
