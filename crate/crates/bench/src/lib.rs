//! Fixtures shared by the benchmarks in `benches/`.

use alphalab_core::parse::Universe;
use alphalab_core::scoring::Direction;
use alphalab_core::{MetricObservation, ScoringFramework};
use chrono::NaiveDate;

/// One observation per firm and framework metric, spread deterministically
/// over each metric's natural scale.
pub fn observations(framework: &ScoringFramework, universe: &Universe, as_of: NaiveDate) -> Vec<MetricObservation> {
    let metrics: Vec<_> = framework.categories().iter().flat_map(|c| &c.metrics).collect();
    let mut out = Vec::new();
    for (i, member) in universe.members().iter().enumerate() {
        for (j, metric) in metrics.iter().enumerate() {
            let u = ((i * 37 + j * 11) % 101) as f64 / 100.0;
            let raw_value = match metric.direction {
                Direction::PreScored => u,
                Direction::MidpointBetter => 100.0 * u,
                Direction::HigherBetter | Direction::LowerBetter => 10.0 * u - 2.0,
            };
            out.push(MetricObservation { firm: member.ticker.clone(), metric: metric.id.clone(), raw_value, as_of, source: "bench".into() });
        }
    }
    out
}
