use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{MetricObservation, ScoringError};

#[derive(Serialize, Deserialize)]
struct Row {
    firm: String,
    metric: String,
    raw_value: f64,
    as_of: NaiveDate,
    source: String,
}

/// Read `firm,metric,raw_value,as_of,source` CSV.
pub fn read_observations_from<R: Read>(reader: R) -> Result<Vec<MetricObservation>, ScoringError> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in csv.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| ScoringError::Io(format!("row {}: {e}", i + 2)))?;
        if !row.raw_value.is_finite() {
            return Err(ScoringError::InvalidValue {
                context: format!("row {} ({} {})", i + 2, row.firm, row.metric),
                value: row.raw_value,
            });
        }
        out.push(MetricObservation {
            firm: row.firm.into(),
            metric: row.metric,
            raw_value: row.raw_value,
            as_of: row.as_of,
            source: row.source,
        });
    }
    Ok(out)
}

pub fn read_observations(path: impl AsRef<Path>) -> Result<Vec<MetricObservation>, ScoringError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ScoringError::Io(format!("{}: {e}", path.display())))?;
    read_observations_from(file)
}

pub fn write_observations<W: Write>(writer: W, observations: &[MetricObservation]) -> Result<(), ScoringError> {
    let mut csv = csv::Writer::from_writer(writer);
    for o in observations {
        csv.serialize(Row {
            firm: o.firm.to_string(),
            metric: o.metric.clone(),
            raw_value: o.raw_value,
            as_of: o.as_of,
            source: o.source.clone(),
        })
        .map_err(|e| ScoringError::Io(e.to_string()))?;
    }
    csv.flush().map_err(|e| ScoringError::Io(e.to_string()))
}
