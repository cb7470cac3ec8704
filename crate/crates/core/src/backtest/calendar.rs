use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::BacktestError;
use crate::types::CycleId;

/// One monthly holding period with its information cutoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyCycle {
    #[serde(rename = "cycle_id")]
    pub id: CycleId,
    pub first_day: NaiveDate,
    pub last_day: NaiveDate,
    pub cutoff: NaiveDate,
}

impl MonthlyCycle {
    pub fn new(id: impl Into<CycleId>, first_day: NaiveDate, last_day: NaiveDate, cutoff: NaiveDate) -> Result<Self, BacktestError> {
        let cycle = Self { id: id.into(), first_day, last_day, cutoff };
        cycle.check()?;
        Ok(cycle)
    }

    /// Cycle whose cutoff is the last calendar day of the prior month.
    pub fn with_month_end_cutoff(id: impl Into<CycleId>, first_day: NaiveDate, last_day: NaiveDate) -> Result<Self, BacktestError> {
        let month_start = first_day.with_day(1).expect("day 1 exists");
        let cutoff = month_start.pred_opt().ok_or_else(|| BacktestError::Calendar("date underflow".into()))?;
        Self::new(id, first_day, last_day, cutoff)
    }

    pub fn check(&self) -> Result<(), BacktestError> {
        if !(self.cutoff < self.first_day && self.first_day <= self.last_day) {
            return Err(BacktestError::Calendar(format!(
                "cycle {}: need cutoff < first day <= last day, got {} / {} / {}",
                self.id, self.cutoff, self.first_day, self.last_day
            )));
        }
        Ok(())
    }
}

/// Reads `cycle_id,first_day,last_day,cutoff` CSV; cycles must ascend.
pub fn read_calendar_from<R: Read>(reader: R) -> Result<Vec<MonthlyCycle>, BacktestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<MonthlyCycle> = Vec::new();
    for (i, row) in rdr.deserialize::<MonthlyCycle>().enumerate() {
        let cycle = row.map_err(|e| BacktestError::Calendar(format!("line {}: {e}", i + 2)))?;
        cycle.check()?;
        if let Some(prev) = out.last() {
            if cycle.first_day <= prev.last_day {
                return Err(BacktestError::Calendar(format!("cycle {} overlaps {}", cycle.id, prev.id)));
            }
        }
        out.push(cycle);
    }
    Ok(out)
}

pub fn read_calendar(path: impl AsRef<Path>) -> Result<Vec<MonthlyCycle>, BacktestError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| BacktestError::Calendar(format!("{}: {e}", path.as_ref().display())))?;
    read_calendar_from(std::io::BufReader::new(file))
}

pub fn write_calendar<W: Write>(calendar: &[MonthlyCycle], writer: W) -> Result<(), BacktestError> {
    let mut w = csv::Writer::from_writer(writer);
    for c in calendar {
        w.serialize(c).map_err(|e| BacktestError::Calendar(e.to_string()))?;
    }
    w.flush().map_err(|e| BacktestError::Calendar(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn month_end_cutoff() {
        let c = MonthlyCycle::with_month_end_cutoff("2025-04", d("2025-04-01"), d("2025-04-30")).unwrap();
        assert_eq!(c.cutoff, d("2025-03-31"));
    }

    #[test]
    fn rejects_inverted_dates() {
        assert!(MonthlyCycle::new("x", d("2025-04-01"), d("2025-03-30"), d("2025-03-31")).is_err());
        assert!(MonthlyCycle::new("x", d("2025-04-01"), d("2025-04-30"), d("2025-04-01")).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let cal = vec![
            MonthlyCycle::with_month_end_cutoff("2025-04", d("2025-04-01"), d("2025-04-30")).unwrap(),
            MonthlyCycle::with_month_end_cutoff("2025-05", d("2025-05-02"), d("2025-05-30")).unwrap(),
        ];
        let mut buf = Vec::new();
        write_calendar(&cal, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("cycle_id,first_day,last_day,cutoff"));
        assert_eq!(read_calendar_from(buf.as_slice()).unwrap(), cal);
    }

    #[test]
    fn overlapping_cycles_rejected() {
        let csv = "cycle_id,first_day,last_day,cutoff\na,2025-04-01,2025-04-30,2025-03-31\nb,2025-04-15,2025-05-30,2025-04-14\n";
        assert!(read_calendar_from(csv.as_bytes()).is_err());
    }
}
