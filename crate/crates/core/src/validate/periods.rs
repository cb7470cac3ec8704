//! Recognition of the date and period labels models attach to inputs
//! ("2025-03-31", "Q1 2025", "FY2024", "March 2025", "2025").

use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate};
use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodKind {
    Day,
    Month,
    Quarter,
    Half,
    Year,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub kind: PeriodKind,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Period {
    fn month_index(d: NaiveDate) -> f64 {
        (d.year() * 12 + d.month0() as i32) as f64
    }

    /// Midpoint of the period on a month grid.
    pub fn mid_month(&self) -> f64 {
        (Self::month_index(self.start) + Self::month_index(self.end)) / 2.0
    }

    /// Earliest date the period's information could exist, for cutoff checks.
    /// Fiscal labels (quarters, halves, years) are not publication dates and
    /// yield `None`.
    pub fn information_date(&self) -> Option<NaiveDate> {
        match self.kind {
            PeriodKind::Day | PeriodKind::Month => Some(self.start),
            _ => None,
        }
    }
}

fn pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let month = r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|jun(?:e)?|jul(?:y)?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?|enero|febrero|marzo|abril|mayo|junio|julio|agosto|septiembre|octubre|noviembre|diciembre)";
        Regex::new(&format!(
            r"(?ix)
            (?P<ymd>\b(?P<ymd_y>\d{{4}})[-/.](?P<ymd_m>\d{{1,2}})[-/.](?P<ymd_d>\d{{1,2}})\b)
          | (?P<dmy>\b(?P<dmy_d>\d{{1,2}})[-/.](?P<dmy_m>\d{{1,2}})[-/.](?P<dmy_y>\d{{4}})\b)
          | (?P<dny>\b(?P<dny_d>\d{{1,2}})(?:st|nd|rd|th)?\s+(?:de\s+)?(?P<dny_m>{month})\.?,?\s+(?:de\s+)?(?P<dny_y>\d{{4}})\b)
          | (?P<mdy>\b(?P<mdy_m>{month})\.?\s+(?P<mdy_d>\d{{1,2}}),\s*(?P<mdy_y>\d{{4}})\b)
          | (?P<ym>\b(?P<ym_y>\d{{4}})-(?P<ym_m>\d{{1,2}})\b)
          | (?P<my>\b(?P<my_m>\d{{1,2}})/(?P<my_y>\d{{4}})\b)
          | (?P<ny>\b(?P<ny_m>{month})\.?\s+(?:de\s+)?(?P<ny_y>\d{{4}})\b)
          | (?P<q1>\bQ(?P<q1_q>[1-4])[\s\-/]*(?:FY)?(?P<q1_y>\d{{4}}|\d{{2}})\b)
          | (?P<q2>\b(?P<q2_q>[1-4])Q[\s\-/]*(?P<q2_y>\d{{4}}|\d{{2}})\b)
          | (?P<q3>\b(?P<q3_y>\d{{4}})[\s\-/]*Q(?P<q3_q>[1-4])\b)
          | (?P<h1>\bH(?P<h1_h>[12])[\s\-/]*(?P<h1_y>\d{{4}}|\d{{2}})\b)
          | (?P<h2>\b(?P<h2_h>[12])H[\s\-/]*(?P<h2_y>\d{{4}}|\d{{2}})\b)
          | (?P<fy>\bFY[\s\-]*(?P<fy_y>\d{{4}}|\d{{2}})E?\b)
          | (?P<y>\b(?P<y_y>(?:19|20)\d{{2}})E?\b)
            "
        ))
        .expect("period regex compiles")
    })
}

fn month_number(name: &str) -> Option<u32> {
    let n = name.to_lowercase();
    let table = [
        ("jan", 1), ("ene", 1), ("feb", 2), ("mar", 3), ("apr", 4), ("abr", 4), ("may", 5),
        ("jun", 6), ("jul", 7), ("aug", 8), ("ago", 8), ("sep", 9), ("oct", 10), ("nov", 11),
        ("dec", 12), ("dic", 12),
    ];
    table.iter().find(|(p, _)| n.starts_with(p)).map(|(_, m)| *m)
}

fn year(text: &str) -> Option<i32> {
    let y: i32 = text.parse().ok()?;
    Some(if text.len() == 2 { 2000 + y } else { y })
}

fn month_end(y: i32, m: u32) -> Option<NaiveDate> {
    let (ny, nm) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
    NaiveDate::from_ymd_opt(ny, nm, 1)?.pred_opt()
}

fn span(kind: PeriodKind, y: i32, first_month: u32, months: u32) -> Option<Period> {
    Some(Period {
        kind,
        start: NaiveDate::from_ymd_opt(y, first_month, 1)?,
        end: month_end(y, first_month + months - 1)?,
    })
}

fn day(y: i32, m: u32, d: u32) -> Option<Period> {
    let date = NaiveDate::from_ymd_opt(y, m, d)?;
    Some(Period { kind: PeriodKind::Day, start: date, end: date })
}

/// Every period label found in `text`, left to right.
pub fn find_periods(text: &str) -> Vec<Period> {
    let mut out = Vec::new();
    for caps in pattern().captures_iter(text) {
        let g = |name: &str| caps.name(name).map(|m| m.as_str());
        let num = |name: &str| g(name).and_then(|s| s.parse::<u32>().ok());
        let parsed = if g("ymd").is_some() {
            day(year(g("ymd_y").unwrap()).unwrap_or(0), num("ymd_m").unwrap_or(0), num("ymd_d").unwrap_or(0))
        } else if g("dmy").is_some() {
            day(year(g("dmy_y").unwrap()).unwrap_or(0), num("dmy_m").unwrap_or(0), num("dmy_d").unwrap_or(0))
        } else if g("dny").is_some() {
            month_number(g("dny_m").unwrap()).and_then(|m| day(year(g("dny_y").unwrap())?, m, num("dny_d")?))
        } else if g("mdy").is_some() {
            month_number(g("mdy_m").unwrap()).and_then(|m| day(year(g("mdy_y").unwrap())?, m, num("mdy_d")?))
        } else if g("ym").is_some() {
            num("ym_m").and_then(|m| span(PeriodKind::Month, year(g("ym_y")?)?, m, 1))
        } else if g("my").is_some() {
            num("my_m").and_then(|m| span(PeriodKind::Month, year(g("my_y")?)?, m, 1))
        } else if g("ny").is_some() {
            month_number(g("ny_m").unwrap()).and_then(|m| span(PeriodKind::Month, year(g("ny_y")?)?, m, 1))
        } else if g("q1").is_some() || g("q2").is_some() || g("q3").is_some() {
            let (q, y) = if g("q1").is_some() {
                (num("q1_q"), g("q1_y"))
            } else if g("q2").is_some() {
                (num("q2_q"), g("q2_y"))
            } else {
                (num("q3_q"), g("q3_y"))
            };
            q.zip(y.and_then(year)).and_then(|(q, y)| span(PeriodKind::Quarter, y, (q - 1) * 3 + 1, 3))
        } else if g("h1").is_some() || g("h2").is_some() {
            let (h, y) = if g("h1").is_some() { (num("h1_h"), g("h1_y")) } else { (num("h2_h"), g("h2_y")) };
            h.zip(y.and_then(year)).and_then(|(h, y)| span(PeriodKind::Half, y, (h - 1) * 6 + 1, 6))
        } else if g("fy").is_some() {
            g("fy_y").and_then(year).and_then(|y| span(PeriodKind::Year, y, 1, 12))
        } else {
            g("y_y").and_then(year).and_then(|y| span(PeriodKind::Year, y, 1, 12))
        };
        if let Some(p) = parsed {
            out.push(p);
        }
    }
    out
}
