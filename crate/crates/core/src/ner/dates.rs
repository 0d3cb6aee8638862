use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::char_span;
use crate::model::{CanonicalField, DatePolicy};

/// A date mention with every calendar reading it admits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateCandidate {
    pub raw: String,
    pub span: (usize, usize),
    /// Day-first reading before month-first when both are valid.
    pub parsed: Vec<NaiveDate>,
    pub nearest_label: Option<String>,
    pub pattern_id: String,
}

impl DateCandidate {
    pub fn is_ambiguous(&self) -> bool {
        self.parsed.len() > 1
    }

    /// The reading selected by the policy.
    pub fn resolve(&self, policy: DatePolicy) -> NaiveDate {
        if self.pattern_id == "numeric" && self.parsed.len() == 2 && policy == DatePolicy::MonthFirst {
            self.parsed[1]
        } else {
            self.parsed[0]
        }
    }

    /// Field implied by the nearest label.
    pub fn field(&self) -> Option<CanonicalField> {
        let l = self.nearest_label.as_deref()?;
        if l.contains("due") || l == "pay by" {
            Some(CanonicalField::DueDate)
        } else {
            Some(CanonicalField::InvoiceDate)
        }
    }
}

const MONTHS: &str = r"(jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)";

static ISO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d{4})-(\d{1,2})-(\d{1,2})\b").expect("iso pattern"));
static NUMERIC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d{1,2})([/.])(\d{1,2})([/.])(\d{4})\b").expect("numeric date pattern"));
static DAY_MONTH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\b(\d{{1,2}})(?:st|nd|rd|th)?[^\S\n]+{MONTHS}\.?,?[^\S\n]+(\d{{4}})\b")).expect("day month pattern")
});
static MONTH_DAY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\b{MONTHS}\.?[^\S\n]+(\d{{1,2}})(?:st|nd|rd|th)?,?[^\S\n]+(\d{{4}})\b")).expect("month day pattern")
});
static DATE_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(invoice[^\S\n]+date|due[^\S\n]+date|date[^\S\n]+of[^\S\n]+issue|issue[^\S\n]+date|date[^\S\n]+issued|bill[^\S\n]+date|payment[^\S\n]+due|due[^\S\n]+by|pay[^\S\n]+by|due|dated|date)\b")
        .expect("date label pattern")
});

const LABEL_WINDOW: usize = 40;

fn month_number(name: &str) -> u32 {
    let n = name.to_lowercase();
    [
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
    ]
    .iter()
    .position(|m| n.starts_with(m))
    .map_or(0, |i| i as u32 + 1)
}

fn num(s: &str) -> u32 {
    s.parse().unwrap_or(0)
}

/// Closest label ending within the 40 characters before `start` (a byte
/// offset). Among labels ending at the same place the longest wins.
fn nearest_label(text: &str, start: usize) -> Option<String> {
    let window_start = text[..start]
        .char_indices()
        .rev()
        .nth(LABEL_WINDOW - 1)
        .map_or(0, |(i, _)| i);
    let window = &text[window_start..start];
    let mut best: Option<(usize, usize, String)> = None;
    for i in 0..window.len() {
        if !window.is_char_boundary(i) {
            continue;
        }
        if let Some(m) = DATE_LABEL.find_at(window, i) {
            if m.start() != i {
                continue;
            }
            let key = (m.end(), m.len());
            if best.as_ref().is_none_or(|(e, l, _)| key > (*e, *l)) {
                best = Some((m.end(), m.len(), m.as_str().to_string()));
            }
        }
    }
    best.map(|(_, _, s)| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
}

/// Every date-shaped substring with its valid readings (possibly none),
/// sorted by position, overlapping shapes removed.
fn date_shapes(text: &str) -> Vec<(usize, usize, Vec<NaiveDate>, &'static str)> {
    let mut hits: Vec<(usize, usize, Vec<NaiveDate>, &'static str)> = Vec::new();
    for c in ISO.captures_iter(text) {
        let m = c.get(0).expect("whole match");
        let parsed = NaiveDate::from_ymd_opt(num(&c[1]) as i32, num(&c[2]), num(&c[3]));
        hits.push((m.start(), m.end(), parsed.into_iter().collect(), "iso"));
    }
    for c in NUMERIC.captures_iter(text) {
        if c[2] != c[4] {
            continue;
        }
        let m = c.get(0).expect("whole match");
        let (a, b, y) = (num(&c[1]), num(&c[3]), num(&c[5]) as i32);
        let mut parsed = Vec::new();
        parsed.extend(NaiveDate::from_ymd_opt(y, b, a));
        if let Some(d) = NaiveDate::from_ymd_opt(y, a, b) {
            if !parsed.contains(&d) {
                parsed.push(d);
            }
        }
        hits.push((m.start(), m.end(), parsed, "numeric"));
    }
    for c in DAY_MONTH.captures_iter(text) {
        let m = c.get(0).expect("whole match");
        let parsed = NaiveDate::from_ymd_opt(num(&c[3]) as i32, month_number(&c[2]), num(&c[1]));
        hits.push((m.start(), m.end(), parsed.into_iter().collect(), "day_month"));
    }
    for c in MONTH_DAY.captures_iter(text) {
        let m = c.get(0).expect("whole match");
        let parsed = NaiveDate::from_ymd_opt(num(&c[3]) as i32, month_number(&c[1]), num(&c[2]));
        hits.push((m.start(), m.end(), parsed.into_iter().collect(), "month_day"));
    }
    hits.sort_by_key(|h| (h.0, std::cmp::Reverse(h.1)));
    let mut out = Vec::new();
    let mut last_end = 0;
    for h in hits {
        if h.0 < last_end {
            continue;
        }
        last_end = h.1;
        out.push(h);
    }
    out
}

/// Readings of the first date-shaped substring; empty when the shape
/// matched but names no real calendar day.
pub(crate) fn first_date_shape(text: &str) -> Option<(Vec<NaiveDate>, &'static str)> {
    date_shapes(text).into_iter().next().map(|(_, _, p, id)| (p, id))
}

/// Every date mention whose reading is a real calendar date, in text order.
pub fn extract_dates(text: &str) -> Vec<DateCandidate> {
    date_shapes(text)
        .into_iter()
        .filter(|h| !h.2.is_empty())
        .map(|(s, e, parsed, pattern)| DateCandidate {
            raw: text[s..e].to_string(),
            span: char_span(text, s, e),
            parsed,
            nearest_label: nearest_label(text, s),
            pattern_id: pattern.to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn labelled_numeric_date() {
        let c = extract_dates("Due Date: 03/04/2024");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].nearest_label.as_deref(), Some("due date"));
        assert_eq!(c[0].field(), Some(CanonicalField::DueDate));
        assert_eq!(c[0].parsed, [ymd(2024, 4, 3), ymd(2024, 3, 4)]);
        assert_eq!(c[0].resolve(DatePolicy::DayFirst), ymd(2024, 4, 3));
        assert_eq!(c[0].resolve(DatePolicy::MonthFirst), ymd(2024, 3, 4));
    }

    #[test]
    fn textual_months() {
        let c = extract_dates("4 March 2024 and Mar 5, 2024 and 1st Sept 2023");
        let dates: Vec<NaiveDate> = c.iter().map(|c| c.parsed[0]).collect();
        assert_eq!(dates, [ymd(2024, 3, 4), ymd(2024, 3, 5), ymd(2023, 9, 1)]);
        assert!(c.iter().all(|c| !c.is_ambiguous()));
        assert_eq!(c[0].nearest_label, None);
    }

    #[test]
    fn impossible_dates_rejected() {
        assert!(extract_dates("30/02/2024 2024-02-30 31 April 2024").is_empty());
        // 13/02 only reads day-first
        let c = extract_dates("13/02/2024");
        assert_eq!(c[0].parsed, [ymd(2024, 2, 13)]);
    }

    #[test]
    fn label_outside_window_ignored() {
        let text = format!("Invoice Date{}2024-01-02", " ".repeat(45));
        assert_eq!(extract_dates(&text)[0].nearest_label, None);
        let c = extract_dates("Invoice Date: 2024-01-02   Due Date: 2024-02-01");
        assert_eq!(c[0].field(), Some(CanonicalField::InvoiceDate));
        assert_eq!(c[1].field(), Some(CanonicalField::DueDate));
    }
}
