//! Regex entity extraction and numeric OCR-confusion repair. These corroborate
//! the model's answers or stand in when it fails.

mod confusion;
mod dates;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{CanonicalField, Currency};

pub use confusion::{correct_numeric_ocr, is_numeric_context, ConfusionError, ConfusionMap};
pub(crate) use dates::first_date_shape;
pub use dates::{extract_dates, DateCandidate};

/// A regex hit. `span` holds character offsets into the searched text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegexCandidate {
    pub field: CanonicalField,
    pub raw: String,
    pub span: (usize, usize),
    pub pattern_id: String,
    pub currency_hint: Option<Currency>,
}

/// Slice by character offsets.
pub fn char_slice(text: &str, span: (usize, usize)) -> String {
    text.chars().skip(span.0).take(span.1 - span.0).collect()
}

pub(crate) fn char_span(text: &str, start: usize, end: usize) -> (usize, usize) {
    let s = text[..start].chars().count();
    (s, s + text[start..end].chars().count())
}

static INVOICE_NO: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\binv(?:oice)?\.?[^\S\n]*(?:no\b|#|num(?:ber)?\b|id\b)[:.#]*[^\S\n]*([A-Z0-9][A-Z0-9/-]{1,24})")
        .expect("invoice number pattern")
});

/// Label-anchored invoice identifiers, topmost first. The identifier must
/// contain a digit, so a following label word is never taken.
pub fn extract_invoice_number(text: &str) -> Vec<RegexCandidate> {
    INVOICE_NO
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(1)?;
            let raw = m.as_str().trim_end_matches(['-', '/']);
            if !raw.chars().any(|ch| ch.is_ascii_digit()) {
                return None;
            }
            Some(RegexCandidate {
                field: CanonicalField::InvoiceNumber,
                raw: raw.to_string(),
                span: char_span(text, m.start(), m.start() + raw.len()),
                pattern_id: "invoice_number_label".into(),
                currency_hint: None,
            })
        })
        .collect()
}

static AMOUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"(?i)\b(grand[^\S\n]+total|total[^\S\n]+due|total[^\S\n]+amount|amount[^\S\n]+due|balance[^\S\n]+due|amount[^\S\n]+payable",
        r"|sub[^\S\n]*-?[^\S\n]*total|net[^\S\n]+amount|tax[^\S\n]+amount|sales[^\S\n]+tax|total|tax|vat|gst|discount)\b",
        r"(?:[^\S\n]*\(?[^\S\n]*\d{1,2}(?:\.\d+)?[^\S\n]*%[^\S\n]*\)?)?",
        r"[^\S\n]*[:.]?[^\S\n]*(?:([A-Z]{3})[^\S\n]*)?([$€£¥₹])?[^\S\n]*",
        r"(-?(?:\d{1,3}(?:,\d{3})+(?:\.\d{1,2})?|\d{1,3}(?:\.\d{3})+(?:,\d{1,2})?|\d+(?:[.,]\d{1,2})?))\b",
    ))
    .expect("amount pattern")
});

fn amount_field(label: &str) -> CanonicalField {
    let l: String = label.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    match l.as_str() {
        "subtotal" | "netamount" => CanonicalField::Subtotal,
        "taxamount" | "salestax" | "tax" | "vat" | "gst" => CanonicalField::TaxAmount,
        "discount" => CanonicalField::DiscountAmount,
        _ => CanonicalField::TotalAmount,
    }
}

/// Rough magnitude for ranking; handles both separator conventions.
fn magnitude(raw: &str) -> f64 {
    let digits: String = raw.chars().filter(|c| c.is_ascii_digit() || *c == '.' || *c == ',').collect();
    let cleaned = match (digits.rfind('.'), digits.rfind(',')) {
        (Some(d), Some(c)) if c > d => digits.replace('.', "").replace(',', "."),
        (None, Some(c)) if digits.len() - c == 3 && digits.matches(',').count() == 1 && c <= 3 => digits.replace(',', "."),
        _ => digits.replace(',', ""),
    };
    cleaned.parse().unwrap_or(0.0)
}

/// Labelled amounts. Totals come first, largest first; the rest follow in
/// text order.
pub fn extract_amounts(text: &str) -> Vec<RegexCandidate> {
    let mut out: Vec<RegexCandidate> = AMOUNT
        .captures_iter(text)
        .filter_map(|c| {
            let label = c.get(1)?.as_str();
            let num = c.get(4)?;
            let hint = c
                .get(3)
                .and_then(|s| s.as_str().chars().next())
                .and_then(Currency::from_symbol)
                .or_else(|| c.get(2).and_then(|s| Currency::new(&s.as_str().to_uppercase()).ok()));
            Some(RegexCandidate {
                field: amount_field(label),
                raw: num.as_str().to_string(),
                span: char_span(text, num.start(), num.end()),
                pattern_id: format!("amount_label:{}", label.to_lowercase()),
                currency_hint: hint,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        let ta = a.field == CanonicalField::TotalAmount;
        let tb = b.field == CanonicalField::TotalAmount;
        tb.cmp(&ta).then_with(|| {
            if ta && tb {
                magnitude(&b.raw).total_cmp(&magnitude(&a.raw))
            } else {
                a.span.0.cmp(&b.span.0)
            }
        })
    });
    out
}
