//! Recorded-style model responses for the replay client: mostly faithful
//! JSON, some wrapped or slightly malformed, a few wrong.

use std::collections::BTreeMap;

use invoice_core::model::CanonicalField;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayKind {
    Clean,
    Fenced,
    Prose,
    TrailingComma,
    SingleQuotes,
    /// Vendor left null.
    MissingVendor,
    /// Invoice date read a day late.
    WrongDate,
    /// Last two digits of the total swapped.
    TransposedTotal,
    /// Invoice number lost its last character.
    TruncatedNumber,
}

impl ReplayKind {
    /// Whether the response contains a wrong or missing required value.
    pub fn is_error(self) -> bool {
        matches!(
            self,
            ReplayKind::MissingVendor | ReplayKind::WrongDate | ReplayKind::TransposedTotal | ReplayKind::TruncatedNumber
        )
    }
}

/// Alternatives the error responses draw on.
pub struct Dates {
    pub shifted: String,
}

fn pick(rng: &mut ChaCha8Rng) -> ReplayKind {
    use ReplayKind::*;
    let r: f64 = rng.random();
    let bucket = |kinds: &[ReplayKind], rng: &mut ChaCha8Rng| kinds[rng.random_range(0..kinds.len())];
    if r < 0.85 {
        Clean
    } else if r < 0.95 {
        bucket(&[Fenced, Prose, TrailingComma, SingleQuotes], rng)
    } else {
        bucket(&[MissingVendor, WrongDate, TransposedTotal, TruncatedNumber], rng)
    }
}

fn swap_last_digits(s: &str) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    let digits: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_ascii_digit())
        .map(|(i, _)| i)
        .collect();
    if let [.., a, b] = digits[..] {
        if chars[a] == chars[b] {
            chars[b] = if chars[b] == '9' { '0' } else { (chars[b] as u8 + 1) as char };
        } else {
            chars.swap(a, b);
        }
    }
    chars.into_iter().collect()
}

/// Response text for one invoice. `items` are printed line cells
/// (description, quantity, unit price, amount).
pub fn response(
    printed: &BTreeMap<CanonicalField, String>,
    items: &[[String; 4]],
    dates: &Dates,
    forced: Option<ReplayKind>,
    rng: &mut ChaCha8Rng,
) -> (ReplayKind, String) {
    let kind = forced.unwrap_or_else(|| pick(rng));
    let mut obj = Map::new();
    for f in CanonicalField::ALL {
        let v = printed.get(&f).cloned();
        let v = match (kind, f) {
            (ReplayKind::MissingVendor, CanonicalField::VendorName) => None,
            (ReplayKind::WrongDate, CanonicalField::InvoiceDate) => Some(dates.shifted.clone()),
            (ReplayKind::TransposedTotal, CanonicalField::TotalAmount) => v.map(|s| swap_last_digits(&s)),
            (ReplayKind::TruncatedNumber, CanonicalField::InvoiceNumber) => v.map(|s| {
                let mut s = s;
                s.pop();
                s
            }),
            _ => v,
        };
        obj.insert(f.as_str().to_string(), v.map_or(Value::Null, Value::String));
    }
    let lines: Vec<Value> = items
        .iter()
        .map(|[d, q, u, a]| serde_json::json!({"description": d, "quantity": q, "unit_price": u, "amount": a}))
        .collect();
    obj.insert("line_items".into(), Value::Array(lines));
    let value = Value::Object(obj);
    let compact = value.to_string();
    let pretty = serde_json::to_string_pretty(&value).expect("json value");
    let text = match kind {
        ReplayKind::Fenced => format!("```json\n{pretty}\n```\n"),
        ReplayKind::Prose => format!("Here is the extracted invoice data:\n{pretty}\nLet me know if you need anything else."),
        ReplayKind::TrailingComma => {
            let body = pretty.trim_end().strip_suffix('}').expect("object").trim_end();
            format!("{body},\n}}")
        }
        ReplayKind::SingleQuotes => compact.replace('"', "'"),
        _ => compact,
    };
    (kind, text)
}
