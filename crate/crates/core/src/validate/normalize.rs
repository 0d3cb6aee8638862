use std::str::FromStr;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use rust_decimal::Decimal;
use thiserror::Error;

use crate::model::{money_parse, CanonicalField, Currency, DatePolicy, FieldKind, MoneyError, NormalizedValue};
use crate::ner::first_date_shape;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("unparseable date {0:?}")]
    UnparseableDate(String),
    #[error("impossible date {0:?}")]
    ImpossibleDate(String),
    #[error("no number in {0:?}")]
    NoNumber(String),
    #[error("unknown weight unit in {0:?}")]
    UnknownUnit(String),
    #[error("unrecognised currency {0:?}")]
    UnknownCurrency(String),
    #[error("empty value")]
    Empty,
    #[error(transparent)]
    Money(#[from] MoneyError),
}

pub fn normalize_date(raw: &str, policy: DatePolicy) -> Result<NaiveDate, NormalizeError> {
    let (readings, pattern) = first_date_shape(raw).ok_or_else(|| NormalizeError::UnparseableDate(raw.to_string()))?;
    match readings.as_slice() {
        [] => Err(NormalizeError::ImpossibleDate(raw.to_string())),
        [d] => Ok(*d),
        [day_first, month_first, ..] => Ok(match (pattern, policy) {
            ("numeric", DatePolicy::MonthFirst) => *month_first,
            _ => *day_first,
        }),
    }
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"-?\d[\d,]*(?:\.\d+)?").expect("number pattern"));

/// First number in `raw`. A lone comma followed by one or two digits is a
/// decimal mark; other commas group thousands.
pub fn parse_decimal(raw: &str) -> Result<Decimal, NormalizeError> {
    let m = NUMBER.find(raw).ok_or_else(|| NormalizeError::NoNumber(raw.to_string()))?;
    let s = m.as_str();
    let text = match s.split_once(',') {
        Some((_, tail)) if !s.contains('.') && !tail.contains(',') && (1..=2).contains(&tail.len()) => s.replace(',', "."),
        _ => s.replace(',', ""),
    };
    Decimal::from_str(&text).map_err(|_| NormalizeError::NoNumber(raw.to_string()))
}

/// Weight in kilograms. Units are found by case-insensitive substring:
/// "qtl" is 100 kg and "ton" (so also "tonne") 1000 kg; "kg" or no unit
/// leaves the value as is.
pub fn normalize_weight(raw: &str) -> Result<Decimal, NormalizeError> {
    let value = parse_decimal(raw)?;
    let lower = raw.to_lowercase();
    let factor = if lower.contains("qtl") {
        Decimal::from(100)
    } else if lower.contains("ton") {
        Decimal::from(1000)
    } else {
        let unit: String = NUMBER.replace(&lower, " ").chars().filter(|c| c.is_alphabetic()).collect();
        if unit.is_empty() || unit.starts_with("kg") || unit.starts_with("kilo") {
            Decimal::ONE
        } else {
            return Err(NormalizeError::UnknownUnit(raw.to_string()));
        }
    };
    Ok((value * factor).normalize())
}

/// Tax rate as a fraction: "10%", "10" and "0.10" all give 0.1.
pub fn normalize_rate(raw: &str) -> Result<Decimal, NormalizeError> {
    let v = parse_decimal(raw)?;
    let frac = if raw.contains('%') || v > Decimal::ONE { v / Decimal::from(100) } else { v };
    Ok(frac.normalize())
}

/// Whitespace collapsed and trimmed; commas are kept.
pub fn clean_text(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalize a raw value according to its field's kind.
pub fn normalize_field(
    field: CanonicalField,
    raw: &str,
    policy: DatePolicy,
    currency: Currency,
) -> Result<NormalizedValue, NormalizeError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(NormalizeError::Empty);
    }
    Ok(match field.kind() {
        FieldKind::Text => NormalizedValue::Text(clean_text(raw)),
        FieldKind::Date => NormalizedValue::Date(normalize_date(raw, policy)?),
        FieldKind::Money => NormalizedValue::Money(money_parse(raw, currency)?),
        FieldKind::Rate => NormalizedValue::Decimal(normalize_rate(raw)?),
        FieldKind::Weight => NormalizedValue::Decimal(normalize_weight(raw)?),
        FieldKind::CurrencyCode => {
            let c = crate::model::detect_currency(raw)
                .or_else(|| Currency::new(&raw.to_uppercase()).ok())
                .ok_or_else(|| NormalizeError::UnknownCurrency(raw.to_string()))?;
            NormalizedValue::Text(c.as_str().to_string())
        }
    })
}

/// Comparison key for agreement between extractors.
pub fn comparable(field: CanonicalField, value: &NormalizedValue) -> String {
    match (field.kind(), value) {
        (FieldKind::Text, NormalizedValue::Text(s)) => s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect(),
        (FieldKind::Money, NormalizedValue::Money(m)) => m.minor_units.to_string(),
        _ => value.display(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn dates() {
        assert_eq!(normalize_date("2024-03-04", DatePolicy::DayFirst).unwrap(), ymd(2024, 3, 4));
        assert_eq!(normalize_date("03/04/2024", DatePolicy::DayFirst).unwrap(), ymd(2024, 4, 3));
        assert_eq!(normalize_date("03/04/2024", DatePolicy::MonthFirst).unwrap(), ymd(2024, 3, 4));
        assert_eq!(normalize_date("4 March 2024", DatePolicy::MonthFirst).unwrap(), ymd(2024, 3, 4));
        assert!(matches!(normalize_date("31/02/2024", DatePolicy::DayFirst), Err(NormalizeError::ImpossibleDate(_))));
        assert!(matches!(normalize_date("soon", DatePolicy::DayFirst), Err(NormalizeError::UnparseableDate(_))));
    }

    #[test]
    fn weights() {
        let d = |s: &str| Decimal::from_str(s).unwrap();
        assert_eq!(normalize_weight("3 qtl").unwrap(), d("300"));
        assert_eq!(normalize_weight("2.5 ton").unwrap(), d("2500"));
        assert_eq!(normalize_weight("0 qtl").unwrap(), d("0"));
        assert_eq!(normalize_weight("1.5 Tonnes").unwrap(), d("1500"));
        assert_eq!(normalize_weight("1,250 kg").unwrap(), d("1250"));
        assert_eq!(normalize_weight("42").unwrap(), d("42"));
        assert!(matches!(normalize_weight("5 lbs"), Err(NormalizeError::UnknownUnit(_))));
        assert!(matches!(normalize_weight("heavy"), Err(NormalizeError::NoNumber(_))));
    }

    #[test]
    fn rates() {
        let d = |s: &str| Decimal::from_str(s).unwrap();
        assert_eq!(normalize_rate("10%").unwrap(), d("0.1"));
        assert_eq!(normalize_rate("10").unwrap(), d("0.1"));
        assert_eq!(normalize_rate("0.075").unwrap(), d("0.075"));
        assert_eq!(normalize_rate("7,5 %").unwrap(), d("0.075"));
    }

    #[test]
    fn fields() {
        let v = normalize_field(CanonicalField::TotalAmount, "$1,234.50", DatePolicy::DayFirst, Currency::EUR).unwrap();
        assert_eq!(v.as_money().unwrap().minor_units, 123450);
        assert_eq!(v.as_money().unwrap().currency, Currency::USD);
        let v = normalize_field(CanonicalField::Currency, "eur", DatePolicy::DayFirst, Currency::USD).unwrap();
        assert_eq!(v, NormalizedValue::Text("EUR".into()));
        let v = normalize_field(CanonicalField::VendorName, "  Acme   Corp ", DatePolicy::DayFirst, Currency::USD).unwrap();
        assert_eq!(v, NormalizedValue::Text("Acme Corp".into()));
        assert_eq!(comparable(CanonicalField::VendorName, &v), "acmecorp");
    }
}
