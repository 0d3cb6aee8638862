//! Exact money arithmetic over integer minor units.
//!
//! Every amount carries a three-letter currency code and an `i64` count of
//! minor units (cents, paise, ...). All currencies are treated as having two
//! fraction digits. Nothing in this module touches floating point.

use std::fmt;
use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of fraction digits used for every currency.
pub const MINOR_DIGITS: u32 = 2;
const MINOR_PER_MAJOR: i64 = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MoneyError {
    #[error("malformed amount {0:?}")]
    MalformedAmount(String),
    #[error("invalid currency code {0:?}")]
    InvalidCurrency(String),
    #[error("currency mismatch: {0} vs {1}")]
    CurrencyMismatch(Currency, Currency),
    #[error("amount overflow")]
    Overflow,
}

/// ISO-4217 style three letter uppercase code.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Currency([u8; 3]);

impl Currency {
    pub const USD: Currency = Currency(*b"USD");
    pub const EUR: Currency = Currency(*b"EUR");
    pub const GBP: Currency = Currency(*b"GBP");
    pub const INR: Currency = Currency(*b"INR");
    pub const JPY: Currency = Currency(*b"JPY");

    pub fn new(code: &str) -> Result<Self, MoneyError> {
        let bytes = code.as_bytes();
        if bytes.len() != 3 || !bytes.iter().all(u8::is_ascii_uppercase) {
            return Err(MoneyError::InvalidCurrency(code.to_string()));
        }
        Ok(Currency([bytes[0], bytes[1], bytes[2]]))
    }

    pub fn as_str(&self) -> &str {
        // constructor guarantees ASCII
        std::str::from_utf8(&self.0).unwrap_or("XXX")
    }

    /// Currency implied by a symbol character, if any.
    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '$' => Some(Self::USD),
            '€' => Some(Self::EUR),
            '£' => Some(Self::GBP),
            '₹' => Some(Self::INR),
            '¥' => Some(Self::JPY),
            _ => None,
        }
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Currency({})", self.as_str())
    }
}

impl FromStr for Currency {
    type Err = MoneyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Currency::new(s)
    }
}

impl Serialize for Currency {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Currency {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Currency::new(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Money {
    pub minor_units: i64,
    pub currency: Currency,
}

impl Money {
    pub fn new(minor_units: i64, currency: Currency) -> Self {
        Money {
            minor_units,
            currency,
        }
    }

    pub fn zero(currency: Currency) -> Self {
        Money::new(0, currency)
    }

    pub fn checked_add(self, other: Money) -> Result<Money, MoneyError> {
        self.same_currency(&other)?;
        self.minor_units
            .checked_add(other.minor_units)
            .map(|m| Money::new(m, self.currency))
            .ok_or(MoneyError::Overflow)
    }

    pub fn checked_sub(self, other: Money) -> Result<Money, MoneyError> {
        self.same_currency(&other)?;
        self.minor_units
            .checked_sub(other.minor_units)
            .map(|m| Money::new(m, self.currency))
            .ok_or(MoneyError::Overflow)
    }

    fn same_currency(&self, other: &Money) -> Result<(), MoneyError> {
        if self.currency != other.currency {
            return Err(MoneyError::CurrencyMismatch(self.currency, other.currency));
        }
        Ok(())
    }

    /// Multiply by an exact decimal factor, rounding half away from zero to
    /// whole minor units.
    pub fn mul_decimal_half_up(self, factor: Decimal) -> Result<Money, MoneyError> {
        let product = Decimal::from(self.minor_units)
            .checked_mul(factor)
            .ok_or(MoneyError::Overflow)?;
        let rounded = product.round_dp_with_strategy(0, RoundingStrategy::MidpointAwayFromZero);
        rounded
            .to_i64()
            .map(|m| Money::new(m, self.currency))
            .ok_or(MoneyError::Overflow)
    }

    /// Amount as an exact decimal in major units.
    pub fn to_decimal(self) -> Decimal {
        Decimal::new(self.minor_units, MINOR_DIGITS)
    }

    /// Plain decimal string with exactly two fraction digits, e.g. `"165.00"`.
    pub fn to_decimal_string(self) -> String {
        let sign = if self.minor_units < 0 { "-" } else { "" };
        let abs = self.minor_units.unsigned_abs();
        let major = abs / MINOR_PER_MAJOR as u64;
        let minor = abs % MINOR_PER_MAJOR as u64;
        format!("{sign}{major}.{minor:02}")
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&money_format(*self))
    }
}

/// Render as `"<decimal> <CODE>"`; the inverse of [`money_parse`].
pub fn money_format(m: Money) -> String {
    format!("{} {}", m.to_decimal_string(), m.currency)
}

fn is_group_separator(c: char) -> bool {
    matches!(c, ' ' | '\'' | '\u{a0}' | '\u{202f}' | '_')
}

/// Parse a human-written amount into exact minor units.
///
/// The rightmost of `.`/`,` followed by one or two trailing digits is the
/// decimal mark; every other separator groups thousands. A currency symbol
/// or a three-letter uppercase code in the text overrides `default_currency`.
pub fn money_parse(raw: &str, default_currency: Currency) -> Result<Money, MoneyError> {
    let malformed = || MoneyError::MalformedAmount(raw.to_string());
    let chars: Vec<char> = raw.chars().collect();
    let first_digit = chars
        .iter()
        .position(|c| c.is_ascii_digit())
        .ok_or_else(malformed)?;
    let last_digit = chars
        .iter()
        .rposition(|c| c.is_ascii_digit())
        .ok_or_else(malformed)?;

    let mut start = first_digit;
    if start > 0 && matches!(chars[start - 1], '.' | ',') {
        start -= 1;
    }
    let numeric = &chars[start..=last_digit];
    if numeric
        .iter()
        .any(|&c| !(c.is_ascii_digit() || c == '.' || c == ',' || is_group_separator(c)))
    {
        return Err(malformed());
    }

    let prefix: String = chars[..start].iter().collect();
    let suffix: String = chars[last_digit + 1..].iter().collect();
    let currency = detect_currency(&prefix)
        .or_else(|| detect_currency(&suffix))
        .unwrap_or(default_currency);
    let negative = prefix.contains('-')
        || prefix.contains('−')
        || (prefix.contains('(') && suffix.contains(')'))
        || suffix.trim_start().starts_with('-');

    // decimal mark disambiguation
    let mark_pos = numeric.iter().rposition(|&c| c == '.' || c == ',');
    let (int_part, frac_part): (&[char], &[char]) = match mark_pos {
        Some(p) => {
            let trailing = &numeric[p + 1..];
            let trailing_digits = trailing.iter().filter(|c| c.is_ascii_digit()).count();
            if (1..=2).contains(&trailing_digits) && trailing.iter().all(|c| c.is_ascii_digit()) {
                let mark = numeric[p];
                if numeric[..p].contains(&mark) {
                    return Err(malformed());
                }
                (&numeric[..p], trailing)
            } else {
                (numeric, &[])
            }
        }
        None => (numeric, &[]),
    };

    let mut minor: i64 = 0;
    let mut saw_digit = false;
    for c in int_part.iter().filter(|c| c.is_ascii_digit()) {
        saw_digit = true;
        let d = c.to_digit(10).unwrap_or(0) as i64;
        minor = minor
            .checked_mul(10)
            .and_then(|m| m.checked_add(d))
            .ok_or(MoneyError::Overflow)?;
    }
    minor = minor
        .checked_mul(MINOR_PER_MAJOR)
        .ok_or(MoneyError::Overflow)?;
    let frac: i64 = match frac_part.len() {
        0 => 0,
        1 => frac_part[0].to_digit(10).unwrap_or(0) as i64 * 10,
        _ => {
            frac_part[0].to_digit(10).unwrap_or(0) as i64 * 10
                + frac_part[1].to_digit(10).unwrap_or(0) as i64
        }
    };
    saw_digit |= !frac_part.is_empty();
    if !saw_digit {
        return Err(malformed());
    }
    minor = minor.checked_add(frac).ok_or(MoneyError::Overflow)?;
    if negative {
        minor = -minor;
    }
    Ok(Money::new(minor, currency))
}

const KNOWN_CODES: &[&str] = &[
    "AED", "AUD", "BRL", "CAD", "CHF", "CNY", "CZK", "DKK", "EUR", "GBP", "HKD", "INR", "JPY",
    "KRW", "MXN", "NOK", "NZD", "PLN", "SAR", "SEK", "SGD", "USD", "ZAR",
];

/// Find a currency symbol or uppercase three-letter code in `text`.
pub fn detect_currency(text: &str) -> Option<Currency> {
    let mut run = String::new();
    let mut found_code = None;
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_alphabetic() {
            run.push(c);
            continue;
        }
        if run.len() == 3 && found_code.is_none() && KNOWN_CODES.contains(&run.as_str()) {
            found_code = Currency::new(&run).ok();
        }
        if run.eq_ignore_ascii_case("rs") && found_code.is_none() {
            found_code = Some(Currency::INR);
        }
        run.clear();
    }
    found_code.or_else(|| text.chars().find_map(Currency::from_symbol))
}

/// Exact sum; the empty list sums to zero in `currency`.
pub fn money_sum(items: &[Money], currency: Currency) -> Result<Money, MoneyError> {
    items
        .iter()
        .try_fold(Money::zero(currency), |acc, m| acc.checked_add(*m))
}
