use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{CanonicalField, RawLineItem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("top-level JSON value is not an object")]
    NotAnObject,
}

/// Raw strings as returned by the model, before any normalization.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartialInvoice {
    pub fields: BTreeMap<CanonicalField, String>,
    pub line_items: Vec<RawLineItem>,
    /// Response keys that map to nothing known, in response order.
    pub unparsed_keys: Vec<String>,
}

const SYNONYMS: &[(&str, CanonicalField)] = &[
    ("invoice_no", CanonicalField::InvoiceNumber),
    ("invoice_num", CanonicalField::InvoiceNumber),
    ("invoice_id", CanonicalField::InvoiceNumber),
    ("invoice", CanonicalField::InvoiceNumber),
    ("inv_no", CanonicalField::InvoiceNumber),
    ("number", CanonicalField::InvoiceNumber),
    ("date", CanonicalField::InvoiceDate),
    ("issue_date", CanonicalField::InvoiceDate),
    ("date_of_issue", CanonicalField::InvoiceDate),
    ("invoice_dt", CanonicalField::InvoiceDate),
    ("due", CanonicalField::DueDate),
    ("payment_due", CanonicalField::DueDate),
    ("due_by", CanonicalField::DueDate),
    ("vendor", CanonicalField::VendorName),
    ("supplier", CanonicalField::VendorName),
    ("supplier_name", CanonicalField::VendorName),
    ("seller", CanonicalField::VendorName),
    ("seller_name", CanonicalField::VendorName),
    ("supplier_address", CanonicalField::VendorAddress),
    ("seller_address", CanonicalField::VendorAddress),
    ("bill_to", CanonicalField::BillingAddress),
    ("billing", CanonicalField::BillingAddress),
    ("ship_to", CanonicalField::ShippingAddress),
    ("shipping", CanonicalField::ShippingAddress),
    ("delivery_address", CanonicalField::ShippingAddress),
    ("currency_code", CanonicalField::Currency),
    ("sub_total", CanonicalField::Subtotal),
    ("net_amount", CanonicalField::Subtotal),
    ("tax", CanonicalField::TaxAmount),
    ("vat", CanonicalField::TaxAmount),
    ("gst", CanonicalField::TaxAmount),
    ("vat_rate", CanonicalField::TaxRate),
    ("discount", CanonicalField::DiscountAmount),
    ("total", CanonicalField::TotalAmount),
    ("grand_total", CanonicalField::TotalAmount),
    ("amount_due", CanonicalField::TotalAmount),
    ("total_due", CanonicalField::TotalAmount),
    ("balance_due", CanonicalField::TotalAmount),
    ("weight", CanonicalField::WeightKg),
    ("net_weight", CanonicalField::WeightKg),
    ("gross_weight", CanonicalField::WeightKg),
];

/// `"Invoice No."` and `"invoiceNo"` both become `invoice_no`.
fn normalize_key(key: &str) -> String {
    let mut out = String::new();
    let mut prev_lower = false;
    for c in key.chars() {
        if c.is_alphanumeric() {
            if c.is_uppercase() && prev_lower {
                out.push('_');
            }
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            out.extend(c.to_lowercase());
        } else {
            if !out.ends_with('_') && !out.is_empty() {
                out.push('_');
            }
            prev_lower = false;
        }
    }
    out.trim_end_matches('_').to_string()
}

pub fn field_for_key(key: &str) -> Option<CanonicalField> {
    let k = normalize_key(key);
    CanonicalField::from_str(&k)
        .ok()
        .or_else(|| SYNONYMS.iter().find(|(s, _)| *s == k).map(|(_, f)| *f))
}

/// Scalars become strings; null, empty strings and containers yield None.
fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn line_item(v: &Value) -> Option<RawLineItem> {
    match v {
        Value::Object(m) => {
            let mut item = RawLineItem::default();
            for (k, v) in m {
                let slot = match normalize_key(k).as_str() {
                    "description" | "desc" | "item" | "name" | "product" | "service" => &mut item.description,
                    "quantity" | "qty" | "units" | "hours" => &mut item.quantity,
                    "unit_price" | "price" | "rate" | "unit_cost" => &mut item.unit_price,
                    "amount" | "total" | "line_total" | "line_amount" => &mut item.amount,
                    _ => continue,
                };
                *slot = scalar(v);
            }
            Some(item)
        }
        Value::Array(a) => {
            let at = |i: usize| a.get(i).and_then(scalar);
            Some(RawLineItem {
                description: at(0),
                quantity: at(1),
                unit_price: at(2),
                amount: at(3),
            })
        }
        _ => None,
    }
}

/// Map a strict JSON object onto the canonical fields. Keys match by
/// case-insensitive name or synonym; the first occurrence of a field wins.
/// Anything that does not map is listed in `unparsed_keys`.
pub fn parse_extraction(json_text: &str) -> Result<PartialInvoice, ParseError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| ParseError::InvalidJson(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ParseError::NotAnObject);
    };
    Ok(from_object(&obj))
}

fn from_object(obj: &Map<String, Value>) -> PartialInvoice {
    let mut out = PartialInvoice::default();
    for (key, v) in obj {
        let nk = normalize_key(key);
        if nk == "line_items" || nk == "items" || nk == "lines" {
            match v {
                Value::Array(items) => out.line_items.extend(items.iter().filter_map(line_item)),
                Value::Null => {}
                _ => out.unparsed_keys.push(key.clone()),
            }
            continue;
        }
        match field_for_key(key) {
            Some(field) => {
                if let Some(s) = scalar(v) {
                    out.fields.entry(field).or_insert(s);
                } else if !v.is_null() && !matches!(v, Value::String(_)) {
                    out.unparsed_keys.push(key.clone());
                }
            }
            None => out.unparsed_keys.push(key.clone()),
        }
    }
    out
}
