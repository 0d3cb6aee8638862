use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::field::{CanonicalField, FieldValue};
use super::money::{Currency, Money};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineItem {
    pub description: String,
    pub quantity: Decimal,
    pub unit_price: Money,
    pub amount: Money,
}

/// A line item as extracted, before normalization.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RawLineItem {
    pub description: Option<String>,
    pub quantity: Option<String>,
    pub unit_price: Option<String>,
    pub amount: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Passed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub outcome: CheckOutcome,
    pub detail: String,
    pub fields_involved: Vec<CanonicalField>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.outcome == CheckOutcome::Passed
    }

    pub fn failed(&self) -> bool {
        self.outcome == CheckOutcome::Failed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn get(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.failed())
    }

    pub fn all_passed(&self) -> bool {
        !self.checks.iter().any(Check::failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvoiceStatus {
    AutoApproved,
    NeedsReview,
    Corrected,
    RejectedDuplicate,
}

impl InvoiceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            InvoiceStatus::AutoApproved => "auto_approved",
            InvoiceStatus::NeedsReview => "needs_review",
            InvoiceStatus::Corrected => "corrected",
            InvoiceStatus::RejectedDuplicate => "rejected_duplicate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyResult {
    pub flagged: bool,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedInvoice {
    pub fields: BTreeMap<CanonicalField, FieldValue>,
    pub line_items: Vec<LineItem>,
    pub validation_report: ValidationReport,
    pub overall_confidence: f64,
    pub status: InvoiceStatus,
    #[serde(default)]
    pub anomaly: Option<AnomalyResult>,
}

impl ExtractedInvoice {
    pub fn new(fields: BTreeMap<CanonicalField, FieldValue>, line_items: Vec<LineItem>) -> Self {
        let overall = overall_confidence(&fields);
        ExtractedInvoice {
            fields,
            line_items,
            validation_report: ValidationReport::default(),
            overall_confidence: overall,
            status: InvoiceStatus::NeedsReview,
            anomaly: None,
        }
    }

    pub fn get(&self, field: CanonicalField) -> Option<&FieldValue> {
        self.fields.get(&field)
    }

    pub fn money(&self, field: CanonicalField) -> Option<Money> {
        self.fields.get(&field).and_then(|v| v.normalized.as_money())
    }

    pub fn text(&self, field: CanonicalField) -> Option<String> {
        self.fields.get(&field).map(|v| v.normalized.display())
    }

    /// Invoice currency: the explicit currency field, else the first money
    /// field's currency.
    pub fn currency(&self) -> Option<Currency> {
        if let Some(c) = self
            .fields
            .get(&CanonicalField::Currency)
            .and_then(|v| v.normalized.as_text())
            .and_then(|s| Currency::new(s).ok())
        {
            return Some(c);
        }
        self.fields
            .values()
            .find_map(|v| v.normalized.as_money())
            .map(|m| m.currency)
            .or_else(|| self.line_items.first().map(|l| l.amount.currency))
    }
}

/// Minimum confidence over the required fields; a missing required field
/// makes the whole invoice zero.
pub fn overall_confidence(fields: &BTreeMap<CanonicalField, FieldValue>) -> f64 {
    CanonicalField::REQUIRED
        .iter()
        .map(|f| fields.get(f).map_or(0.0, |v| v.confidence))
        .fold(1.0_f64, f64::min)
}
