use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::money::Money;

/// The closed vocabulary of invoice fields every stage agrees on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalField {
    InvoiceNumber,
    InvoiceDate,
    DueDate,
    VendorName,
    VendorAddress,
    BillingAddress,
    ShippingAddress,
    Currency,
    Subtotal,
    TaxRate,
    TaxAmount,
    DiscountAmount,
    TotalAmount,
    WeightKg,
}

/// How a field's raw text is normalized and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Date,
    Money,
    Rate,
    Weight,
    CurrencyCode,
}

impl CanonicalField {
    pub const ALL: [CanonicalField; 14] = [
        CanonicalField::InvoiceNumber,
        CanonicalField::InvoiceDate,
        CanonicalField::DueDate,
        CanonicalField::VendorName,
        CanonicalField::VendorAddress,
        CanonicalField::BillingAddress,
        CanonicalField::ShippingAddress,
        CanonicalField::Currency,
        CanonicalField::Subtotal,
        CanonicalField::TaxRate,
        CanonicalField::TaxAmount,
        CanonicalField::DiscountAmount,
        CanonicalField::TotalAmount,
        CanonicalField::WeightKg,
    ];

    pub const REQUIRED: [CanonicalField; 4] = [
        CanonicalField::InvoiceNumber,
        CanonicalField::InvoiceDate,
        CanonicalField::VendorName,
        CanonicalField::TotalAmount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CanonicalField::InvoiceNumber => "invoice_number",
            CanonicalField::InvoiceDate => "invoice_date",
            CanonicalField::DueDate => "due_date",
            CanonicalField::VendorName => "vendor_name",
            CanonicalField::VendorAddress => "vendor_address",
            CanonicalField::BillingAddress => "billing_address",
            CanonicalField::ShippingAddress => "shipping_address",
            CanonicalField::Currency => "currency",
            CanonicalField::Subtotal => "subtotal",
            CanonicalField::TaxRate => "tax_rate",
            CanonicalField::TaxAmount => "tax_amount",
            CanonicalField::DiscountAmount => "discount_amount",
            CanonicalField::TotalAmount => "total_amount",
            CanonicalField::WeightKg => "weight_kg",
        }
    }

    /// One-line description used in the extraction prompt.
    pub fn description(self) -> &'static str {
        match self {
            CanonicalField::InvoiceNumber => "the invoice identifier printed by the issuer",
            CanonicalField::InvoiceDate => "the date the invoice was issued (not the due date)",
            CanonicalField::DueDate => "the payment due date (not the invoice date)",
            CanonicalField::VendorName => "name of the company issuing the invoice",
            CanonicalField::VendorAddress => "postal address of the issuing company",
            CanonicalField::BillingAddress => "the bill-to address (not the ship-to address)",
            CanonicalField::ShippingAddress => "the ship-to address (not the bill-to address)",
            CanonicalField::Currency => "three-letter currency code",
            CanonicalField::Subtotal => "sum of line amounts before tax",
            CanonicalField::TaxRate => "tax rate as printed, e.g. 10%",
            CanonicalField::TaxAmount => "total tax charged",
            CanonicalField::DiscountAmount => "discount subtracted from the total",
            CanonicalField::TotalAmount => "grand total payable",
            CanonicalField::WeightKg => "shipment weight with its unit as printed",
        }
    }

    pub fn kind(self) -> FieldKind {
        match self {
            CanonicalField::InvoiceDate | CanonicalField::DueDate => FieldKind::Date,
            CanonicalField::Subtotal
            | CanonicalField::TaxAmount
            | CanonicalField::DiscountAmount
            | CanonicalField::TotalAmount => FieldKind::Money,
            CanonicalField::TaxRate => FieldKind::Rate,
            CanonicalField::WeightKg => FieldKind::Weight,
            CanonicalField::Currency => FieldKind::CurrencyCode,
            _ => FieldKind::Text,
        }
    }

    pub fn is_required(self) -> bool {
        Self::REQUIRED.contains(&self)
    }

    pub fn is_numeric(self) -> bool {
        matches!(
            self.kind(),
            FieldKind::Money | FieldKind::Rate | FieldKind::Weight | FieldKind::Date
        )
    }
}

impl fmt::Display for CanonicalField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown field {0:?}")]
pub struct UnknownField(pub String);

impl FromStr for CanonicalField {
    type Err = UnknownField;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CanonicalField::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| UnknownField(s.to_string()))
    }
}

/// Index of a token within one document's token list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum NormalizedValue {
    Text(String),
    Date(NaiveDate),
    Money(Money),
    Decimal(Decimal),
}

impl NormalizedValue {
    /// Canonical string form used for export and comparison.
    pub fn display(&self) -> String {
        match self {
            NormalizedValue::Text(s) => s.clone(),
            NormalizedValue::Date(d) => d.format("%Y-%m-%d").to_string(),
            NormalizedValue::Money(m) => m.to_decimal_string(),
            NormalizedValue::Decimal(d) => d.normalize().to_string(),
        }
    }

    pub fn as_money(&self) -> Option<Money> {
        match self {
            NormalizedValue::Money(m) => Some(*m),
            _ => None,
        }
    }

    pub fn as_date(&self) -> Option<NaiveDate> {
        match self {
            NormalizedValue::Date(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            NormalizedValue::Decimal(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            NormalizedValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Embedded,
    Ocr,
    Llm,
    Regex,
    Layout,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    #[default]
    Unchecked,
    Passed,
    Failed,
}

/// Whether independent extractors confirmed the chosen value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corroboration {
    #[default]
    Uncorroborated,
    Agreed,
    Conflicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldValue {
    pub field: CanonicalField,
    pub raw_text: String,
    pub normalized: NormalizedValue,
    pub confidence: f64,
    pub provenance: Provenance,
    pub support: Vec<TokenId>,
    pub validation: ValidationStatus,
    pub corroboration: Corroboration,
    /// Source confidence before agreement and arithmetic adjustments.
    pub base_confidence: f64,
}
