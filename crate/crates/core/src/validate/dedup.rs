use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ingest::sha256_hex;
use crate::model::{CanonicalField, ExtractedInvoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupOutcome {
    New,
    DuplicateExact,
    DuplicateLogical,
}

impl DedupOutcome {
    pub fn is_duplicate(self) -> bool {
        self != DedupOutcome::New
    }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// SHA-256 of `vendor|number|date|total_minor|currency`, lower-cased with
/// whitespace collapsed. None unless all parts are present.
pub fn logical_hash(inv: &ExtractedInvoice) -> Option<String> {
    let vendor = inv.text(CanonicalField::VendorName)?;
    let number = inv.text(CanonicalField::InvoiceNumber)?;
    let date = inv.get(CanonicalField::InvoiceDate)?.normalized.as_date()?;
    let total = inv.money(CanonicalField::TotalAmount)?;
    let currency = inv.currency()?;
    let key = format!(
        "{}|{}|{}|{}|{}",
        collapse(&vendor),
        collapse(&number),
        date.format("%Y-%m-%d"),
        total.minor_units,
        currency.as_str().to_lowercase()
    );
    Some(sha256_hex(key.as_bytes()))
}

/// Hashes of accepted invoices. Insert-only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupIndex {
    pub raw_hashes: BTreeSet<String>,
    pub canonical_hashes: BTreeSet<String>,
}

impl DedupIndex {
    pub fn check(&self, raw_hash: &str, logical: Option<&str>) -> DedupOutcome {
        if self.raw_hashes.contains(raw_hash) {
            DedupOutcome::DuplicateExact
        } else if logical.is_some_and(|h| self.canonical_hashes.contains(h)) {
            DedupOutcome::DuplicateLogical
        } else {
            DedupOutcome::New
        }
    }

    pub fn insert(&mut self, raw_hash: &str, logical: Option<&str>) {
        self.raw_hashes.insert(raw_hash.to_string());
        if let Some(h) = logical {
            self.canonical_hashes.insert(h.to_string());
        }
    }

    /// Check, and record the hashes when the invoice is new.
    pub fn check_and_insert(&mut self, raw_bytes: &[u8], inv: &ExtractedInvoice) -> DedupOutcome {
        let raw = sha256_hex(raw_bytes);
        let logical = logical_hash(inv);
        let outcome = self.check(&raw, logical.as_deref());
        if outcome == DedupOutcome::New {
            self.insert(&raw, logical.as_deref());
        }
        outcome
    }
}
