use std::str::FromStr;

use thiserror::Error;

use crate::model::CanonicalField;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const DEFAULT_PHRASES: &[(&str, CanonicalField)] = &[
    ("invoice no", CanonicalField::InvoiceNumber),
    ("invoice number", CanonicalField::InvoiceNumber),
    ("invoice #", CanonicalField::InvoiceNumber),
    ("invoice num", CanonicalField::InvoiceNumber),
    ("invoice id", CanonicalField::InvoiceNumber),
    ("inv no", CanonicalField::InvoiceNumber),
    ("inv #", CanonicalField::InvoiceNumber),
    ("bill no", CanonicalField::InvoiceNumber),
    ("invoice date", CanonicalField::InvoiceDate),
    ("date of issue", CanonicalField::InvoiceDate),
    ("issue date", CanonicalField::InvoiceDate),
    ("date issued", CanonicalField::InvoiceDate),
    ("bill date", CanonicalField::InvoiceDate),
    ("date", CanonicalField::InvoiceDate),
    ("due date", CanonicalField::DueDate),
    ("payment due", CanonicalField::DueDate),
    ("due by", CanonicalField::DueDate),
    ("pay by", CanonicalField::DueDate),
    ("vendor", CanonicalField::VendorName),
    ("supplier", CanonicalField::VendorName),
    ("seller", CanonicalField::VendorName),
    ("sold by", CanonicalField::VendorName),
    ("vendor address", CanonicalField::VendorAddress),
    ("supplier address", CanonicalField::VendorAddress),
    ("bill to", CanonicalField::BillingAddress),
    ("billed to", CanonicalField::BillingAddress),
    ("invoice to", CanonicalField::BillingAddress),
    ("billing address", CanonicalField::BillingAddress),
    ("ship to", CanonicalField::ShippingAddress),
    ("shipped to", CanonicalField::ShippingAddress),
    ("deliver to", CanonicalField::ShippingAddress),
    ("shipping address", CanonicalField::ShippingAddress),
    ("delivery address", CanonicalField::ShippingAddress),
    ("currency", CanonicalField::Currency),
    ("subtotal", CanonicalField::Subtotal),
    ("sub total", CanonicalField::Subtotal),
    ("net amount", CanonicalField::Subtotal),
    ("tax rate", CanonicalField::TaxRate),
    ("vat rate", CanonicalField::TaxRate),
    ("gst rate", CanonicalField::TaxRate),
    ("tax", CanonicalField::TaxAmount),
    ("tax amount", CanonicalField::TaxAmount),
    ("sales tax", CanonicalField::TaxAmount),
    ("vat", CanonicalField::TaxAmount),
    ("gst", CanonicalField::TaxAmount),
    ("discount", CanonicalField::DiscountAmount),
    ("total", CanonicalField::TotalAmount),
    ("total due", CanonicalField::TotalAmount),
    ("total amount", CanonicalField::TotalAmount),
    ("grand total", CanonicalField::TotalAmount),
    ("amount due", CanonicalField::TotalAmount),
    ("balance due", CanonicalField::TotalAmount),
    ("amount payable", CanonicalField::TotalAmount),
    ("weight", CanonicalField::WeightKg),
    ("net weight", CanonicalField::WeightKg),
    ("gross weight", CanonicalField::WeightKg),
];

/// Lower-cased words of a label, with punctuation dropped and `#` kept as
/// its own word.
pub fn label_words(text: &str) -> Vec<String> {
    let spaced = text.replace('#', " # ");
    spaced
        .split_whitespace()
        .map(|w| {
            if w == "#" {
                w.to_string()
            } else {
                w.chars()
                    .filter(|c| c.is_alphanumeric())
                    .flat_map(char::to_lowercase)
                    .collect()
            }
        })
        .filter(|w: &String| !w.is_empty())
        .collect()
}

/// Label phrases mapped to canonical fields.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<(Vec<String>, CanonicalField)>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let mut lx = Lexicon { entries: Vec::new() };
        for (phrase, field) in DEFAULT_PHRASES {
            lx.insert(phrase, *field);
        }
        lx
    }
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon { entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, phrase: &str, field: CanonicalField) {
        let words = label_words(phrase);
        if words.is_empty() {
            return;
        }
        self.entries.retain(|(w, _)| *w != words);
        self.entries.push((words, field));
    }

    /// Add `phrase<TAB>field` lines; blank lines and `#` comments are ignored.
    pub fn extend_from_tsv(&mut self, text: &str) -> Result<(), LexiconError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with("# ") {
                continue;
            }
            let (phrase, field) = line.split_once('\t').ok_or_else(|| LexiconError::Parse {
                line: i + 1,
                message: "expected phrase<TAB>field".into(),
            })?;
            let field = CanonicalField::from_str(field.trim()).map_err(|e| LexiconError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            self.insert(phrase, field);
        }
        Ok(())
    }

    pub fn exact(&self, words: &[String]) -> Option<CanonicalField> {
        self.entries.iter().find(|(w, _)| w == words).map(|(_, f)| *f)
    }

    /// Longest phrase that is a prefix of `words`, with its word count.
    pub fn longest_prefix(&self, words: &[String]) -> Option<(CanonicalField, usize)> {
        self.entries
            .iter()
            .filter(|(w, _)| words.starts_with(w))
            .max_by_key(|(w, _)| w.len())
            .map(|(w, f)| (*f, w.len()))
    }
}
