//! Post-extraction checks: normalization, arithmetic, fusion and confidence,
//! deduplication, anomaly flags, the audit trail and the review decision.

mod anomaly;
mod arith;
mod audit;
mod dedup;
mod fuse;
mod normalize;

use std::collections::BTreeMap;

use crate::model::{
    money_parse, AnomalyResult, CanonicalField, ConfidenceTuning, Currency, ExtractedInvoice, FieldValue, InvoiceStatus,
    LineItem, PipelineConfig, Provenance, RawLineItem, ValidationStatus,
};
use crate::ner::{correct_numeric_ocr, ConfusionMap};

pub use anomaly::{detect_anomaly, vendor_key, VendorHistory};
pub use arith::{arithmetic_status, check_arithmetic};
pub use audit::{AuditEvent, AuditLog};
pub use dedup::{logical_hash, DedupIndex, DedupOutcome};
pub use fuse::{fuse_fields, ground_value, score_confidence, FusionInputs};
pub use normalize::{
    clean_text, comparable, normalize_date, normalize_field, normalize_rate, normalize_weight, parse_decimal,
    NormalizeError,
};

/// Convert raw line items; rows missing an amount, quantity or unit price
/// (or failing to parse) are dropped.
pub fn normalize_line_items(raw: &[RawLineItem], currency: Currency, confusion: &ConfusionMap) -> Vec<LineItem> {
    raw.iter()
        .filter_map(|r| {
            let fix = |s: &Option<String>| s.as_deref().map(|s| correct_numeric_ocr(s, confusion, true));
            let quantity = parse_decimal(&fix(&r.quantity)?).ok()?;
            let unit_price = money_parse(&fix(&r.unit_price)?, currency).ok()?;
            let amount = money_parse(&fix(&r.amount)?, currency).ok()?;
            Some(LineItem {
                description: r.description.as_deref().map(clean_text).unwrap_or_default(),
                quantity,
                unit_price,
                amount,
            })
        })
        .collect()
}

/// Run the arithmetic checks and fold their verdicts into field confidence
/// and validation status.
pub fn apply_arithmetic(inv: &mut ExtractedInvoice, tol_minor: i64, tuning: &ConfidenceTuning) {
    let report = check_arithmetic(inv, tol_minor);
    for (field, fv) in inv.fields.iter_mut() {
        let status = arithmetic_status(&report, *field);
        fv.validation = match status {
            Some(true) => ValidationStatus::Passed,
            Some(false) => ValidationStatus::Failed,
            None => ValidationStatus::Unchecked,
        };
        if fv.provenance != Provenance::Human {
            fv.confidence = score_confidence(fv.confidence, false, status, tuning);
        }
    }
    inv.validation_report = report;
    inv.overall_confidence = crate::model::overall_confidence(&inv.fields);
}

/// Set the review status. Duplicates are rejected outright; otherwise the
/// minimum required-field confidence (capped just below `tau` when the
/// total looks anomalous) decides between auto-approval and review.
pub fn finalize(
    inv: &mut ExtractedInvoice,
    dedup: DedupOutcome,
    anomaly: Option<AnomalyResult>,
    tau: f64,
    subject: &str,
) -> AuditEvent {
    let mut overall = crate::model::overall_confidence(&inv.fields);
    if anomaly.as_ref().is_some_and(|a| a.flagged) {
        overall = overall.min(tau - 0.01);
    }
    inv.overall_confidence = overall;
    inv.anomaly = anomaly;
    inv.status = if dedup.is_duplicate() {
        InvoiceStatus::RejectedDuplicate
    } else if overall >= tau {
        InvoiceStatus::AutoApproved
    } else {
        InvoiceStatus::NeedsReview
    };
    let mut event = AuditEvent::system("finalize", subject);
    event.after = Some(serde_json::json!({
        "status": inv.status.as_str(),
        "overall_confidence": overall,
        "dedup": dedup,
        "anomaly": inv.anomaly,
    }));
    event
}

/// Replace fields with a reviewer's values. Either every correction
/// normalizes and the invoice is updated, or nothing changes. Corrected
/// fields become human-provided with full confidence and arithmetic is
/// re-run; the invoice is `corrected` once it clears `tau` with no failing
/// check, otherwise it stays in review. One audit event per field.
pub fn apply_corrections(
    inv: &mut ExtractedInvoice,
    corrections: &[(CanonicalField, String)],
    actor: &str,
    subject: &str,
    cfg: &PipelineConfig,
) -> Result<Vec<AuditEvent>, (CanonicalField, NormalizeError)> {
    let mut next = inv.clone();
    let currency = inv.currency().unwrap_or(cfg.default_currency);
    let mut befores = Vec::new();
    for (field, raw) in corrections {
        let normalized = normalize_field(*field, raw, cfg.date_policy, currency).map_err(|e| (*field, e))?;
        befores.push((*field, next.fields.get(field).map(|v| serde_json::to_value(v).unwrap_or_default())));
        next.fields.insert(
            *field,
            FieldValue {
                field: *field,
                raw_text: raw.clone(),
                normalized,
                confidence: 1.0,
                provenance: Provenance::Human,
                support: vec![],
                validation: ValidationStatus::Unchecked,
                corroboration: Default::default(),
                base_confidence: 1.0,
            },
        );
    }
    apply_arithmetic(&mut next, cfg.arithmetic_tolerance_minor, &cfg.confidence);
    let cleared = next.overall_confidence >= cfg.review_threshold && next.validation_report.all_passed();
    next.status = if cleared { InvoiceStatus::Corrected } else { InvoiceStatus::NeedsReview };
    let events = befores
        .into_iter()
        .map(|(field, before)| AuditEvent {
            timestamp: chrono::Utc::now(),
            actor: actor.to_string(),
            action: format!("correct:{field}"),
            subject: subject.to_string(),
            before,
            after: next.fields.get(&field).map(|v| serde_json::to_value(v).unwrap_or_default()),
        })
        .collect();
    *inv = next;
    Ok(events)
}

/// Field map helper for callers assembling invoices by hand.
pub fn field_map(values: Vec<FieldValue>) -> BTreeMap<CanonicalField, FieldValue> {
    values.into_iter().map(|v| (v.field, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Corroboration, Money, NormalizedValue};

    fn fv(field: CanonicalField, v: NormalizedValue, c: f64) -> FieldValue {
        FieldValue {
            field,
            raw_text: v.display(),
            normalized: v,
            confidence: c,
            provenance: Provenance::Llm,
            support: vec![],
            validation: ValidationStatus::Unchecked,
            corroboration: Corroboration::Uncorroborated,
            base_confidence: c,
        }
    }

    fn invoice(confs: [f64; 4]) -> ExtractedInvoice {
        let date = chrono::NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        ExtractedInvoice::new(
            field_map(vec![
                fv(CanonicalField::InvoiceNumber, NormalizedValue::Text("A1".into()), confs[0]),
                fv(CanonicalField::InvoiceDate, NormalizedValue::Date(date), confs[1]),
                fv(CanonicalField::VendorName, NormalizedValue::Text("Acme".into()), confs[2]),
                fv(
                    CanonicalField::TotalAmount,
                    NormalizedValue::Money(Money::new(100, Currency::USD)),
                    confs[3],
                ),
            ]),
            vec![],
        )
    }

    #[test]
    fn finalize_rules() {
        let mut a = invoice([0.9, 0.95, 0.9, 0.99]);
        finalize(&mut a, DedupOutcome::New, None, 0.85, "a");
        assert_eq!(a.status, InvoiceStatus::AutoApproved);
        assert_eq!(a.overall_confidence, 0.9);

        let mut b = invoice([0.9, 0.35, 0.9, 0.99]);
        finalize(&mut b, DedupOutcome::New, None, 0.85, "b");
        assert_eq!(b.status, InvoiceStatus::NeedsReview);

        let mut c = invoice([1.0; 4]);
        let e = finalize(&mut c, DedupOutcome::DuplicateLogical, None, 0.85, "c");
        assert_eq!(c.status, InvoiceStatus::RejectedDuplicate);
        assert_eq!(e.after.unwrap()["status"], "rejected_duplicate");

        let mut d = invoice([1.0; 4]);
        finalize(&mut d, DedupOutcome::New, Some(AnomalyResult { flagged: true, z: Some(9.0) }), 0.85, "d");
        assert_eq!(d.status, InvoiceStatus::NeedsReview);
        assert!((d.overall_confidence - 0.84).abs() < 1e-12);
    }

    #[test]
    fn correction_marks_human() {
        let cfg = PipelineConfig::default();
        let mut a = invoice([0.9, 0.3, 0.9, 0.99]);
        let ev = apply_corrections(
            &mut a,
            &[(CanonicalField::InvoiceDate, "05/03/2024".into())],
            "reviewer-7",
            "a",
            &cfg,
        )
        .unwrap();
        assert_eq!(a.status, InvoiceStatus::Corrected);
        let d = a.get(CanonicalField::InvoiceDate).unwrap();
        assert_eq!(d.provenance, Provenance::Human);
        assert_eq!(d.normalized.display(), "2024-03-05");
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].actor, "reviewer-7");
        assert!(ev[0].before.is_some() && ev[0].after.is_some());

        let snapshot = a.clone();
        let err = apply_corrections(
            &mut a,
            &[
                (CanonicalField::InvoiceNumber, "B2".into()),
                (CanonicalField::InvoiceDate, "31/02/2024".into()),
            ],
            "r",
            "a",
            &cfg,
        )
        .unwrap_err();
        assert_eq!(err.0, CanonicalField::InvoiceDate);
        assert_eq!(a, snapshot);
    }

    #[test]
    fn correction_fixing_total_clears_review() {
        let cfg = PipelineConfig::default();
        let mut a = invoice([0.9, 0.9, 0.9, 0.99]);
        let usd = Currency::USD;
        for (f, m) in [(CanonicalField::Subtotal, 15000), (CanonicalField::TaxAmount, 1500)] {
            a.fields.insert(f, fv(f, NormalizedValue::Money(Money::new(m, usd)), 0.9));
        }
        a.fields.insert(
            CanonicalField::TotalAmount,
            fv(CanonicalField::TotalAmount, NormalizedValue::Money(Money::new(16000, usd)), 0.9),
        );
        apply_arithmetic(&mut a, 1, &cfg.confidence);
        assert!(a.validation_report.get("TOTAL").unwrap().failed());
        apply_corrections(&mut a, &[(CanonicalField::TotalAmount, "165.00".into())], "r", "a", &cfg).unwrap();
        assert!(a.validation_report.get("TOTAL").unwrap().passed());
        assert_eq!(a.status, InvoiceStatus::Corrected);

        // a value that still fails keeps the invoice in review
        apply_corrections(&mut a, &[(CanonicalField::TotalAmount, "170.00".into())], "r", "a", &cfg).unwrap();
        assert_eq!(a.status, InvoiceStatus::NeedsReview);
        assert_eq!(a.get(CanonicalField::TotalAmount).unwrap().confidence, 1.0);
    }

    #[test]
    fn line_item_normalization() {
        let raw = vec![
            RawLineItem {
                description: Some(" Widget  blue ".into()),
                quantity: Some("2".into()),
                unit_price: Some("5O.00".into()),
                amount: Some("100.00".into()),
            },
            RawLineItem {
                description: Some("no amount".into()),
                quantity: Some("1".into()),
                unit_price: Some("1.00".into()),
                amount: None,
            },
        ];
        let items = normalize_line_items(&raw, Currency::USD, &ConfusionMap::default());
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].description, "Widget blue");
        assert_eq!(items[0].unit_price.minor_units, 5000);
    }
}
