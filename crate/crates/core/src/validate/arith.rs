use rust_decimal::Decimal;

use crate::model::{CanonicalField as F, Check, CheckOutcome, ExtractedInvoice, Money, ValidationReport};

fn check(id: impl Into<String>, outcome: CheckOutcome, detail: String, fields: &[F]) -> Check {
    Check {
        id: id.into(),
        outcome,
        detail,
        fields_involved: fields.to_vec(),
    }
}

fn skipped(id: &str, missing: &str, fields: &[F]) -> Check {
    check(id, CheckOutcome::Skipped, format!("skipped: {missing} absent"), fields)
}

/// Compare `expected` with `got` within `tol` minor units.
fn compare(id: String, expected: Option<Money>, got: Money, tol: i64, fields: &[F]) -> Check {
    let Some(expected) = expected else {
        return check(id, CheckOutcome::Failed, "overflow while recomputing".into(), fields);
    };
    if expected.currency != got.currency {
        return check(
            id,
            CheckOutcome::Failed,
            format!("currency mismatch: expected {} got {}", expected.currency, got.currency),
            fields,
        );
    }
    let diff = (i128::from(expected.minor_units) - i128::from(got.minor_units)).abs();
    let outcome = if diff <= i128::from(tol) { CheckOutcome::Passed } else { CheckOutcome::Failed };
    check(
        id,
        outcome,
        format!("expected {} got {}", expected.minor_units, got.minor_units),
        fields,
    )
}

fn add(a: Money, b: Money) -> Option<Money> {
    a.checked_add(b).ok()
}

/// Arithmetic consistency of line items, subtotal, tax and total. Each
/// check is skipped when its inputs are missing. Products are rounded half
/// away from zero to whole minor units; tolerance is `tol` minor units per
/// rounding site.
pub fn check_arithmetic(inv: &ExtractedInvoice, tol: i64) -> ValidationReport {
    let mut checks = Vec::new();
    for (i, line) in inv.line_items.iter().enumerate() {
        let expected = line.unit_price.mul_decimal_half_up(line.quantity).ok();
        checks.push(compare(format!("LINE_MATH#{}", i + 1), expected, line.amount, tol, &[]));
    }

    let subtotal = inv.money(F::Subtotal);
    let tax = inv.money(F::TaxAmount);
    let total = inv.money(F::TotalAmount);
    let discount = inv.money(F::DiscountAmount);
    let rate: Option<Decimal> = inv.get(F::TaxRate).and_then(|v| v.normalized.as_decimal());

    checks.push(match (subtotal, inv.line_items.is_empty()) {
        (_, true) => skipped("SUBTOTAL", "line items", &[F::Subtotal]),
        (None, _) => skipped("SUBTOTAL", "subtotal", &[F::Subtotal]),
        (Some(sub), false) => {
            let sum = inv
                .line_items
                .iter()
                .try_fold(Money::zero(sub.currency), |acc, l| add(acc, l.amount));
            let n = inv.line_items.len() as i64;
            compare("SUBTOTAL".into(), sum, sub, tol.saturating_mul(n), &[F::Subtotal])
        }
    });

    let tax_fields = [F::Subtotal, F::TaxRate, F::TaxAmount];
    checks.push(match (subtotal, rate, tax) {
        (Some(sub), Some(rate), Some(tax)) => {
            compare("TAX".into(), sub.mul_decimal_half_up(rate).ok(), tax, tol, &tax_fields)
        }
        (None, _, _) => skipped("TAX", "subtotal", &tax_fields),
        (_, None, _) => skipped("TAX", "tax rate", &tax_fields),
        (_, _, None) => skipped("TAX", "tax amount", &tax_fields),
    });

    let mut total_fields = vec![F::Subtotal];
    if tax.is_some() {
        total_fields.push(F::TaxAmount);
    }
    if discount.is_some() {
        total_fields.push(F::DiscountAmount);
    }
    total_fields.push(F::TotalAmount);
    checks.push(match (subtotal, total) {
        (Some(sub), Some(total)) => {
            let expected = tax
                .map_or(Some(sub), |t| add(sub, t))
                .and_then(|s| match discount {
                    Some(d) => s.checked_sub(d).ok(),
                    None => Some(s),
                });
            compare("TOTAL".into(), expected, total, tol, &total_fields)
        }
        (None, _) => skipped("TOTAL", "subtotal", &total_fields),
        (_, None) => skipped("TOTAL", "total amount", &total_fields),
    });
    ValidationReport { checks }
}

/// Arithmetic verdict for one field: failed if any check touching it
/// failed, passed if any passed, otherwise not applicable.
pub fn arithmetic_status(report: &ValidationReport, field: F) -> Option<bool> {
    let touching = report
        .checks
        .iter()
        .filter(|c| c.fields_involved.contains(&field) && c.outcome != CheckOutcome::Skipped);
    let mut any = false;
    for c in touching {
        if c.failed() {
            return Some(false);
        }
        any = true;
    }
    any.then_some(true)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{Corroboration, Currency, FieldValue, LineItem, NormalizedValue, Provenance, ValidationStatus};

    fn money_field(f: F, minor: i64) -> (F, FieldValue) {
        value(f, NormalizedValue::Money(Money::new(minor, Currency::USD)))
    }

    fn value(f: F, v: NormalizedValue) -> (F, FieldValue) {
        (
            f,
            FieldValue {
                field: f,
                raw_text: v.display(),
                normalized: v,
                confidence: 0.9,
                provenance: Provenance::Llm,
                support: vec![],
                validation: ValidationStatus::Unchecked,
                corroboration: Corroboration::Uncorroborated,
                base_confidence: 0.9,
            },
        )
    }

    fn line(qty: i64, price: i64, amount: i64) -> LineItem {
        LineItem {
            description: "x".into(),
            quantity: Decimal::from(qty),
            unit_price: Money::new(price, Currency::USD),
            amount: Money::new(amount, Currency::USD),
        }
    }

    fn sample(total: i64) -> ExtractedInvoice {
        let fields: BTreeMap<F, FieldValue> = [
            money_field(F::Subtotal, 15000),
            money_field(F::TaxAmount, 1500),
            money_field(F::TotalAmount, total),
            value(F::TaxRate, NormalizedValue::Decimal(Decimal::new(10, 2))),
        ]
        .into_iter()
        .collect();
        ExtractedInvoice::new(fields, vec![line(2, 5000, 10000), line(1, 5000, 5000)])
    }

    #[test]
    fn consistent_invoice_passes() {
        let r = check_arithmetic(&sample(16500), 1);
        let ids: Vec<&str> = r.checks.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["LINE_MATH#1", "LINE_MATH#2", "SUBTOTAL", "TAX", "TOTAL"]);
        assert!(r.checks.iter().all(Check::passed), "{r:?}");
    }

    #[test]
    fn wrong_total_fails_with_detail() {
        let r = check_arithmetic(&sample(16000), 1);
        let t = r.get("TOTAL").unwrap();
        assert!(t.failed());
        assert_eq!(t.detail, "expected 16500 got 16000");
        assert_eq!(arithmetic_status(&r, F::TotalAmount), Some(false));
        assert_eq!(arithmetic_status(&r, F::TaxRate), Some(true));
        assert_eq!(arithmetic_status(&r, F::InvoiceNumber), None);
    }

    #[test]
    fn skips_without_inputs() {
        let fields = [money_field(F::Subtotal, 9900), money_field(F::TotalAmount, 9900)].into_iter().collect();
        let r = check_arithmetic(&ExtractedInvoice::new(fields, vec![]), 1);
        assert_eq!(r.get("SUBTOTAL").unwrap().outcome, CheckOutcome::Skipped);
        assert_eq!(r.get("TAX").unwrap().outcome, CheckOutcome::Skipped);
        assert!(r.get("TOTAL").unwrap().passed());
    }

    #[test]
    fn discount_subtracts() {
        let fields = [
            money_field(F::Subtotal, 10000),
            money_field(F::DiscountAmount, 500),
            money_field(F::TotalAmount, 9500),
        ]
        .into_iter()
        .collect();
        assert!(check_arithmetic(&ExtractedInvoice::new(fields, vec![]), 0).get("TOTAL").unwrap().passed());
    }

    #[test]
    fn line_rounding_half_up() {
        // 1.5 × 0.67 = 1.005 → 1.01
        let l = LineItem {
            description: "x".into(),
            quantity: Decimal::new(15, 1),
            unit_price: Money::new(67, Currency::USD),
            amount: Money::new(101, Currency::USD),
        };
        let r = check_arithmetic(&ExtractedInvoice::new(BTreeMap::new(), vec![l]), 0);
        assert!(r.get("LINE_MATH#1").unwrap().passed());
    }
}
