use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AnomalyResult, AnomalyTuning, Money};

/// Past totals (minor units) of accepted invoices, per vendor.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorHistory {
    pub totals: BTreeMap<String, Vec<i64>>,
}

pub fn vendor_key(vendor: &str) -> String {
    vendor.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl VendorHistory {
    pub fn get(&self, vendor: &str) -> &[i64] {
        self.totals.get(&vendor_key(vendor)).map_or(&[], Vec::as_slice)
    }

    pub fn record(&mut self, vendor: &str, total: Money) {
        self.totals.entry(vendor_key(vendor)).or_default().push(total.minor_units);
    }
}

/// z-score of `total` against the vendor's history, using the sample
/// standard deviation. Short histories are never flagged; a constant
/// history flags any different value without a z-score.
pub fn detect_anomaly(history: &VendorHistory, vendor: &str, total: Money, tuning: &AnomalyTuning) -> AnomalyResult {
    let past = history.get(vendor);
    let n = past.len();
    if n < tuning.min_history.max(2) {
        return AnomalyResult { flagged: false, z: None };
    }
    let mean = past.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let var = past.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let x = total.minor_units as f64;
    if var == 0.0 {
        return AnomalyResult {
            flagged: x != mean,
            z: None,
        };
    }
    let z = (x - mean) / var.sqrt();
    AnomalyResult {
        flagged: z.abs() > tuning.z_threshold,
        z: Some(z),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Currency;

    fn history(values: &[i64]) -> VendorHistory {
        let mut h = VendorHistory::default();
        for &v in values {
            h.record("Acme", Money::new(v, Currency::USD));
        }
        h
    }

    #[test]
    fn z_scores() {
        let t = AnomalyTuning::default();
        let h = history(&[10000, 10200, 9800, 10100, 9900]);
        // mean 10000, s = sqrt(25000) ≈ 158.1
        let r = detect_anomaly(&h, "ACME", Money::new(10050, Currency::USD), &t);
        assert!(!r.flagged);
        assert!((r.z.unwrap() - 50.0 / 25000f64.sqrt()).abs() < 1e-9);
        let r = detect_anomaly(&h, "acme", Money::new(100000, Currency::USD), &t);
        assert!(r.flagged);
        assert!((r.z.unwrap() - 90000.0 / 25000f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn short_or_flat_history() {
        let t = AnomalyTuning::default();
        let r = detect_anomaly(&history(&[1, 2, 3]), "Acme", Money::new(1000, Currency::USD), &t);
        assert_eq!(r, AnomalyResult { flagged: false, z: None });
        let flat = history(&[500; 6]);
        assert_eq!(
            detect_anomaly(&flat, "Acme", Money::new(500, Currency::USD), &t),
            AnomalyResult { flagged: false, z: None }
        );
        assert_eq!(
            detect_anomaly(&flat, "Acme", Money::new(501, Currency::USD), &t),
            AnomalyResult { flagged: true, z: None }
        );
    }
}
