//! Scoring: character accuracy, field and invoice accuracy against ground
//! truth, intervention rate and latency.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use invoice_core::ingest::{rasterize, tokens_to_text, RawDocument};
use invoice_core::model::{CanonicalField, InvoiceStatus, PipelineConfig, PreprocessTuning};
use invoice_core::ocr::OcrEngine;
use invoice_core::pipeline::{Pipeline, PipelineError, Registry};
use invoice_core::preprocess::{estimate_skew_hough, preprocess_adaptive, PageImage};
use invoice_core::validate::clean_text;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, GroundTruth};
use crate::render;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference text is empty")]
    EmptyReference,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(ref, hyp) / len(ref)`, floored at 0.
pub fn char_accuracy(reference: &str, hypothesis: &str) -> Result<f64, EvalError> {
    let n = reference.chars().count();
    if n == 0 {
        return Err(EvalError::EmptyReference);
    }
    Ok((1.0 - levenshtein(reference, hypothesis) as f64 / n as f64).max(0.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub correct: usize,
    pub total: usize,
    pub rate: f64,
}

impl Rate {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
        self.rate = self.correct as f64 / self.total as f64;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub count: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

/// Nearest-rank percentile of sorted values.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

impl Latency {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Latency {
            count: s.len(),
            p50_ms: nearest_rank(&s, 0.5),
            p95_ms: nearest_rank(&s, 0.95),
            mean_ms: if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 },
        }
    }
}

/// Outcome for one invoice of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvoiceOutcome {
    pub id: String,
    pub status: Option<InvoiceStatus>,
    pub error: Option<String>,
    pub overall_confidence: f64,
    pub char_accuracy: f64,
    pub wrong_fields: Vec<CanonicalField>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub note: String,
    pub invoices: usize,
    pub failed: usize,
    pub char_accuracy: f64,
    pub field_accuracy: BTreeMap<CanonicalField, Rate>,
    /// Micro average over the required fields.
    pub required_field_accuracy: Rate,
    /// Micro average over every field present in the ground truth.
    pub all_field_accuracy: Rate,
    pub invoice_accuracy: Rate,
    /// Invoices needing a person (review or failed) over all invoices.
    pub intervention_rate: Rate,
    pub latency: Latency,
    pub outcomes: Vec<InvoiceOutcome>,
}

pub const REPORT_NOTE: &str = "Seeded synthetic corpus; the figures are desk-scale analogues, not measurements on real invoices.";

fn same_value(field: CanonicalField, truth: &str, got: &str) -> bool {
    use invoice_core::model::FieldKind;
    match field.kind() {
        FieldKind::Text => clean_text(truth) == clean_text(got),
        _ => truth == got,
    }
}

/// Compare one extraction against its ground truth. Returns the wrong or
/// missing fields.
pub fn wrong_fields(truth: &GroundTruth, got: &BTreeMap<CanonicalField, String>) -> Vec<CanonicalField> {
    truth
        .fields
        .iter()
        .filter(|(f, v)| !got.get(f).is_some_and(|g| same_value(**f, v, g)))
        .map(|(f, _)| *f)
        .collect()
}

/// Run the pipeline over every invoice PDF in the corpus and score it.
/// Extraction runs in parallel; review decisions are taken in corpus order
/// so the report does not depend on scheduling, latencies aside.
pub fn score_run(corpus: &Corpus, cfg: &PipelineConfig) -> Result<MetricsReport, EvalError> {
    let pipeline = Pipeline::new(cfg.clone())?;
    score_with(corpus, &pipeline, "invoice.pdf")
}

/// As [`score_run`] with a prepared pipeline, over `<id>/<file>`.
pub fn score_with(corpus: &Corpus, pipeline: &Pipeline, file: &str) -> Result<MetricsReport, EvalError> {
    let truths: Vec<GroundTruth> = corpus.ids().iter().map(|id| corpus.truth(id)).collect::<Result<_, _>>()?;
    let results: Vec<_> = truths
        .par_iter()
        .map(|t| {
            let started = Instant::now();
            let doc = RawDocument::open(&corpus.dir(&t.id).join(file));
            let ex = doc.map_err(PipelineError::from).and_then(|d| {
                let ex = pipeline.extract(&d)?;
                Ok((d.content_hash.clone(), ex))
            });
            (ex, started.elapsed().as_secs_f64() * 1000.0)
        })
        .collect();

    let cfg = pipeline.config();
    let mut registry = Registry::default();
    let mut report = MetricsReport {
        note: REPORT_NOTE.to_string(),
        invoices: truths.len(),
        failed: 0,
        char_accuracy: 0.0,
        field_accuracy: BTreeMap::new(),
        required_field_accuracy: Rate::default(),
        all_field_accuracy: Rate::default(),
        invoice_accuracy: Rate::default(),
        intervention_rate: Rate::default(),
        latency: Latency::default(),
        outcomes: Vec::new(),
    };
    let mut latencies = Vec::new();
    let mut char_sum = 0.0;
    for (truth, (result, elapsed)) in truths.iter().zip(results) {
        let mut outcome = InvoiceOutcome {
            id: truth.id.clone(),
            status: None,
            error: None,
            overall_confidence: 0.0,
            char_accuracy: 0.0,
            wrong_fields: Vec::new(),
            latency_ms: elapsed,
        };
        let got: BTreeMap<CanonicalField, String> = match result {
            Ok((hash, mut ex)) => {
                let started = Instant::now();
                registry.decide(&hash, &mut ex.invoice, cfg, &truth.id);
                outcome.latency_ms += started.elapsed().as_secs_f64() * 1000.0;
                outcome.status = Some(ex.invoice.status);
                outcome.overall_confidence = ex.invoice.overall_confidence;
                outcome.char_accuracy = char_accuracy(&truth.text, &ex.text)?;
                ex.invoice
                    .fields
                    .iter()
                    .map(|(f, v)| (*f, v.normalized.display()))
                    .collect()
            }
            Err(e) => {
                report.failed += 1;
                outcome.error = Some(e.to_string());
                BTreeMap::new()
            }
        };
        outcome.wrong_fields = wrong_fields(truth, &got);
        for f in truth.fields.keys() {
            let ok = !outcome.wrong_fields.contains(f);
            report.field_accuracy.entry(*f).or_default().add(ok);
            report.all_field_accuracy.add(ok);
            if f.is_required() {
                report.required_field_accuracy.add(ok);
            }
        }
        report
            .invoice_accuracy
            .add(CanonicalField::REQUIRED.iter().all(|f| !outcome.wrong_fields.contains(f)));
        report
            .intervention_rate
            .add(!matches!(outcome.status, Some(InvoiceStatus::AutoApproved)));
        char_sum += outcome.char_accuracy;
        latencies.push(outcome.latency_ms);
        report.outcomes.push(outcome);
    }
    report.char_accuracy = if truths.is_empty() { 0.0 } else { char_sum / truths.len() as f64 };
    report.latency = Latency::from_samples(&latencies);
    Ok(report)
}

/// Character accuracy of the OCR path alone: each page bitmap is
/// preprocessed and read by `engine`, and the text compared to the truth.
pub fn ocr_char_accuracy(
    corpus: &Corpus,
    engine: Arc<dyn OcrEngine>,
    cfg: &PipelineConfig,
) -> Result<Vec<(String, f64)>, EvalError> {
    corpus
        .ids()
        .par_iter()
        .map(|id| {
            let truth = corpus.truth(id)?;
            let doc = RawDocument::open(&corpus.dir(id).join("page.png")).map_err(PipelineError::from)?;
            let pages = rasterize(&doc, cfg.target_dpi, None).map_err(PipelineError::from)?;
            let mut tokens = Vec::new();
            for (i, page) in pages.iter().enumerate() {
                let mut page = page.clone();
                page.page = i as u32;
                let pre = preprocess_adaptive(&page, cfg.target_dpi, &cfg.preprocess).map_err(PipelineError::from)?;
                tokens.extend(engine.recognize(&pre.image).map_err(PipelineError::from)?);
            }
            Ok((id.clone(), char_accuracy(&truth.text, &tokens_to_text(&tokens))?))
        })
        .collect()
}

/// Angles the deskew check turns pages by.
pub const DESKEW_ANGLES: [f64; 8] = [-10.0, -5.0, -2.0, -0.5, 0.5, 2.0, 5.0, 10.0];

/// Turn each page by each angle and estimate the skew back. Returns
/// (applied, estimated) pairs; pages the estimator calls blank are
/// reported as NaN.
pub fn deskew_recovery(pages: &[PageImage], angles: &[f64], tuning: &PreprocessTuning) -> Vec<(f64, f64)> {
    pages
        .iter()
        .flat_map(|p| angles.iter().map(move |a| (p, *a)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(p, a)| {
            let turned = render::skew(p, *a);
            (*a, estimate_skew_hough(&turned, tuning).unwrap_or(f64::NAN))
        })
        .collect()
}

impl MetricsReport {
    /// `metrics.json` and `metrics.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        json.push('\n');
        std::fs::write(dir.join("metrics.json"), json)?;
        std::fs::write(dir.join("metrics.csv"), self.to_csv())
    }

    /// One row per metric: `metric,field,value,correct,total`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,field,value,correct,total\n");
        let mut row = |metric: &str, field: &str, value: f64, counts: Option<Rate>| {
            let (c, t) = counts.map_or((String::new(), String::new()), |r| (r.correct.to_string(), r.total.to_string()));
            out.push_str(&format!("{metric},{field},{value:.6},{c},{t}\n"));
        };
        row("char_accuracy", "", self.char_accuracy, None);
        for (f, r) in &self.field_accuracy {
            row("field_accuracy", f.as_str(), r.rate, Some(*r));
        }
        row("field_accuracy_required_micro", "", self.required_field_accuracy.rate, Some(self.required_field_accuracy));
        row("field_accuracy_all_micro", "", self.all_field_accuracy.rate, Some(self.all_field_accuracy));
        row("invoice_accuracy", "", self.invoice_accuracy.rate, Some(self.invoice_accuracy));
        row("intervention_rate", "", self.intervention_rate.rate, Some(self.intervention_rate));
        row("latency_p50_ms", "", self.latency.p50_ms, None);
        row("latency_p95_ms", "", self.latency.p95_ms, None);
        row("latency_mean_ms", "", self.latency.mean_ms, None);
        row("failed", "", self.failed as f64, None);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_accuracy_examples() {
        assert_eq!(char_accuracy("invoice", "invoice").unwrap(), 1.0);
        assert_eq!(char_accuracy("abcd", "abed").unwrap(), 0.75);
        assert_eq!(char_accuracy("ab", "").unwrap(), 0.0);
        assert_eq!(char_accuracy("ab", "xxxxxxxx").unwrap(), 0.0);
        assert!(matches!(char_accuracy("", "x"), Err(EvalError::EmptyReference)));
    }

    #[test]
    fn levenshtein_known_values() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
        assert_eq!(levenshtein("über", "uber"), 1);
    }

    #[test]
    fn percentiles_nearest_rank() {
        let l = Latency::from_samples(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((l.p50_ms, l.p95_ms, l.mean_ms), (3.0, 5.0, 3.0));
        let l = Latency::from_samples(&(1..=100).map(f64::from).collect::<Vec<_>>());
        assert_eq!((l.p50_ms, l.p95_ms), (50.0, 95.0));
        assert_eq!(Latency::from_samples(&[]).count, 0);
    }
}
