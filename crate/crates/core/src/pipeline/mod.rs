//! The document pipeline: ingestion through validation for one file, plus
//! the stateful review decision shared by the CLI and the service.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ingest::{
    rasterize, tokens_to_text, DocumentFormat, IngestError, PdfDocument, RawDocument, Token, TokenSource,
};
use crate::layout::{analyze_page, table_line_items, LabelLink, Lexicon, PageLayout, Region, TokenIndex};
use crate::llm::{build_prompt, parse_extraction, repair_json, LlmClient, LlmError, PartialInvoice};
use crate::model::{
    detect_currency, AnomalyResult, CanonicalField, ConfigError, Corroboration, Currency, ExtractedInvoice, FieldValue,
    NormalizedValue, PipelineConfig, Provenance, RawLineItem, ValidationStatus,
};
use crate::ner::{extract_amounts, extract_dates, extract_invoice_number, ConfusionMap};
use crate::ocr::{run_cascade, select_plan, EngineSet, OcrError, OcrTrace};
use crate::preprocess::{preprocess_adaptive, PageImage, PreprocessError};
use crate::validate::{
    apply_arithmetic, clean_text, detect_anomaly, finalize, fuse_fields, logical_hash, normalize_line_items, AuditEvent,
    DedupIndex, DedupOutcome, FusionInputs, VendorHistory,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Ocr(#[from] OcrError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Llm(LlmError),
    #[error("no text could be read from the document")]
    NoText,
    #[error("no invoice fields could be extracted")]
    NoFields,
}

impl PipelineError {
    /// Errors that concern the setup rather than one document.
    pub fn is_fatal(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Llm(LlmError::MissingAuthKey))
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub ingest_ms: f64,
    pub preprocess_ms: f64,
    pub ocr_ms: f64,
    pub layout_ms: f64,
    pub llm_ms: f64,
    pub validate_ms: f64,
    pub total_ms: f64,
}

/// What happened to a document on the way to its invoice.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProcessingTrace {
    pub format: String,
    pub pages: usize,
    pub ocr: OcrTrace,
    /// Enhancement steps applied per page, when pages were rasterized.
    pub preprocess: Vec<Vec<String>>,
    pub llm_mode: String,
    pub llm_attempts: usize,
    pub llm_error: Option<String>,
    pub unparsed_keys: Vec<String>,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

/// Result of [`Pipeline::extract`]: the validated but not yet finalized
/// invoice, with everything needed for review.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub invoice: ExtractedInvoice,
    pub tokens: Vec<Token>,
    pub text: String,
    pub layouts: Vec<PageLayout>,
    pub trace: ProcessingTrace,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Stateless per-document processing. Shareable across threads.
pub struct Pipeline {
    cfg: PipelineConfig,
    engines: EngineSet,
    llm: LlmClient,
    lexicon: Lexicon,
    confusion: ConfusionMap,
}

impl Pipeline {
    /// Build from config, loading the lexicon and confusion tables. Live LLM
    /// mode without a key is refused here rather than per document.
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let llm = LlmClient::from_settings(&cfg.llm, cfg.llm_auth_key.clone());
        Self::with_llm(cfg, llm)
    }

    pub fn with_llm(cfg: PipelineConfig, llm: LlmClient) -> Result<Self, PipelineError> {
        if llm.mode_name() == "live" && cfg.llm_auth_key.is_none() {
            return Err(PipelineError::Llm(LlmError::MissingAuthKey));
        }
        let read = |p: &std::path::Path| {
            std::fs::read_to_string(p).map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())))
        };
        let mut lexicon = Lexicon::default();
        if let Some(p) = &cfg.lexicon_path {
            lexicon
                .extend_from_tsv(&read(p)?)
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())))?;
        }
        let mut confusion = ConfusionMap::default();
        if let Some(p) = &cfg.confusion_map_path {
            confusion
                .extend_from_tsv(&read(p)?)
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())))?;
        }
        Ok(Pipeline {
            engines: EngineSet::from_settings(&cfg.ocr),
            cfg,
            llm,
            lexicon,
            confusion,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Tokens for the document: the embedded text layer when it is rich
    /// enough, else OCR over preprocessed page images. Returns the tokens
    /// with each page's height in token coordinates.
    fn read_tokens(&self, doc: &RawDocument, trace: &mut ProcessingTrace) -> Result<(Vec<Token>, Vec<f64>), PipelineError> {
        let cfg = &self.cfg;
        let started = Instant::now();
        let (embedded, mut heights, pages) = match doc.format {
            DocumentFormat::Unknown => return Err(IngestError::UnknownFormat.into()),
            DocumentFormat::Pdf => {
                let pdf = PdfDocument::parse(&doc.bytes)?;
                if pdf.is_encrypted() {
                    return Err(IngestError::EncryptedPdf.into());
                }
                let sizes = pdf.page_sizes(cfg.target_dpi)?;
                let tokens = pdf.text_tokens(cfg.target_dpi)?;
                let n = sizes.len();
                (tokens, sizes.into_iter().map(|(_, h)| h).collect::<Vec<_>>(), n)
            }
            _ => (Vec::new(), Vec::new(), 1),
        };
        trace.pages = pages;
        trace.timings.ingest_ms = ms(started);

        let plan = select_plan(&embedded, pages, None, &self.engines, &cfg.ocr, cfg.ocr_escalation_threshold);
        if let Ok(plan) = &plan {
            if plan.steps.len() == 1 && plan.steps[0].source == crate::ocr::Source::Embedded {
                let started = Instant::now();
                let (tokens, ocr) = run_cascade(plan, &embedded, &[], &self.engines, cfg.ocr.metric)?;
                trace.ocr = ocr;
                trace.timings.ocr_ms = ms(started);
                return Ok((tokens, heights));
            }
        }

        let started = Instant::now();
        let raw_pages = rasterize(doc, cfg.target_dpi, cfg.rasterizer_cmd.as_deref())?;
        let mut pages: Vec<PageImage> = Vec::with_capacity(raw_pages.len());
        let mut worst = None;
        for (i, page) in raw_pages.iter().enumerate() {
            let mut page = page.clone();
            page.page = i as u32;
            let pre = preprocess_adaptive(&page, cfg.target_dpi, &cfg.preprocess)?;
            trace
                .preprocess
                .push(pre.applied.iter().map(|s| s.as_str().to_string()).collect());
            trace.warnings.extend(pre.notes.iter().map(|n| format!("page {}: {n}", i + 1)));
            if worst.as_ref().is_none_or(|w: &crate::preprocess::QualityReport| pre.quality.score < w.score) {
                worst = Some(pre.quality.clone());
            }
            pages.push(pre.image);
        }
        trace.timings.preprocess_ms = ms(started);
        heights = pages.iter().map(|p| f64::from(p.height)).collect();
        trace.pages = pages.len();

        let started = Instant::now();
        let plan = select_plan(
            &embedded,
            pages.len(),
            worst.as_ref(),
            &self.engines,
            &cfg.ocr,
            cfg.ocr_escalation_threshold,
        )?;
        let (tokens, ocr) = run_cascade(&plan, &embedded, &pages, &self.engines, cfg.ocr.metric)?;
        trace.ocr = ocr;
        trace.timings.ocr_ms = ms(started);
        Ok((tokens, heights))
    }

    fn call_llm(&self, text: &str, trace: &mut ProcessingTrace) -> Result<Option<PartialInvoice>, PipelineError> {
        trace.llm_mode = self.llm.mode_name().to_string();
        let prompt = build_prompt(text, &CanonicalField::ALL, self.cfg.llm.max_prompt_chars);
        let response = match self.llm.complete(&prompt) {
            Ok(r) => r,
            Err(LlmError::MissingAuthKey) => return Err(PipelineError::Llm(LlmError::MissingAuthKey)),
            Err(e) => {
                if let LlmError::LlmUnavailable { attempts } = &e {
                    trace.llm_attempts = attempts.len();
                }
                trace.llm_error = Some(e.to_string());
                return Ok(None);
            }
        };
        trace.llm_attempts = response.attempts.len();
        let parsed = repair_json(&response.text)
            .map_err(|e| e.to_string())
            .and_then(|json| parse_extraction(&json).map_err(|e| e.to_string()));
        match parsed {
            Ok(p) => {
                trace.unparsed_keys = p.unparsed_keys.clone();
                Ok(Some(p))
            }
            Err(e) => {
                trace.llm_error = Some(format!("extraction error: {e}"));
                Ok(None)
            }
        }
    }

    /// Run one document through reading, layout, extraction, fusion and the
    /// arithmetic checks. The result still needs [`Registry::decide`].
    pub fn extract(&self, doc: &RawDocument) -> Result<Extraction, PipelineError> {
        let cfg = &self.cfg;
        let total = Instant::now();
        let mut trace = ProcessingTrace {
            format: format!("{:?}", doc.format).to_lowercase(),
            ..Default::default()
        };
        let (tokens, heights) = self.read_tokens(doc, &mut trace)?;
        let text = tokens_to_text(&tokens);
        if text.trim().is_empty() {
            return Err(PipelineError::NoText);
        }

        let started = Instant::now();
        let mut by_page: BTreeMap<u32, Vec<Token>> = BTreeMap::new();
        for t in &tokens {
            by_page.entry(t.page).or_default().push(t.clone());
        }
        let layouts: Vec<PageLayout> = by_page
            .iter()
            .map(|(page, toks)| {
                let h = heights.get(*page as usize).copied().unwrap_or_else(|| {
                    toks.iter().map(|t| t.bbox.y1).fold(0.0, f64::max)
                });
                analyze_page(toks, *page, h, &self.lexicon, &cfg.layout)
            })
            .collect();
        trace.timings.layout_ms = ms(started);

        let started = Instant::now();
        let llm = self.call_llm(&text, &mut trace)?;
        trace.timings.llm_ms = ms(started);

        let started = Instant::now();
        let mut regex = extract_invoice_number(&text);
        regex.extend(extract_amounts(&text));
        let dates = extract_dates(&text);
        let links: Vec<LabelLink> = layouts.iter().flat_map(|l| l.links.iter().cloned()).collect();
        let currency = llm
            .as_ref()
            .and_then(|p| p.fields.get(&CanonicalField::Currency))
            .and_then(|c| Currency::new(c.trim()).ok())
            .or_else(|| detect_currency(&text))
            .unwrap_or(cfg.default_currency);
        let inputs = FusionInputs {
            tokens: &tokens,
            regex: &regex,
            dates: &dates,
            layout: &links,
            confusion: &self.confusion,
            policy: cfg.date_policy,
            currency,
            tuning: &cfg.confidence,
        };
        let mut fields = fuse_fields(llm.as_ref(), &inputs);
        if !fields.contains_key(&CanonicalField::VendorName) {
            if let Some(v) = vendor_from_header(&layouts, &tokens, cfg.confidence.layout_base) {
                fields.insert(CanonicalField::VendorName, v);
            }
        }
        if fields.is_empty() {
            return Err(PipelineError::NoFields);
        }

        let raw_items: Vec<RawLineItem> = match llm.as_ref().map(|p| &p.line_items) {
            Some(items) if !items.is_empty() => items.clone(),
            _ => {
                let mut items = Vec::new();
                for (layout, toks) in layouts.iter().zip(by_page.values()) {
                    let index = TokenIndex::new(toks);
                    for t in &layout.tables {
                        items.extend(table_line_items(t, &index));
                    }
                }
                items
            }
        };
        let line_items = normalize_line_items(&raw_items, currency, &self.confusion);
        if line_items.len() < raw_items.len() {
            trace
                .warnings
                .push(format!("{} line item(s) dropped as unparseable", raw_items.len() - line_items.len()));
        }
        let mut invoice = ExtractedInvoice::new(fields, line_items);
        apply_arithmetic(&mut invoice, cfg.arithmetic_tolerance_minor, &cfg.confidence);
        trace.timings.validate_ms = ms(started);
        trace.timings.total_ms = ms(total);
        Ok(Extraction {
            invoice,
            tokens,
            text,
            layouts,
            trace,
        })
    }
}

/// First line of the topmost header block that is not a label, as a
/// last-resort vendor name.
fn vendor_from_header(layouts: &[PageLayout], tokens: &[Token], base: f64) -> Option<FieldValue> {
    let layout = layouts.first()?;
    let index = TokenIndex::new(tokens);
    let labelled: std::collections::HashSet<usize> = layout.links.iter().map(|l| l.label_block).collect();
    let block = layout
        .blocks
        .iter()
        .filter(|b| b.region == Region::Header && !labelled.contains(&b.id))
        .min_by(|a, b| a.bbox.y0.total_cmp(&b.bbox.y0))?;
    let line = block.lines.first()?;
    let raw = clean_text(&index.text(&line.token_ids));
    if !raw.chars().any(char::is_alphabetic) {
        return None;
    }
    let source_conf = line
        .token_ids
        .iter()
        .map(|id| {
            let t = index.get(*id);
            if t.source == TokenSource::Embedded {
                1.0
            } else {
                t.confidence
            }
        })
        .fold(1.0, f64::min);
    let confidence = base * source_conf;
    Some(FieldValue {
        field: CanonicalField::VendorName,
        raw_text: raw.clone(),
        normalized: NormalizedValue::Text(raw),
        confidence,
        provenance: Provenance::Layout,
        support: line.token_ids.clone(),
        validation: ValidationStatus::Unchecked,
        corroboration: Corroboration::Uncorroborated,
        base_confidence: confidence,
    })
}

/// Cross-document state behind the review decision: the dedup index and
/// per-vendor totals for anomaly checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub dedup: DedupIndex,
    pub history: VendorHistory,
}

/// The decision for one invoice.
#[derive(Debug, Clone)]
pub struct Decision {
    pub dedup: DedupOutcome,
    pub anomaly: Option<AnomalyResult>,
    pub event: AuditEvent,
}

impl Registry {
    /// Dedup, anomaly check and status assignment. New invoices are added
    /// to the index and their total to the vendor history.
    pub fn decide(
        &mut self,
        raw_hash: &str,
        inv: &mut ExtractedInvoice,
        cfg: &PipelineConfig,
        subject: &str,
    ) -> Decision {
        let logical = logical_hash(inv);
        let dedup = self.dedup.check(raw_hash, logical.as_deref());
        let vendor = inv.text(CanonicalField::VendorName);
        let total = inv.money(CanonicalField::TotalAmount);
        let anomaly = match (&vendor, total) {
            (Some(v), Some(t)) => Some(detect_anomaly(&self.history, v, t, &cfg.anomaly)),
            _ => None,
        };
        let event = finalize(inv, dedup, anomaly.clone(), cfg.review_threshold, subject);
        if !dedup.is_duplicate() {
            self.dedup.insert(raw_hash, logical.as_deref());
            if let (Some(v), Some(t)) = (vendor, total) {
                self.history.record(&v, t);
            }
        }
        Decision { dedup, anomaly, event }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InvoiceStatus, LlmMode};

    fn text_pdf(lines: &[&str]) -> Vec<u8> {
        let mut content = String::from("BT /F1 10 Tf 14 TL 72 740 Td");
        for l in lines {
            let esc = l.replace('\\', "\\\\").replace('(', "\\(").replace(')', "\\)");
            content.push_str(&format!(" ({esc}) Tj T*"));
        }
        content.push_str(" ET");
        let objs = [
            "<< /Type /Catalog /Pages 2 0 R >>".to_string(),
            "<< /Type /Pages /Kids [3 0 R] /Count 1 /MediaBox [0 0 612 792] >>".to_string(),
            "<< /Type /Page /Parent 2 0 R /Contents 4 0 R /Resources << /Font << /F1 5 0 R >> >> >>".to_string(),
            format!("<< /Length {} >>\nstream\n{}\nendstream", content.len(), content),
            "<< /Type /Font /Subtype /Type1 /BaseFont /Courier >>".to_string(),
        ];
        let mut out = b"%PDF-1.4\n".to_vec();
        for (i, o) in objs.iter().enumerate() {
            out.extend_from_slice(format!("{} 0 obj\n{}\nendobj\n", i + 1, o).as_bytes());
        }
        out.extend_from_slice(b"trailer\n<< /Size 6 /Root 1 0 R >>\nstartxref\n0\n%%EOF\n");
        out
    }

    const LINES: [&str; 9] = [
        "Northwind Traders Ltd",
        "12 Harbour Road, Leeds",
        "",
        "Invoice No: NW-2024-118",
        "Invoice Date: 04/03/2024",
        "Due Date: 03/04/2024",
        "Subtotal: $150.00",
        "Tax: $15.00",
        "TOTAL: $165.00",
    ];

    fn refusal_cfg() -> PipelineConfig {
        PipelineConfig {
            llm: crate::model::LlmSettings {
                mode: LlmMode::Refusal,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn fallback_extraction_without_llm() {
        let pipeline = Pipeline::new(refusal_cfg()).unwrap();
        let doc = RawDocument::from_bytes(text_pdf(&LINES), "a.pdf");
        let ex = pipeline.extract(&doc).unwrap();
        let inv = &ex.invoice;
        assert_eq!(inv.text(CanonicalField::InvoiceNumber).as_deref(), Some("NW-2024-118"));
        assert_eq!(inv.get(CanonicalField::InvoiceDate).unwrap().normalized.display(), "2024-03-04");
        assert_eq!(inv.get(CanonicalField::DueDate).unwrap().normalized.display(), "2024-04-03");
        assert_eq!(inv.money(CanonicalField::TotalAmount).unwrap().minor_units, 16500);
        assert_eq!(inv.text(CanonicalField::VendorName).as_deref(), Some("Northwind Traders Ltd"));
        assert!(inv.validation_report.get("TOTAL").unwrap().passed());
        assert_eq!(ex.trace.ocr.accepted().unwrap().source, "embedded");
        assert!(ex.trace.llm_error.as_deref().unwrap().starts_with("extraction error"));
    }

    #[test]
    fn registry_rejects_duplicates() {
        let cfg = refusal_cfg();
        let pipeline = Pipeline::new(cfg.clone()).unwrap();
        let bytes = text_pdf(&LINES);
        let doc = RawDocument::from_bytes(bytes.clone(), "a.pdf");
        let mut reg = Registry::default();
        let mut a = pipeline.extract(&doc).unwrap().invoice;
        let d = reg.decide(&doc.content_hash, &mut a, &cfg, "a");
        assert_eq!(d.dedup, DedupOutcome::New);
        assert_ne!(a.status, InvoiceStatus::RejectedDuplicate);
        let mut b = pipeline.extract(&doc).unwrap().invoice;
        reg.decide(&doc.content_hash, &mut b, &cfg, "b");
        assert_eq!(b.status, InvoiceStatus::RejectedDuplicate);
    }

    #[test]
    fn unreadable_inputs() {
        let pipeline = Pipeline::new(refusal_cfg()).unwrap();
        let junk = RawDocument::from_bytes(b"not a document".to_vec(), "x.bin");
        assert!(matches!(pipeline.extract(&junk), Err(PipelineError::Ingest(_))));
        let mut truncated = text_pdf(&LINES);
        truncated.truncate(60);
        let doc = RawDocument::from_bytes(truncated, "t.pdf");
        assert!(pipeline.extract(&doc).is_err());
    }

    #[test]
    fn live_mode_needs_key() {
        let mut cfg = refusal_cfg();
        cfg.llm.mode = LlmMode::Live;
        let err = Pipeline::new(cfg).err().unwrap();
        assert!(err.is_fatal());
    }
}
