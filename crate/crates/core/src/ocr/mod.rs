//! Confidence-gated OCR cascade over pluggable engines.

mod engines;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{reading_order, Token};
use crate::model::{CascadeMetric, EngineSpec, OcrSettings};
use crate::preprocess::{PageImage, QualityReport};

pub use engines::{parse_tsv, ExternalProcessEngine, MockNoisyEngine, MockPerfectEngine, SidecarToken};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcrError {
    #[error("no OCR engine configured")]
    NoEngineConfigured,
    #[error("engine {0:?} is not registered")]
    UnknownEngine(String),
    #[error("{engine}: {message}")]
    EngineFailed { engine: String, message: String },
    #[error("all OCR sources failed: {0:?}")]
    AllEnginesFailed(Vec<String>),
}

pub trait OcrEngine: Send + Sync {
    fn id(&self) -> &str;

    fn recognize(&self, img: &PageImage) -> Result<Vec<Token>, OcrError>;

    /// Serial engines get their pages one at a time.
    fn is_serial(&self) -> bool {
        false
    }
}

/// The configured primary and secondary engines.
#[derive(Clone, Default)]
pub struct EngineSet {
    pub primary: Option<Arc<dyn OcrEngine>>,
    pub secondary: Option<Arc<dyn OcrEngine>>,
}

impl EngineSet {
    pub fn from_settings(settings: &OcrSettings) -> Self {
        EngineSet {
            primary: settings.primary.as_ref().map(build_engine),
            secondary: settings.secondary.as_ref().map(build_engine),
        }
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn OcrEngine>> {
        [&self.primary, &self.secondary]
            .into_iter()
            .flatten()
            .find(|e| e.id() == id)
    }

    pub fn is_empty(&self) -> bool {
        self.primary.is_none() && self.secondary.is_none()
    }
}

pub fn build_engine(spec: &EngineSpec) -> Arc<dyn OcrEngine> {
    match spec {
        EngineSpec::MockPerfect { sidecar_root } => Arc::new(MockPerfectEngine::new(sidecar_root.clone())),
        EngineSpec::MockNoisy {
            sidecar_root,
            rate,
            seed,
        } => Arc::new(MockNoisyEngine::new(sidecar_root.clone(), *rate, *seed)),
        EngineSpec::External { id, command } => Arc::new(ExternalProcessEngine::new(
            id.clone().unwrap_or_else(|| "external".to_string()),
            command.clone(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum Source {
    Embedded,
    Engine(String),
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::Embedded => "embedded".to_string(),
            Source::Engine(id) => id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub source: Source,
    /// Minimum confidence metric for this step to be accepted.
    pub gate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePlan {
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub source: String,
    pub token_count: usize,
    pub mean_confidence: f64,
    pub accepted: bool,
    pub elapsed_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OcrTrace {
    pub attempts: Vec<Attempt>,
}

impl OcrTrace {
    pub fn accepted(&self) -> Option<&Attempt> {
        self.attempts.iter().find(|a| a.accepted)
    }
}

pub fn mean_confidence(tokens: &[Token]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    tokens.iter().map(|t| t.confidence).sum::<f64>() / tokens.len() as f64
}

pub fn median_confidence(tokens: &[Token]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let mut c: Vec<f64> = tokens.iter().map(|t| t.confidence).collect();
    c.sort_by(f64::total_cmp);
    let n = c.len();
    if n % 2 == 1 {
        c[n / 2]
    } else {
        (c[n / 2 - 1] + c[n / 2]) / 2.0
    }
}

fn metric_value(metric: CascadeMetric, tokens: &[Token]) -> f64 {
    match metric {
        CascadeMetric::Mean => mean_confidence(tokens),
        CascadeMetric::Median => median_confidence(tokens),
    }
}

/// Characters of embedded text per page, the signal for skipping OCR.
pub fn embedded_chars_per_page(tokens: &[Token], pages: usize) -> f64 {
    let chars: usize = tokens.iter().map(|t| t.text.chars().count()).sum();
    chars as f64 / pages.max(1) as f64
}

/// Choose the cascade: a real text layer skips OCR entirely; otherwise the
/// primary engine runs gated at `escalation_threshold` with the secondary as
/// the unconditional fallback, swapped when the page quality is poor.
pub fn select_plan(
    embedded: &[Token],
    pages: usize,
    quality: Option<&QualityReport>,
    engines: &EngineSet,
    settings: &OcrSettings,
    escalation_threshold: f64,
) -> Result<CascadePlan, OcrError> {
    if embedded_chars_per_page(embedded, pages) >= settings.embedded_min_chars_per_page as f64 {
        return Ok(CascadePlan {
            steps: vec![PlanStep {
                source: Source::Embedded,
                gate: 0.0,
            }],
        });
    }
    let mut order: Vec<&Arc<dyn OcrEngine>> =
        [&engines.primary, &engines.secondary].into_iter().flatten().collect();
    if order.is_empty() {
        return Err(OcrError::NoEngineConfigured);
    }
    if order.len() == 2 && quality.is_some_and(|q| q.score < settings.low_quality_score) {
        order.reverse();
    }
    let last = order.len() - 1;
    let steps = order
        .iter()
        .enumerate()
        .map(|(i, e)| PlanStep {
            source: Source::Engine(e.id().to_string()),
            gate: if i == last { 0.0 } else { escalation_threshold },
        })
        .collect();
    Ok(CascadePlan { steps })
}

fn recognize_pages(engine: &dyn OcrEngine, pages: &[PageImage]) -> Result<Vec<Token>, OcrError> {
    let per_page: Vec<Result<Vec<Token>, OcrError>> = if engine.is_serial() {
        pages.iter().map(|p| engine.recognize(p)).collect()
    } else {
        pages.par_iter().map(|p| engine.recognize(p)).collect()
    };
    let mut all = Vec::new();
    for (page, tokens) in pages.iter().zip(per_page) {
        for mut t in tokens? {
            t.page = page.page;
            all.push(t);
        }
    }
    Ok(reading_order(all))
}

/// Run the plan in order and accept the first step whose confidence metric
/// meets its gate. Failed steps are recorded and skipped. If no successful
/// step meets its gate the best-scoring successful one is taken.
pub fn run_cascade(
    plan: &CascadePlan,
    embedded: &[Token],
    pages: &[PageImage],
    engines: &EngineSet,
    metric: CascadeMetric,
) -> Result<(Vec<Token>, OcrTrace), OcrError> {
    let mut trace = OcrTrace::default();
    let mut results: Vec<Option<(Vec<Token>, f64)>> = Vec::new();
    let mut errors = Vec::new();
    let mut accepted = None;

    for step in &plan.steps {
        let start = Instant::now();
        let outcome = match &step.source {
            Source::Embedded => Ok(embedded.to_vec()),
            Source::Engine(id) => match engines.get(id) {
                Some(engine) => recognize_pages(engine.as_ref(), pages),
                None => Err(OcrError::UnknownEngine(id.clone())),
            },
        };
        let elapsed_ms = start.elapsed().as_millis() as u64;
        match outcome {
            Ok(tokens) => {
                let score = metric_value(metric, &tokens);
                trace.attempts.push(Attempt {
                    source: step.source.label(),
                    token_count: tokens.len(),
                    mean_confidence: mean_confidence(&tokens),
                    accepted: false,
                    elapsed_ms,
                    error: None,
                });
                let pass = score >= step.gate;
                results.push(Some((tokens, score)));
                if pass {
                    accepted = Some(results.len() - 1);
                    break;
                }
            }
            Err(e) => {
                errors.push(e.to_string());
                trace.attempts.push(Attempt {
                    source: step.source.label(),
                    token_count: 0,
                    mean_confidence: 0.0,
                    accepted: false,
                    elapsed_ms,
                    error: Some(e.to_string()),
                });
                results.push(None);
            }
        }
    }

    let chosen = accepted.or_else(|| {
        results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|(_, s)| (i, *s)))
            .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((i, s)),
            })
            .map(|(i, _)| i)
    });
    match chosen {
        Some(i) => {
            trace.attempts[i].accepted = true;
            let tokens = results[i].take().map(|(t, _)| t).unwrap_or_default();
            Ok((tokens, trace))
        }
        None => Err(OcrError::AllEnginesFailed(errors)),
    }
}
