//! Synthetic corpus and metrics.
//!
//! [`gen_corpus`] writes seeded invoices as text PDFs, page bitmaps and
//! ground truth, with replay fixtures for the LLM client. [`score_run`]
//! runs the pipeline over a corpus and reports accuracy, intervention
//! rate and latency.

pub mod corpus;
pub mod metrics;
pub mod render;
pub mod replay;

pub use corpus::{
    gen_corpus, gen_corpus_with, generate, generate_with, Corpus, CorpusManifest, Degradation, GroundTruth, ReplayMix,
    Template,
};
pub use metrics::{
    char_accuracy, deskew_recovery, levenshtein, ocr_char_accuracy, score_run, score_with, EvalError, Latency, MetricsReport,
    Rate, DESKEW_ANGLES,
};
