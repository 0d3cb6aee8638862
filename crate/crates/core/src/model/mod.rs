//! Shared domain types: money, the canonical field vocabulary, extracted
//! invoices and pipeline configuration.

pub mod config;
pub mod field;
pub mod invoice;
pub mod money;

pub use config::{
    AnomalyTuning, CascadeMetric, ConfidenceTuning, ConfigError, DatePolicy, EngineSpec,
    LayoutTuning, LlmMode, LlmSettings, OcrSettings, PipelineConfig, PreprocessTuning, SecretKey,
};
pub use field::{
    CanonicalField, Corroboration, FieldKind, FieldValue, NormalizedValue, Provenance, TokenId,
    UnknownField, ValidationStatus,
};
pub use invoice::{
    overall_confidence, AnomalyResult, Check, CheckOutcome, ExtractedInvoice, InvoiceStatus,
    LineItem, RawLineItem, ValidationReport,
};
pub use money::{detect_currency, money_format, money_parse, money_sum, Currency, Money, MoneyError};
