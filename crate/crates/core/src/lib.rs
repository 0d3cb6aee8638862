//! Invoice extraction pipeline.

pub mod export;
pub mod ingest;
pub mod layout;
pub mod llm;
pub mod model;
pub mod ner;
pub mod ocr;
pub mod pipeline;
pub mod preprocess;
pub mod validate;
