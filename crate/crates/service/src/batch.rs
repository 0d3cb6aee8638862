//! The batch driver behind `invoicer process`.

use std::path::{Path, PathBuf};

use invoice_core::export::{write_output, ExportError, ExportSchema, OutputFormat};
use invoice_core::ingest::RawDocument;
use invoice_core::model::{ExtractedInvoice, InvoiceStatus, PipelineConfig};
use invoice_core::pipeline::{Pipeline, PipelineError, Registry};
use thiserror::Error;

pub const COMPLETE: &str = "Processing complete.";
pub const NO_DATA: &str = "No data extracted.";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("no input files")]
    NoInputs,
    #[error("cannot read input {path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },
    #[error("unsupported output extension: {0}")]
    OutputFormat(PathBuf),
    #[error(transparent)]
    Export(#[from] ExportError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileOutcome {
    pub path: PathBuf,
    pub result: Result<InvoiceStatus, String>,
}

#[derive(Debug, Clone, Default)]
pub struct BatchSummary {
    pub outcomes: Vec<FileOutcome>,
    /// Invoices written to the output, in input order.
    pub exported: Vec<ExtractedInvoice>,
}

impl BatchSummary {
    pub fn failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }

    pub fn count(&self, status: InvoiceStatus) -> usize {
        self.outcomes.iter().filter(|o| o.result.as_ref().ok() == Some(&status)).count()
    }
}

/// Expand directories to the regular files directly inside them, sorted.
/// Hidden files are skipped.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, BatchError> {
    let mut files = Vec::new();
    for p in inputs {
        let meta = std::fs::metadata(p).map_err(|source| BatchError::Input { path: p.clone(), source })?;
        if !meta.is_dir() {
            files.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).map_err(|source| BatchError::Input { path: p.clone(), source })?;
        let mut inside: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
            .collect();
        inside.sort();
        files.extend(inside);
    }
    if files.is_empty() {
        return Err(BatchError::NoInputs);
    }
    Ok(files)
}

/// Run every file through the pipeline in order. Unreadable or
/// unextractable files are logged and skipped; duplicates are not written.
/// The output file is written only when at least one invoice survives.
pub fn run(cfg: PipelineConfig, inputs: &[PathBuf], out: &Path) -> Result<BatchSummary, BatchError> {
    if OutputFormat::from_path(out).is_none() {
        return Err(BatchError::OutputFormat(out.to_path_buf()));
    }
    let files = collect_inputs(inputs)?;
    let pipeline = Pipeline::new(cfg)?;
    let mut registry = Registry::default();
    let mut summary = BatchSummary::default();
    for path in files {
        let result = RawDocument::open(&path)
            .map_err(PipelineError::from)
            .and_then(|doc| pipeline.extract(&doc).map(|ex| (doc.content_hash, ex)));
        let result = match result {
            Ok((hash, mut ex)) => {
                let subject = path.display().to_string();
                registry.decide(&hash, &mut ex.invoice, pipeline.config(), &subject);
                let status = ex.invoice.status;
                if status == InvoiceStatus::RejectedDuplicate {
                    tracing::warn!(file = %path.display(), "duplicate invoice, not exported");
                } else {
                    summary.exported.push(ex.invoice);
                }
                Ok(status)
            }
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                tracing::error!(file = %path.display(), error = %e, "skipping file");
                Err(e.to_string())
            }
        };
        summary.outcomes.push(FileOutcome { path, result });
    }
    if !summary.exported.is_empty() {
        write_output(out, &summary.exported, &ExportSchema::default())?;
    }
    Ok(summary)
}
