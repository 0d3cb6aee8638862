//! Job processing and the in-process FIFO queue.

use std::sync::Arc;

use chrono::{Duration, Utc};
use invoice_core::ingest::RawDocument;
use invoice_core::model::InvoiceStatus;
use invoice_core::pipeline::Pipeline;
use invoice_core::validate::AuditEvent;
use tokio::sync::{mpsc, watch, Mutex};
use tokio::task::JoinHandle;
use uuid::Uuid;

use crate::store::{JobState, Store, StoreError};

fn millis(ms: f64) -> Duration {
    Duration::microseconds((ms * 1000.0) as i64)
}

/// Run one job to a settled state. Jobs already settled are left alone, so
/// a job queued twice runs once.
pub fn process_job(store: &Store, pipeline: &Pipeline, id: Uuid) -> Result<JobState, StoreError> {
    let record = store.get(id).ok_or(StoreError::NotFound(id))?;
    if record.state.is_settled() {
        return Ok(record.state);
    }
    let bytes = match store.raw(&record.raw_hash) {
        Ok(b) => b,
        Err(e) => return fail(store, id, format!("original missing: {e}")),
    };
    let doc = RawDocument::from_bytes(bytes, record.filename.clone());
    let started = Utc::now();
    let ex = match pipeline.extract(&doc) {
        Ok(ex) => ex,
        Err(e) => return fail(store, id, e.to_string()),
    };

    // The pipeline runs its stages in one call; the stage boundaries are
    // stamped from its timings.
    let t = &ex.trace.timings;
    let preprocessed = started + millis(t.ingest_ms + t.preprocess_ms + t.ocr_ms);
    let extracted = preprocessed + millis(t.layout_ms + t.llm_ms);
    let validated = extracted + millis(t.validate_ms);
    let subject = id.to_string();
    let ((state, events), _) = store.update(id, |rec, registry| {
        if rec.state.is_settled() {
            return Ok::<_, StoreError>((rec.state, Vec::new()));
        }
        for (state, at) in [
            (JobState::Preprocessed, preprocessed),
            (JobState::Extracted, extracted),
            (JobState::Validated, validated),
        ] {
            if rec.state.can_move_to(state) {
                rec.move_to(state, at)?;
            }
        }
        let mut invoice = ex.invoice;
        let decision = registry.decide(&rec.raw_hash, &mut invoice, pipeline.config(), &subject);
        let state = match invoice.status {
            InvoiceStatus::AutoApproved | InvoiceStatus::Corrected => JobState::Exported,
            InvoiceStatus::NeedsReview => JobState::NeedsReview,
            InvoiceStatus::RejectedDuplicate => JobState::RejectedDuplicate,
        };
        rec.move_to(state, Utc::now())?;
        rec.invoice = Some(invoice);
        rec.trace = Some(ex.trace);
        let mut events = vec![decision.event];
        if state == JobState::Exported {
            events.push(AuditEvent::system("export", &subject));
        }
        Ok((state, events))
    })?;
    for e in events {
        store.audit().append(e)?;
    }
    tracing::info!(job = %id, state = %state, "job settled");
    Ok(state)
}

fn fail(store: &Store, id: Uuid, error: String) -> Result<JobState, StoreError> {
    tracing::warn!(job = %id, %error, "job failed");
    store.update(id, |rec, _| {
        rec.move_to(JobState::Failed, Utc::now())?;
        rec.error = Some(error.clone());
        Ok::<_, StoreError>(())
    })?;
    let mut event = AuditEvent::system("fail", &id.to_string());
    event.after = Some(serde_json::json!({ "error": error }));
    store.audit().append(event)?;
    Ok(JobState::Failed)
}

/// Handle for enqueueing jobs.
#[derive(Clone)]
pub struct Queue {
    tx: mpsc::UnboundedSender<Uuid>,
}

impl Queue {
    pub fn push(&self, id: Uuid) -> bool {
        self.tx.send(id).is_ok()
    }
}

/// Running workers. Dropping every [`Queue`] or calling [`Workers::stop`]
/// ends them.
pub struct Workers {
    stop: watch::Sender<bool>,
    handles: Vec<JoinHandle<()>>,
}

impl Workers {
    /// Let in-flight jobs finish, leave queued ones for the next start.
    pub async fn stop(self) {
        let _ = self.stop.send(true);
        for h in self.handles {
            let _ = h.await;
        }
    }
}

/// Start `n` workers draining one FIFO queue. Jobs left unsettled in the
/// store are queued first, oldest first.
pub fn start(n: usize, store: Arc<Store>, pipeline: Arc<Pipeline>) -> (Queue, Workers) {
    let (tx, rx) = mpsc::unbounded_channel();
    let recovered = store.unsettled();
    if !recovered.is_empty() {
        tracing::info!(jobs = recovered.len(), "re-queueing unfinished jobs");
    }
    for id in recovered {
        let _ = tx.send(id);
    }
    let rx = Arc::new(Mutex::new(rx));
    let (stop, stop_rx) = watch::channel(false);
    let handles = (0..n.max(1))
        .map(|_| {
            let rx = rx.clone();
            let store = store.clone();
            let pipeline = pipeline.clone();
            let mut stop_rx = stop_rx.clone();
            tokio::spawn(async move {
                loop {
                    let next = {
                        let mut rx = rx.lock().await;
                        tokio::select! {
                            biased;
                            _ = stop_rx.wait_for(|s| *s) => None,
                            id = rx.recv() => id,
                        }
                    };
                    let Some(id) = next else { break };
                    let (store, pipeline) = (store.clone(), pipeline.clone());
                    match tokio::task::spawn_blocking(move || process_job(&store, &pipeline, id)).await {
                        Ok(Ok(_)) => {}
                        Ok(Err(e)) => tracing::error!(job = %id, error = %e, "store error"),
                        Err(e) => tracing::error!(job = %id, error = %e, "worker panicked"),
                    }
                }
            })
        })
        .collect();
    (Queue { tx }, Workers { stop, handles })
}
