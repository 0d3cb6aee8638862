//! REST surface.

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use chrono::Utc;
use invoice_core::export::{ExportSchema, OutputFormat};
use invoice_core::ingest::RawDocument;
use invoice_core::model::{CanonicalField, InvoiceStatus, PipelineConfig};
use invoice_core::pipeline::Pipeline;
use invoice_core::validate::apply_corrections;
use serde::Deserialize;
use serde_json::{json, Value};
use uuid::Uuid;

use crate::preview::{page_png, PreviewError};
use crate::settings::ServiceSettings;
use crate::store::{JobRecord, JobState, Store, StoreError};
use crate::worker::{self, Queue, Workers};

pub struct AppState {
    pub store: Arc<Store>,
    pub pipeline: Arc<Pipeline>,
    pub queue: Queue,
    pub settings: ServiceSettings,
}

pub type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::IllegalTransition { .. } => ApiError::new(StatusCode::CONFLICT, "IllegalTransition", e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StoreError", e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A running service: state plus its workers.
pub struct Service {
    pub state: Shared,
    pub workers: Workers,
}

impl Service {
    /// Start workers over `store`, re-queueing unfinished jobs. Needs a
    /// Tokio runtime.
    pub fn start(store: Arc<Store>, pipeline: Arc<Pipeline>, settings: ServiceSettings) -> Service {
        let (queue, workers) = worker::start(settings.workers, store.clone(), pipeline.clone());
        Service {
            state: Arc::new(AppState {
                store,
                pipeline,
                queue,
                settings,
            }),
            workers,
        }
    }

    pub fn router(&self) -> Router {
        router(self.state.clone())
    }
}

pub fn router(state: Shared) -> Router {
    let v1 = Router::new()
        .route("/invoices", post(upload))
        .route("/invoices/{id}", get(job))
        .route("/invoices/{id}/audit", get(audit))
        .route("/invoices/{id}/page/{file}", get(page))
        .route("/review/queue", get(review_queue))
        .route("/review/{id}/corrections", post(corrections))
        .route("/export", get(export))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth));
    Router::new()
        .route("/healthz", get(|| async { Json(json!({ "status": "ok" })) }))
        .nest("/v1", v1)
        .fallback(|| async { ApiError::not_found("no such route") })
        .layer(DefaultBodyLimit::max(state.settings.max_upload_bytes))
        .with_state(state)
}

/// Bind, serve until Ctrl-C, then let in-flight jobs finish.
pub async fn serve(addr: SocketAddr, store_dir: &Path, cfg: PipelineConfig, settings: ServiceSettings) -> anyhow::Result<()> {
    let store = Arc::new(Store::open(store_dir)?);
    let pipeline = Arc::new(Pipeline::new(cfg)?);
    let service = Service::start(store, pipeline, settings);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %store_dir.display(), "listening");
    axum::serve(listener, service.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    service.workers.stop().await;
    Ok(())
}

fn same_bytes(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn auth(State(s): State<Shared>, req: Request, next: Next) -> ApiResult<Response> {
    if let Some(token) = &s.settings.bearer_token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if !given.is_some_and(|g| same_bytes(g.as_bytes(), token.as_bytes())) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong bearer token"));
        }
    }
    Ok(next.run(req).await)
}

fn parse_id(s: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(s).map_err(|_| ApiError::not_found(format!("job {s} not found")))
}

fn load(s: &AppState, id: &str) -> ApiResult<Arc<JobRecord>> {
    let id = parse_id(id)?;
    s.store.get(id).ok_or_else(|| ApiError::not_found(format!("job {id} not found")))
}

fn body_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request("InvalidJson", e.to_string()))
}

#[derive(Deserialize)]
struct UploadJson {
    filename: String,
    content_base64: String,
}

async fn upload(State(s): State<Shared>, req: Request) -> ApiResult<Response> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (filename, bytes) = if multipart {
        let mut form = Multipart::from_request(req, &s)
            .await
            .map_err(|e| ApiError::new(e.status(), "InvalidMultipart", e.body_text()))?;
        let mut found = None;
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::new(e.status(), "InvalidMultipart", e.body_text()))?
        {
            if field.name() == Some("file") || field.file_name().is_some() {
                let name = field.file_name().unwrap_or("upload").to_string();
                let data = field
                    .bytes()
                    .await
                    .map_err(|e| ApiError::new(e.status(), "InvalidMultipart", e.body_text()))?;
                found = Some((name, data.to_vec()));
                break;
            }
        }
        found.ok_or_else(|| ApiError::bad_request("MissingFile", "multipart body has no file field"))?
    } else {
        let bytes = Bytes::from_request(req, &s)
            .await
            .map_err(|e| ApiError::new(e.status(), "InvalidBody", e.body_text()))?;
        let body: UploadJson = body_json(&bytes)?;
        let data = base64::engine::general_purpose::STANDARD
            .decode(body.content_base64.trim())
            .map_err(|e| ApiError::bad_request("InvalidBase64", e.to_string()))?;
        (body.filename, data)
    };
    if bytes.is_empty() {
        return Err(ApiError::bad_request("EmptyUpload", "the uploaded file is empty"));
    }
    let store = s.store.clone();
    let record = tokio::task::spawn_blocking(move || store.submit(&filename, &bytes))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    if !s.queue.push(record.id) {
        tracing::warn!(job = %record.id, "queue closed; job left for restart recovery");
    }
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": record.id }))).into_response())
}

/// Job, invoice and validation report as one document.
pub fn job_view(r: &JobRecord) -> Value {
    let mut job = serde_json::to_value(r).unwrap_or_default();
    let invoice = job.as_object_mut().and_then(|o| o.remove("invoice")).unwrap_or(Value::Null);
    let report = invoice.get("validation_report").cloned().unwrap_or(Value::Null);
    json!({ "job": job, "invoice": invoice, "validation_report": report })
}

async fn job(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let r = load(&s, &id)?;
    Ok(Json(job_view(&r)))
}

async fn audit(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let r = load(&s, &id)?;
    let events = s.store.audit().events_for(&r.id.to_string());
    Ok(Json(json!({ "job_id": r.id, "events": events })))
}

async fn page(State(s): State<Shared>, UrlPath((id, file)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let r = load(&s, &id)?;
    let n: usize = file
        .strip_suffix(".png")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| ApiError::not_found(format!("no page {file}")))?;
    let store = s.store.clone();
    let rasterizer = s.pipeline.config().rasterizer_cmd.clone();
    let png = tokio::task::spawn_blocking(move || {
        let bytes = store.raw(&r.raw_hash).map_err(StoreError::from)?;
        let doc = RawDocument::from_bytes(bytes, r.filename.clone());
        page_png(&doc, n, rasterizer.as_deref()).map_err(|e| match e {
            PreviewError::NoSuchPage(_) => ApiError::not_found(e.to_string()),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "PageUnavailable", e.to_string()),
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

fn failing_checks(r: &JobRecord) -> Vec<String> {
    r.invoice
        .as_ref()
        .map(|i| i.validation_report.failing().map(|c| c.id.clone()).collect())
        .unwrap_or_default()
}

async fn review_queue(State(s): State<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let limit = match q.get("limit") {
        Some(l) => l
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request("InvalidQuery", format!("limit must be a number, got {l:?}")))?,
        None => 50,
    };
    let mut waiting: Vec<_> = s
        .store
        .list()
        .into_iter()
        .filter(|r| r.state == JobState::NeedsReview)
        .collect();
    let conf = |r: &JobRecord| r.invoice.as_ref().map_or(0.0, |i| i.overall_confidence);
    waiting.sort_by(|a, b| conf(a).total_cmp(&conf(b)));
    let items: Vec<Value> = waiting
        .iter()
        .take(limit)
        .map(|r| {
            let inv = r.invoice.as_ref();
            json!({
                "job_id": r.id,
                "filename": r.filename,
                "revision": r.revision,
                "overall_confidence": conf(r),
                "vendor_name": inv.and_then(|i| i.text(CanonicalField::VendorName)),
                "total_amount": inv.and_then(|i| i.text(CanonicalField::TotalAmount)),
                "failing_checks": failing_checks(r),
            })
        })
        .collect();
    Ok(Json(json!({ "total": waiting.len(), "items": items })))
}

#[derive(Deserialize)]
struct CorrectionItem {
    field: String,
    new_value: String,
    #[serde(default)]
    note: Option<String>,
}

#[derive(Deserialize)]
struct CorrectionRequest {
    corrections: Vec<CorrectionItem>,
    reviewer: String,
    /// When given, must match the job's current revision.
    #[serde(default)]
    revision: Option<u64>,
}

async fn corrections(State(s): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let id = parse_id(&id)?;
    let req: CorrectionRequest = body_json(&body)?;
    if req.reviewer.trim().is_empty() {
        return Err(ApiError::bad_request("MissingReviewer", "reviewer is required"));
    }
    if req.corrections.is_empty() {
        return Err(ApiError::bad_request("NoCorrections", "corrections is empty"));
    }
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for c in &req.corrections {
        let field = CanonicalField::from_str(&c.field).map_err(|e| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UnknownField", format!("unknown field {:?}", e.0))
        })?;
        if !seen.insert(field) {
            return Err(ApiError::bad_request("DuplicateField", format!("{field} corrected twice")));
        }
        pairs.push((field, c.new_value.clone()));
    }
    let notes: HashMap<String, String> = req
        .corrections
        .iter()
        .filter_map(|c| c.note.clone().map(|n| (c.field.clone(), n)))
        .collect();

    let cfg = s.pipeline.config();
    let subject = id.to_string();
    let ((events, exported), record) = s.store.update(id, |rec, _| {
        if rec.state != JobState::NeedsReview {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "JobNotReviewable",
                format!("job is {}, not needs_review", rec.state),
            ));
        }
        if req.revision.is_some_and(|r| r != rec.revision) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "RevisionMismatch",
                format!("job is at revision {}", rec.revision),
            ));
        }
        let inv = rec
            .invoice
            .as_mut()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "JobNotReviewable", "job has no invoice"))?;
        let events = apply_corrections(inv, &pairs, req.reviewer.trim(), &subject, cfg).map_err(|(field, e)| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "NormalizationFailed", format!("{field}: {e}"))
        })?;
        let exported = inv.status == InvoiceStatus::Corrected;
        if exported {
            rec.move_to(JobState::Exported, Utc::now())?;
        }
        Ok((events, exported))
    })?;
    for mut e in events {
        let field = e.action.strip_prefix("correct:").unwrap_or_default().to_string();
        if let (Some(note), Some(Value::Object(after))) = (notes.get(&field), e.after.as_mut()) {
            after.insert("note".into(), Value::String(note.clone()));
        }
        s.store.audit().append(e).map_err(StoreError::from)?;
    }
    if exported {
        let mut e = invoice_core::validate::AuditEvent::system("export", &subject);
        e.actor = req.reviewer.trim().to_string();
        s.store.audit().append(e).map_err(StoreError::from)?;
    }
    Ok(Json(job_view(&record)))
}

async fn export(State(s): State<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let (format, mime) = match q.get("format").map(String::as_str).unwrap_or("json") {
        "csv" => (OutputFormat::Csv, "text/csv; charset=utf-8"),
        "xlsx" => (
            OutputFormat::Xlsx,
            "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
        ),
        "json" => (OutputFormat::Json, "application/json"),
        other => return Err(ApiError::bad_request("UnsupportedFormat", format!("format {other:?}"))),
    };
    let states: HashSet<JobState> = q
        .get("status")
        .map(String::as_str)
        .unwrap_or("exported")
        .split(',')
        .map(|s| s.trim().parse::<JobState>())
        .collect::<Result<_, _>>()
        .map_err(|e| ApiError::bad_request("InvalidQuery", e))?;
    let invoices: Vec<_> = s
        .store
        .list()
        .iter()
        .filter(|r| states.contains(&r.state))
        .filter_map(|r| r.invoice.clone())
        .collect();
    let body = format.render(&invoices, &ExportSchema::default());
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, mime.parse().expect("static mime"));
    Ok((headers, body).into_response())
}
