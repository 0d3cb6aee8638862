mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use base64::Engine;
use invoice_core::model::PipelineConfig;
use invoice_core::pipeline::Pipeline;
use invoice_service::{replay_journal, JobState, Service, ServiceSettings, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    dir: tempfile::TempDir,
    service: Service,
}

impl Harness {
    fn new(cfg: PipelineConfig, settings: ServiceSettings) -> Harness {
        let dir = tempfile::tempdir().unwrap();
        Self::in_dir(dir, cfg, settings)
    }

    fn in_dir(dir: tempfile::TempDir, cfg: PipelineConfig, settings: ServiceSettings) -> Harness {
        let store = Arc::new(Store::open(&dir.path().join("store")).unwrap());
        let pipeline = Arc::new(Pipeline::new(cfg).unwrap());
        Harness {
            service: Service::start(store, pipeline, settings),
            dir,
        }
    }

    fn app(&self) -> Router {
        self.service.router()
    }

    async fn send(&self, req: Request<Body>) -> (StatusCode, Vec<u8>, String) {
        let resp = self.app().oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
        (status, body, ctype)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (s, body, _) = self.send(Request::get(uri).body(Body::empty()).unwrap()).await;
        (s, serde_json::from_slice(&body).unwrap_or(Value::Null))
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let req = Request::post(uri)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (s, body, _) = self.send(req).await;
        (s, serde_json::from_slice(&body).unwrap_or(Value::Null))
    }

    async fn upload(&self, name: &str, bytes: &[u8]) -> String {
        let body = json!({
            "filename": name,
            "content_base64": base64::engine::general_purpose::STANDARD.encode(bytes),
        });
        let (s, v) = self.post("/v1/invoices", body).await;
        assert_eq!(s, StatusCode::ACCEPTED, "{v}");
        v["job_id"].as_str().unwrap().to_string()
    }

    async fn settled(&self, id: &str) -> Value {
        let started = Instant::now();
        loop {
            let (s, v) = self.get(&format!("/v1/invoices/{id}")).await;
            assert_eq!(s, StatusCode::OK, "{v}");
            let state: JobState = v["job"]["state"].as_str().unwrap().parse().unwrap();
            if state.is_settled() {
                return v;
            }
            assert!(started.elapsed() < Duration::from_secs(60), "job {id} stuck at {state}");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}

fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap_or_else(|| panic!("not an error body: {v}"))
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_and_error_shapes() {
    let h = Harness::new(PipelineConfig::default(), ServiceSettings::default());
    let (s, v) = h.get("/healthz").await;
    assert_eq!((s, v), (StatusCode::OK, json!({"status": "ok"})));

    let (s, v) = h.get("/v1/invoices/00000000-0000-0000-0000-000000000000").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "NotFound");
    let (s, v) = h.get("/v1/invoices/not-a-uuid").await;
    assert_eq!((s, error_code(&v)), (StatusCode::NOT_FOUND, "NotFound"));
    let (s, v) = h.get("/nowhere").await;
    assert_eq!((s, error_code(&v)), (StatusCode::NOT_FOUND, "NotFound"));

    let (s, v) = h.post("/v1/invoices", json!({"filename": "a.pdf"})).await;
    assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "InvalidJson"));
    let (s, v) = h.post("/v1/invoices", json!({"filename": "a.pdf", "content_base64": "%%%"})).await;
    assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "InvalidBase64"));
    let (s, v) = h.post("/v1/invoices", json!({"filename": "a.pdf", "content_base64": ""})).await;
    assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "EmptyUpload"));

    let (s, v) = h.get("/v1/export?format=pdf").await;
    assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "UnsupportedFormat"));
    let (s, v) = h.get("/v1/export?status=done").await;
    assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "InvalidQuery"));
    let (s, v) = h.get("/v1/review/queue?limit=x").await;
    assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "InvalidQuery"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn uploads_settle_and_duplicates_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::corpus(dir.path(), 11, 3);
    let h = Harness::new(common::replay_cfg(&corpus.replay_dir()), ServiceSettings::default());

    let mut ids = Vec::new();
    for id in corpus.ids() {
        let pdf = std::fs::read(corpus.dir(id).join("invoice.pdf")).unwrap();
        ids.push(h.upload(&format!("{id}.pdf"), &pdf).await);
    }
    for id in &ids {
        let v = h.settled(id).await;
        assert_eq!(v["job"]["state"], "exported", "{v}");
        assert_eq!(v["invoice"]["status"], "auto_approved");
        assert!(v["validation_report"]["checks"].is_array());
        let states: Vec<&str> = v["job"]["transitions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["state"].as_str().unwrap())
            .collect();
        assert_eq!(states, ["received", "preprocessed", "extracted", "validated", "exported"]);
    }

    // same bytes again, as a multipart upload
    let pdf = std::fs::read(corpus.dir(&corpus.ids()[0]).join("invoice.pdf")).unwrap();
    let boundary = "XyZ";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"again.pdf\"\r\nContent-Type: application/pdf\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(&pdf);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let req = Request::post("/v1/invoices")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (s, body, _) = h.send(req).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let dup: Value = serde_json::from_slice(&body).unwrap();
    let v = h.settled(dup["job_id"].as_str().unwrap()).await;
    assert_eq!(v["job"]["state"], "rejected_duplicate");
    assert_eq!(v["job"]["filename"], "again.pdf");

    let (_, audit) = h.get(&format!("/v1/invoices/{}/audit", ids[0])).await;
    let actions: Vec<&str> = audit["events"].as_array().unwrap().iter().map(|e| e["action"].as_str().unwrap()).collect();
    assert_eq!(actions, ["finalize", "export"]);

    let (s, csv, ctype) = h.send(Request::get("/v1/export?format=csv").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert!(ctype.starts_with("text/csv"));
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    let (_, json) = h.get("/v1/export?format=json&status=rejected_duplicate").await;
    assert_eq!(json.as_array().unwrap().len(), 1);
    let (s, xlsx, ctype) = h.send(Request::get("/v1/export?format=xlsx").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert!(ctype.contains("spreadsheetml"));
    assert_eq!(&xlsx[..2], b"PK");

    let summary = replay_journal(&h.dir.path().join("store")).unwrap();
    assert_eq!(summary.jobs.len(), 4);
    assert_eq!(summary.entries, 4 * 5);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn correction_flow() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay");
    let pdf = common::invoice_with_total(&replay, "HL-2024-0042", "160.00");
    let h = Harness::in_dir(dir, common::replay_cfg(&replay), ServiceSettings::default());

    let id = h.upload("hl.pdf", &pdf).await;
    let v = h.settled(&id).await;
    assert_eq!(v["job"]["state"], "needs_review", "{v}");
    let checks = v["validation_report"]["checks"].as_array().unwrap();
    let total = checks.iter().find(|c| c["id"] == "TOTAL").unwrap();
    assert_eq!(total["outcome"], "failed");
    let revision = v["job"]["revision"].as_u64().unwrap();
    let before_conf = v["invoice"]["fields"]["total_amount"]["confidence"].as_f64().unwrap();

    let (_, q) = h.get("/v1/review/queue").await;
    assert_eq!(q["items"][0]["job_id"], id.as_str());
    assert_eq!(q["items"][0]["failing_checks"], json!(["TOTAL"]));

    let url = format!("/v1/review/{id}/corrections");
    let (s, e) = h
        .post(&url, json!({"corrections": [{"field": "invoice_date", "new_value": "31/02/2024"}], "reviewer": "r1"}))
        .await;
    assert_eq!((s, error_code(&e)), (StatusCode::UNPROCESSABLE_ENTITY, "NormalizationFailed"));
    let (s, e) = h
        .post(&url, json!({"corrections": [{"field": "colour", "new_value": "red"}], "reviewer": "r1"}))
        .await;
    assert_eq!((s, error_code(&e)), (StatusCode::UNPROCESSABLE_ENTITY, "UnknownField"));
    let (s, e) = h
        .post(&url, json!({"corrections": [{"field": "total_amount", "new_value": "165.00"}], "reviewer": ""}))
        .await;
    assert_eq!((s, error_code(&e)), (StatusCode::BAD_REQUEST, "MissingReviewer"));
    let (s, e) = h
        .post(
            &url,
            json!({"corrections": [{"field": "total_amount", "new_value": "165.00"}], "reviewer": "r1", "revision": revision + 7}),
        )
        .await;
    assert_eq!((s, error_code(&e)), (StatusCode::CONFLICT, "RevisionMismatch"));
    let v = h.settled(&id).await;
    assert_eq!(v["job"]["revision"].as_u64().unwrap(), revision, "failed corrections changed the job");
    assert_eq!(v["job"]["state"], "needs_review");

    let (s, v) = h
        .post(
            &url,
            json!({
                "corrections": [{"field": "total_amount", "new_value": "165.00", "note": "misprint"}],
                "reviewer": "r1",
                "revision": revision,
            }),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["invoice"]["status"], "corrected");
    assert_eq!(v["job"]["state"], "exported");
    let field = &v["invoice"]["fields"]["total_amount"];
    assert_eq!(field["provenance"], "human");
    assert!(field["confidence"].as_f64().unwrap() >= before_conf);
    let total = v["validation_report"]["checks"].as_array().unwrap().iter().find(|c| c["id"] == "TOTAL").cloned().unwrap();
    assert_eq!(total["outcome"], "passed");

    let (_, q) = h.get("/v1/review/queue").await;
    assert_eq!(q["items"], json!([]));
    let (_, audit) = h.get(&format!("/v1/invoices/{id}/audit")).await;
    let ev = audit["events"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["action"] == "correct:total_amount")
        .cloned()
        .unwrap();
    assert_eq!(ev["actor"], "r1");
    assert_eq!(ev["before"]["raw_text"], "$160.00");
    assert_eq!(ev["after"]["raw_text"], "165.00");
    assert_eq!(ev["after"]["note"], "misprint");

    let (s, e) = h
        .post(&url, json!({"corrections": [{"field": "total_amount", "new_value": "1.00"}], "reviewer": "r1"}))
        .await;
    assert_eq!((s, error_code(&e)), (StatusCode::CONFLICT, "JobNotReviewable"));
    replay_journal(&h.dir.path().join("store")).unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn review_queue_is_sorted_and_limited() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay");
    let h = Harness::in_dir(dir, common::replay_cfg(&replay), ServiceSettings::default());
    let mut ids = Vec::new();
    for (n, total) in [("Q-101", "160.00"), ("Q-102", "170.00"), ("Q-103", "999.00")] {
        let pdf = common::invoice_with_total(&replay, n, total);
        ids.push(h.upload(&format!("{n}.pdf"), &pdf).await);
    }
    for id in &ids {
        h.settled(id).await;
    }
    let (_, q) = h.get("/v1/review/queue").await;
    assert_eq!(q["total"], 3);
    let conf: Vec<f64> = q["items"].as_array().unwrap().iter().map(|i| i["overall_confidence"].as_f64().unwrap()).collect();
    assert!(conf.windows(2).all(|w| w[0] <= w[1]), "{conf:?}");
    let (_, q) = h.get("/v1/review/queue?limit=2").await;
    assert_eq!(q["items"].as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bearer_token_guards_the_api() {
    let settings = ServiceSettings {
        bearer_token: Some("s3cret".into()),
        ..Default::default()
    };
    let h = Harness::new(PipelineConfig::default(), settings);
    assert_eq!(h.get("/healthz").await.0, StatusCode::OK);
    let (s, v) = h.get("/v1/review/queue").await;
    assert_eq!((s, error_code(&v)), (StatusCode::UNAUTHORIZED, "Unauthorized"));
    let req = |token: &str| {
        Request::get("/v1/review/queue")
            .header(header::AUTHORIZATION, format!("Bearer {token}"))
            .body(Body::empty())
            .unwrap()
    };
    assert_eq!(h.send(req("wrong")).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(h.send(req("s3cret")).await.0, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn page_images() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::corpus(dir.path(), 5, 1);
    let h = Harness::new(common::replay_cfg(&corpus.replay_dir()), ServiceSettings::default());
    let pdf = std::fs::read(corpus.dir(&corpus.ids()[0]).join("invoice.pdf")).unwrap();
    let id = h.upload("a.pdf", &pdf).await;
    h.settled(&id).await;
    let (s, body, ctype) = h
        .send(Request::get(format!("/v1/invoices/{id}/page/1.png")).body(Body::empty()).unwrap())
        .await;
    assert_eq!((s, ctype.as_str()), (StatusCode::OK, "image/png"));
    assert_eq!(&body[1..4], b"PNG");
    let (s, v) = h.get(&format!("/v1/invoices/{id}/page/2.png")).await;
    assert_eq!((s, error_code(&v)), (StatusCode::NOT_FOUND, "NotFound"));
    let (s, _) = h.get(&format!("/v1/invoices/{id}/page/one.png")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unreadable_upload_fails_the_job() {
    let h = Harness::new(PipelineConfig::default(), ServiceSettings::default());
    let id = h.upload("junk.pdf", b"%PDF-1.4 this is not really a pdf").await;
    let v = h.settled(&id).await;
    assert_eq!(v["job"]["state"], "failed");
    assert!(v["job"]["error"].as_str().unwrap().len() > 3);
    assert!(v["invoice"].is_null());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unfinished_jobs_resume_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::corpus(dir.path(), 23, 4);
    let store_dir = dir.path().join("store");
    let mut accepted = Vec::new();
    {
        // accepted but never processed: the process died
        let store = Store::open(&store_dir).unwrap();
        for id in corpus.ids() {
            let pdf = std::fs::read(corpus.dir(id).join("invoice.pdf")).unwrap();
            accepted.push(store.submit(&format!("{id}.pdf"), &pdf).unwrap().id);
        }
        store
            .update(accepted[1], |r, _| r.move_to(JobState::Preprocessed, chrono::Utc::now()))
            .unwrap();
    }
    let store = Arc::new(Store::open(&store_dir).unwrap());
    let pipeline = Arc::new(Pipeline::new(common::replay_cfg(&corpus.replay_dir())).unwrap());
    let service = Service::start(store.clone(), pipeline, ServiceSettings::default());
    let started = Instant::now();
    while !store.unsettled().is_empty() {
        assert!(started.elapsed() < Duration::from_secs(60));
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    service.workers.stop().await;
    for id in &accepted {
        assert_eq!(store.get(*id).unwrap().state, JobState::Exported);
    }
    let summary = replay_journal(&store_dir).unwrap();
    assert_eq!(summary.jobs.len(), accepted.len());
    assert_eq!(store.registry().dedup.raw_hashes.len(), accepted.len());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn api_and_batch_give_the_same_invoice() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::corpus(dir.path(), 31, 2);
    let cfg = common::replay_cfg(&corpus.replay_dir());
    for id in corpus.ids() {
        let path = corpus.dir(id).join("invoice.pdf");
        let out = dir.path().join(format!("{id}.json"));
        let batch = invoice_service::run_batch(cfg.clone(), &[path.clone()], &out).unwrap();
        let h = Harness::new(cfg.clone(), ServiceSettings::default());
        let job = h.upload("x.pdf", &std::fs::read(&path).unwrap()).await;
        let v = h.settled(&job).await;
        assert_eq!(v["invoice"], serde_json::to_value(&batch.exported[0]).unwrap());
    }
}
