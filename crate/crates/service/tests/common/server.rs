//! A real `invoicer serve` process, driven over HTTP.

use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use base64::Engine;
use invoice_service::{replay_journal, JobState};
use serde_json::{json, Value};

pub struct Server {
    child: Child,
    base: String,
}

impl Server {
    pub fn start(store: &Path, config: &Path, replay: &Path) -> Server {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let child = Command::new(env!("CARGO_BIN_EXE_invoicer"))
            .args(["serve", "--port", &port.to_string(), "--workers", "1"])
            .arg("--store")
            .arg(store)
            .arg("--config")
            .arg(config)
            .arg("--llm")
            .arg(format!("replay:{}", replay.display()))
            .env_remove("LLM_API_KEY")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let server = Server {
            child,
            base: format!("http://127.0.0.1:{port}"),
        };
        let started = Instant::now();
        while reqwest::blocking::get(format!("{}/healthz", server.base)).is_err() {
            assert!(started.elapsed() < Duration::from_secs(30), "server did not come up");
            std::thread::sleep(Duration::from_millis(50));
        }
        server
    }

    fn client() -> reqwest::blocking::Client {
        reqwest::blocking::Client::new()
    }

    pub fn upload(&self, name: &str, bytes: &[u8]) -> String {
        let body = json!({
            "filename": name,
            "content_base64": base64::engine::general_purpose::STANDARD.encode(bytes),
        });
        let r = Self::client().post(format!("{}/v1/invoices", self.base)).json(&body).send().unwrap();
        assert_eq!(r.status().as_u16(), 202);
        r.json::<Value>().unwrap()["job_id"].as_str().unwrap().to_string()
    }

    pub fn state(&self, id: &str) -> JobState {
        let v: Value = Self::client()
            .get(format!("{}/v1/invoices/{id}", self.base))
            .send()
            .unwrap()
            .json()
            .unwrap();
        v["job"]["state"].as_str().unwrap().parse().unwrap()
    }

    pub fn wait_until(&self, ids: &[String], mut done: impl FnMut(&[JobState]) -> bool) -> Vec<JobState> {
        let started = Instant::now();
        loop {
            let states: Vec<JobState> = ids.iter().map(|id| self.state(id)).collect();
            if done(&states) {
                return states;
            }
            assert!(started.elapsed() < Duration::from_secs(120), "{states:?}");
            std::thread::sleep(Duration::from_millis(50));
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Kill the server with SIGKILL mid-batch and restart it on the same store
/// under `dir`. Every accepted invoice must settle after the restart and
/// none may be admitted twice. Panics otherwise.
pub fn kill_and_restart(dir: &Path) {
    let corpus = super::corpus(&dir.join("corpus"), 77, 5);
    let config = super::ocr_config(dir, &corpus);
    let store = dir.join("store");

    // scans go through preprocessing and OCR, slow enough to interrupt
    let scans: Vec<(String, Vec<u8>)> = corpus
        .ids()
        .iter()
        .map(|id| (format!("{id}.png"), std::fs::read(corpus.dir(id).join("page.png")).unwrap()))
        .collect();

    let server = Server::start(&store, &config, &corpus.replay_dir());
    let ids: Vec<String> = scans.iter().map(|(n, b)| server.upload(n, b)).collect();
    let at_kill = server.wait_until(&ids, |s| s.iter().any(|s| s.is_settled()));
    drop(server);
    assert!(at_kill.iter().any(|s| !s.is_settled()), "batch finished before the kill: {at_kill:?}");

    let server = Server::start(&store, &config, &corpus.replay_dir());
    let states = server.wait_until(&ids, |s| s.iter().all(|s| s.is_settled()));
    for s in &states {
        assert!(matches!(s, JobState::Exported | JobState::NeedsReview), "{states:?}");
    }

    // re-submitting an accepted invoice is recognised
    let again = server.upload("again.png", &scans[0].1);
    let s = server.wait_until(std::slice::from_ref(&again), |s| s[0].is_settled());
    assert_eq!(s[0], JobState::RejectedDuplicate);
    drop(server);

    let summary = replay_journal(&store).unwrap();
    assert_eq!(summary.jobs.len(), ids.len() + 1);
    let dedup = std::fs::read_to_string(store.join("dedup.idx")).unwrap();
    assert_eq!(dedup.lines().filter(|l| l.starts_with("raw ")).count(), ids.len());
}
