use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub timestamp: DateTime<Utc>,
    /// "system" or a user id.
    pub actor: String,
    pub action: String,
    pub subject: String,
    pub before: Option<serde_json::Value>,
    pub after: Option<serde_json::Value>,
}

impl AuditEvent {
    pub fn system(action: &str, subject: &str) -> Self {
        AuditEvent {
            timestamp: Utc::now(),
            actor: "system".into(),
            action: action.into(),
            subject: subject.into(),
            before: None,
            after: None,
        }
    }
}

struct Inner {
    file: Option<File>,
    last: HashMap<String, DateTime<Utc>>,
    events: Vec<AuditEvent>,
}

/// Append-only event log, optionally mirrored to an NDJSON file. Timestamps
/// are forced to increase per subject.
pub struct AuditLog {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog {
            path: None,
            inner: Mutex::new(Inner {
                file: None,
                last: HashMap::new(),
                events: Vec::new(),
            }),
        }
    }

    /// Open (or create) an NDJSON log, loading the events already in it.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut events = Vec::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<AuditEvent>(&line) {
                    Ok(e) => events.push(e),
                    // a torn final line after a crash
                    Err(e) => tracing::warn!(error = %e, "skipping unreadable audit line"),
                }
            }
        }
        let mut last = HashMap::new();
        for e in &events {
            last.insert(e.subject.clone(), e.timestamp);
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                file: Some(file),
                last,
                events,
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, mut event: AuditEvent) -> std::io::Result<AuditEvent> {
        let mut inner = self.inner.lock().expect("audit lock");
        if let Some(prev) = inner.last.get(&event.subject) {
            if event.timestamp <= *prev {
                event.timestamp = *prev + Duration::microseconds(1);
            }
        }
        if let Some(f) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&event).map_err(std::io::Error::other)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        inner.last.insert(event.subject.clone(), event.timestamp);
        inner.events.push(event.clone());
        Ok(event)
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.inner.lock().expect("audit lock").events.clone()
    }

    pub fn events_for(&self, subject: &str) -> Vec<AuditEvent> {
        self.inner
            .lock()
            .expect("audit lock")
            .events
            .iter()
            .filter(|e| e.subject == subject)
            .cloned()
            .collect()
    }
}
