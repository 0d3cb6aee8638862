//! File-backed job store.
//!
//! ```text
//! <root>/raw/<sha256>        original bytes, content addressed
//! <root>/jobs/<uuid>.json    one record per job, replaced atomically
//! <root>/transitions.log     append-only journal of state changes
//! <root>/audit.log           append-only audit events
//! <root>/dedup.idx           "raw <hash>" / "logical <hash>" lines
//! ```
//!
//! Every mutation goes through one writer lock. Readers get `Arc` snapshots
//! of job records and never wait on processing.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use invoice_core::ingest::sha256_hex;
use invoice_core::model::ExtractedInvoice;
use invoice_core::pipeline::{ProcessingTrace, Registry};
use invoice_core::validate::{logical_hash, AuditLog, DedupIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Received,
    Preprocessed,
    Extracted,
    Validated,
    NeedsReview,
    Exported,
    Failed,
    RejectedDuplicate,
}

impl JobState {
    pub const ALL: [JobState; 8] = [
        JobState::Received,
        JobState::Preprocessed,
        JobState::Extracted,
        JobState::Validated,
        JobState::NeedsReview,
        JobState::Exported,
        JobState::Failed,
        JobState::RejectedDuplicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Received => "received",
            JobState::Preprocessed => "preprocessed",
            JobState::Extracted => "extracted",
            JobState::Validated => "validated",
            JobState::NeedsReview => "needs_review",
            JobState::Exported => "exported",
            JobState::Failed => "failed",
            JobState::RejectedDuplicate => "rejected_duplicate",
        }
    }

    /// Whether processing is over for this job. `needs_review` counts: it
    /// waits on a person, not a worker.
    pub fn is_settled(self) -> bool {
        !matches!(
            self,
            JobState::Received | JobState::Preprocessed | JobState::Extracted | JobState::Validated
        )
    }

    pub fn can_move_to(self, next: JobState) -> bool {
        use JobState::*;
        match (self, next) {
            (Failed, _) => false,
            (_, Failed) => true,
            (Received, Preprocessed) | (Preprocessed, Extracted) | (Extracted, Validated) => true,
            (Validated, Exported | NeedsReview | RejectedDuplicate) => true,
            // a reviewer cleared it
            (NeedsReview, Exported) => true,
            _ => false,
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JobState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JobState::ALL
            .into_iter()
            .find(|j| j.as_str() == s)
            .ok_or_else(|| format!("unknown job state {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: JobState,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: Uuid,
    pub filename: String,
    pub raw_hash: String,
    pub state: JobState,
    /// Bumped on every stored change.
    pub revision: u64,
    pub transitions: Vec<Transition>,
    pub error: Option<String>,
    pub invoice: Option<ExtractedInvoice>,
    pub trace: Option<ProcessingTrace>,
}

impl JobRecord {
    pub fn received_at(&self) -> DateTime<Utc> {
        self.transitions.first().map_or(DateTime::<Utc>::MIN_UTC, |t| t.at)
    }

    /// Move to `next`, stamping it at `at` (clamped so the log stays
    /// ordered).
    pub fn move_to(&mut self, next: JobState, at: DateTime<Utc>) -> Result<(), StoreError> {
        if !self.state.can_move_to(next) {
            return Err(StoreError::IllegalTransition {
                id: self.id,
                from: self.state,
                to: next,
            });
        }
        let at = self.transitions.last().map_or(at, |t| at.max(t.at));
        self.transitions.push(Transition { state: next, at });
        self.state = next;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("job {0} not found")]
    NotFound(Uuid),
    #[error("job {id}: illegal transition {from} -> {to}")]
    IllegalTransition { id: Uuid, from: JobState, to: JobState },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub job: Uuid,
    pub from: Option<JobState>,
    pub to: JobState,
    pub at: DateTime<Utc>,
}

struct Writer {
    registry: Registry,
    journal: File,
}

pub struct Store {
    root: PathBuf,
    jobs: RwLock<HashMap<Uuid, Arc<JobRecord>>>,
    writer: Mutex<Writer>,
    audit: AuditLog,
}

/// Write `bytes` to `path` through a sibling temp file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn read_dedup(path: &Path) -> Result<DedupIndex, StoreError> {
    let mut index = DedupIndex::default();
    if !path.exists() {
        return Ok(index);
    }
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        match line.split_once(' ') {
            Some(("raw", h)) => {
                index.raw_hashes.insert(h.to_string());
            }
            Some(("logical", h)) => {
                index.canonical_hashes.insert(h.to_string());
            }
            _ if line.trim().is_empty() => {}
            _ => return Err(StoreError::Corrupt(format!("dedup index line {line:?}"))),
        }
    }
    Ok(index)
}

fn dedup_text(index: &DedupIndex) -> String {
    let mut out = String::new();
    for h in &index.raw_hashes {
        out.push_str("raw ");
        out.push_str(h);
        out.push('\n');
    }
    for h in &index.canonical_hashes {
        out.push_str("logical ");
        out.push_str(h);
        out.push('\n');
    }
    out
}

impl Store {
    /// Open or create a store. Job records are authoritative: the dedup
    /// index and vendor history are rebuilt from settled jobs and merged
    /// with the index file, which may lag a crash.
    pub fn open(root: &Path) -> Result<Store, StoreError> {
        fs::create_dir_all(root.join("raw"))?;
        fs::create_dir_all(root.join("jobs"))?;
        let mut jobs = HashMap::new();
        for entry in fs::read_dir(root.join("jobs"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let record: JobRecord = serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
            jobs.insert(record.id, Arc::new(record));
        }

        let mut registry = Registry {
            dedup: read_dedup(&root.join("dedup.idx"))?,
            ..Default::default()
        };
        let mut settled: Vec<&JobRecord> = jobs
            .values()
            .map(Arc::as_ref)
            .filter(|r| matches!(r.state, JobState::Exported | JobState::NeedsReview))
            .collect();
        settled.sort_by_key(|r| (r.received_at(), r.id));
        for r in settled {
            let Some(inv) = &r.invoice else { continue };
            registry.dedup.insert(&r.raw_hash, logical_hash(inv).as_deref());
            if let (Some(v), Some(t)) = (
                inv.text(invoice_core::model::CanonicalField::VendorName),
                inv.money(invoice_core::model::CanonicalField::TotalAmount),
            ) {
                registry.history.record(&v, t);
            }
        }
        write_atomic(&root.join("dedup.idx"), dedup_text(&registry.dedup).as_bytes())?;

        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(root.join("transitions.log"))?;
        Ok(Store {
            root: root.to_path_buf(),
            jobs: RwLock::new(jobs),
            writer: Mutex::new(Writer { registry, journal }),
            audit: AuditLog::open(&root.join("audit.log"))?,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn get(&self, id: Uuid) -> Option<Arc<JobRecord>> {
        self.jobs.read().expect("jobs lock").get(&id).cloned()
    }

    /// All jobs in arrival order.
    pub fn list(&self) -> Vec<Arc<JobRecord>> {
        let mut all: Vec<_> = self.jobs.read().expect("jobs lock").values().cloned().collect();
        all.sort_by_key(|r| (r.received_at(), r.id));
        all
    }

    /// Jobs a worker still has to pick up, in arrival order.
    pub fn unsettled(&self) -> Vec<Uuid> {
        self.list().iter().filter(|r| !r.state.is_settled()).map(|r| r.id).collect()
    }

    pub fn raw(&self, hash: &str) -> io::Result<Vec<u8>> {
        fs::read(self.root.join("raw").join(hash))
    }

    /// Accept an upload: keep the original and create a `received` job.
    pub fn submit(&self, filename: &str, bytes: &[u8]) -> Result<Arc<JobRecord>, StoreError> {
        let hash = sha256_hex(bytes);
        let raw = self.root.join("raw").join(&hash);
        if !raw.exists() {
            write_atomic(&raw, bytes)?;
        }
        let mut record = JobRecord {
            id: Uuid::new_v4(),
            filename: filename.to_string(),
            raw_hash: hash,
            state: JobState::Received,
            revision: 0,
            transitions: vec![Transition {
                state: JobState::Received,
                at: Utc::now(),
            }],
            error: None,
            invoice: None,
            trace: None,
        };
        let mut w = self.writer.lock().expect("writer lock");
        self.persist(&mut w, &mut record, 0)?;
        let record = Arc::new(record);
        self.jobs.write().expect("jobs lock").insert(record.id, record.clone());
        Ok(record)
    }

    /// Change one job under the writer lock. `f` edits a copy; the copy is
    /// stored (record first, then journal and dedup index) only when `f`
    /// succeeds.
    pub fn update<T, E>(
        &self,
        id: Uuid,
        f: impl FnOnce(&mut JobRecord, &mut Registry) -> Result<T, E>,
    ) -> Result<(T, Arc<JobRecord>), E>
    where
        E: From<StoreError>,
    {
        let mut w = self.writer.lock().expect("writer lock");
        let current = self.get(id).ok_or(StoreError::NotFound(id))?;
        let mut record = (*current).clone();
        let mut registry = w.registry.clone();
        let out = f(&mut record, &mut registry)?;
        self.persist(&mut w, &mut record, current.transitions.len())?;
        if registry.dedup != w.registry.dedup {
            write_atomic(&self.root.join("dedup.idx"), dedup_text(&registry.dedup).as_bytes())
                .map_err(StoreError::from)?;
        }
        w.registry = registry;
        let record = Arc::new(record);
        self.jobs.write().expect("jobs lock").insert(id, record.clone());
        Ok((out, record))
    }

    fn persist(&self, w: &mut Writer, record: &mut JobRecord, logged: usize) -> Result<(), StoreError> {
        record.revision += 1;
        let path = self.root.join("jobs").join(format!("{}.json", record.id));
        let json = serde_json::to_vec_pretty(record).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        write_atomic(&path, &json)?;
        let mut lines = String::new();
        for (i, t) in record.transitions.iter().enumerate().skip(logged) {
            let entry = JournalEntry {
                job: record.id,
                from: i.checked_sub(1).map(|p| record.transitions[p].state),
                to: t.state,
                at: t.at,
            };
            lines.push_str(&serde_json::to_string(&entry).map_err(|e| StoreError::Corrupt(e.to_string()))?);
            lines.push('\n');
        }
        if !lines.is_empty() {
            w.journal.write_all(lines.as_bytes())?;
            w.journal.flush()?;
        }
        Ok(())
    }

    /// Snapshot of the cross-job review state.
    pub fn registry(&self) -> Registry {
        self.writer.lock().expect("writer lock").registry.clone()
    }
}

/// Per-job outcome of replaying the journal.
#[derive(Debug, Clone, PartialEq)]
pub struct JournalSummary {
    pub entries: usize,
    pub jobs: HashMap<Uuid, JobState>,
}

/// Replay `transitions.log` and reject any edge the state machine does not
/// allow, any gap, and any job that does not start at `received`.
pub fn replay_journal(root: &Path) -> Result<JournalSummary, StoreError> {
    let mut jobs: HashMap<Uuid, JobState> = HashMap::new();
    let mut entries = 0;
    let path = root.join("transitions.log");
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: JournalEntry =
            serde_json::from_str(&line).map_err(|err| StoreError::Corrupt(format!("journal line {}: {err}", n + 1)))?;
        let current = jobs.get(&e.job).copied();
        let ok = match (current, e.from) {
            (None, None) => e.to == JobState::Received,
            (Some(cur), Some(from)) => cur == from && from.can_move_to(e.to),
            _ => false,
        };
        if !ok {
            return Err(StoreError::Corrupt(format!(
                "journal line {}: job {} {:?} -> {} while at {:?}",
                n + 1,
                e.job,
                e.from,
                e.to,
                current
            )));
        }
        jobs.insert(e.job, e.to);
        entries += 1;
    }
    Ok(JournalSummary { entries, jobs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges() {
        use JobState::*;
        let allowed: Vec<(JobState, JobState)> = JobState::ALL
            .iter()
            .flat_map(|a| JobState::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_move_to(*b))
            .collect();
        let mut expected = vec![
            (Received, Preprocessed),
            (Preprocessed, Extracted),
            (Extracted, Validated),
            (Validated, Exported),
            (Validated, NeedsReview),
            (Validated, RejectedDuplicate),
            (NeedsReview, Exported),
        ];
        expected.extend(JobState::ALL.iter().filter(|s| **s != Failed).map(|s| (*s, Failed)));
        let sort = |v: &mut Vec<(JobState, JobState)>| v.sort_by_key(|(a, b)| (a.as_str(), b.as_str()));
        let mut allowed = allowed;
        sort(&mut allowed);
        sort(&mut expected);
        assert_eq!(allowed, expected);
    }

    #[test]
    fn state_names_round_trip() {
        for s in JobState::ALL {
            assert_eq!(s.as_str().parse::<JobState>().unwrap(), s);
            assert_eq!(serde_json::to_value(s).unwrap(), s.as_str());
        }
    }

    #[test]
    fn illegal_move_is_refused_and_not_stored() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let job = store.submit("a.pdf", b"abc").unwrap();
        let err = store
            .update(job.id, |r, _| r.move_to(JobState::Exported, Utc::now()))
            .unwrap_err();
        assert!(matches!(err, StoreError::IllegalTransition { .. }));
        assert_eq!(store.get(job.id).unwrap().state, JobState::Received);
        let summary = replay_journal(dir.path()).unwrap();
        assert_eq!(summary.entries, 1);
    }

    #[test]
    fn records_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let store = Store::open(dir.path()).unwrap();
            let job = store.submit("a.pdf", b"abc").unwrap();
            store
                .update(job.id, |r, _| r.move_to(JobState::Preprocessed, Utc::now()))
                .unwrap();
            job.id
        };
        let store = Store::open(dir.path()).unwrap();
        let r = store.get(id).unwrap();
        assert_eq!(r.state, JobState::Preprocessed);
        assert_eq!(r.revision, 2);
        assert_eq!(store.unsettled(), vec![id]);
        assert_eq!(store.raw(&r.raw_hash).unwrap(), b"abc");
    }

    #[test]
    fn journal_replay_catches_a_bad_edge() {
        let dir = tempfile::tempdir().unwrap();
        let id = Uuid::new_v4();
        let lines = [
            JournalEntry { job: id, from: None, to: JobState::Received, at: Utc::now() },
            JournalEntry { job: id, from: Some(JobState::Received), to: JobState::Exported, at: Utc::now() },
        ];
        let text: String = lines.iter().map(|l| serde_json::to_string(l).unwrap() + "\n").collect();
        fs::write(dir.path().join("transitions.log"), text).unwrap();
        assert!(replay_journal(dir.path()).is_err());
    }

    #[test]
    fn dedup_file_round_trips() {
        let mut idx = DedupIndex::default();
        idx.insert("aa", Some("bb"));
        idx.insert("cc", None);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dedup.idx");
        write_atomic(&p, dedup_text(&idx).as_bytes()).unwrap();
        assert_eq!(read_dedup(&p).unwrap(), idx);
    }
}
