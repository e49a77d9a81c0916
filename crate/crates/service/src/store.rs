//! In-memory session store with an optional JSONL append-log.
//!
//! Each session has a mutex that serializes its writers and a published
//! snapshot that readers clone. Writers work on a copy and swap it in only
//! when the whole turn succeeded, so a reader sees either the state before a
//! turn or the state after it.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use medrag_core::orchestrator::ConsultationSession;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub struct SessionSlot {
    pub(crate) writer: tokio::sync::Mutex<()>,
    snapshot: RwLock<Arc<ConsultationSession>>,
}

impl SessionSlot {
    fn new(session: ConsultationSession) -> Self {
        Self {
            writer: tokio::sync::Mutex::new(()),
            snapshot: RwLock::new(Arc::new(session)),
        }
    }

    pub fn snapshot(&self) -> Arc<ConsultationSession> {
        self.snapshot.read().clone()
    }

    /// Callers must hold `writer`.
    pub(crate) fn publish(&self, session: ConsultationSession) {
        *self.snapshot.write() = Arc::new(session);
    }
}

#[derive(Default)]
pub struct SessionStore {
    slots: RwLock<BTreeMap<String, Arc<SessionSlot>>>,
}

impl SessionStore {
    /// A fresh session under an unguessable 128-bit id.
    pub fn create(&self) -> Arc<SessionSlot> {
        loop {
            let id = format!("{:032x}", rand::random::<u128>());
            let mut slots = self.slots.write();
            if slots.contains_key(&id) {
                continue;
            }
            let slot = Arc::new(SessionSlot::new(ConsultationSession::new(id.clone())));
            slots.insert(id, slot.clone());
            return slot;
        }
    }

    pub fn insert(&self, session: ConsultationSession) {
        self.slots
            .write()
            .insert(session.id.clone(), Arc::new(SessionSlot::new(session)));
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.slots.read().get(id).cloned()
    }

    pub fn snapshots(&self) -> Vec<Arc<ConsultationSession>> {
        self.slots.read().values().map(|s| s.snapshot()).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LogEntry {
    ts_ms: u128,
    session: ConsultationSession,
}

/// Every committed session state, one JSON object per line.
pub struct SessionLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl SessionLog {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, session: &ConsultationSession) -> std::io::Result<()> {
        let entry = LogEntry {
            ts_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or_default(),
            session: session.clone(),
        };
        let mut line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut f = self.file.lock();
        f.write_all(line.as_bytes())?;
        f.flush()
    }

    /// Latest state per session. A torn final line from a crash is skipped.
    pub fn recover(path: impl AsRef<Path>) -> std::io::Result<Vec<ConsultationSession>> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut latest = BTreeMap::new();
        for line in text.lines() {
            if let Ok(entry) = serde_json::from_str::<LogEntry>(line) {
                latest.insert(entry.session.id.clone(), entry.session);
            } else {
                tracing::warn!("skipping unreadable session log line");
            }
        }
        Ok(latest.into_values().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use medrag_core::orchestrator::EvidenceKind;

    #[test]
    fn ids_are_128_bit_hex() {
        let store = SessionStore::default();
        let a = store.create().snapshot().id.clone();
        let b = store.create().snapshot().id.clone();
        assert_eq!(a.len(), 32);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(a, b);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn log_recovers_latest_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/sessions.jsonl");
        let log = SessionLog::open(&path).unwrap();
        let mut s = ConsultationSession::new("s1");
        log.append(&s).unwrap();
        s.add_evidence(EvidenceKind::Utterance, "back pain").unwrap();
        log.append(&s).unwrap();
        log.append(&ConsultationSession::new("s2")).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"ts_ms\": 1, \"sess").unwrap();

        let back = SessionLog::recover(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], s);
        assert!(SessionLog::recover(dir.path().join("none")).unwrap().is_empty());
    }
}
