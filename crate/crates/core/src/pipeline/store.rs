use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use tokio::sync::{Mutex, OwnedMutexGuard};

use super::PipelineSession;
use crate::item_model::{ItemId, SessionId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown session {0}")]
    NotFound(SessionId),
    #[error("session {0} is being modified by another request")]
    Conflict(SessionId),
    #[error("session store i/o: {0}")]
    Io(String),
}

struct Entry {
    writer: Arc<Mutex<()>>,
    state: Arc<RwLock<PipelineSession>>,
}

/// Sessions with one writer at a time each. Readers always see the last
/// published state, including intermediate stages while a dispatch runs.
#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<SessionId, Entry>>,
    dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Persists every published state as `<dir>/<session id>.json` and
    /// loads existing files.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|e| StoreError::Io(e.to_string()))?;
        let store = SessionStore { sessions: RwLock::default(), dir: Some(dir.to_path_buf()) };
        let entries = std::fs::read_dir(dir).map_err(|e| StoreError::Io(e.to_string()))?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path).map_err(|e| StoreError::Io(e.to_string()))?;
                let session: PipelineSession = serde_json::from_str(&text)
                    .map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
                store.insert_entry(session);
            }
        }
        Ok(store)
    }

    fn insert_entry(&self, session: PipelineSession) {
        let id = session.id.clone();
        let entry = Entry { writer: Arc::new(Mutex::new(())), state: Arc::new(RwLock::new(session)) };
        self.sessions.write().unwrap().insert(id, entry);
    }

    pub fn insert(&self, session: PipelineSession) -> Result<(), StoreError> {
        persist(self.dir.as_deref(), &session)?;
        self.insert_entry(session);
        Ok(())
    }

    pub fn get(&self, id: &SessionId) -> Option<PipelineSession> {
        let map = self.sessions.read().unwrap();
        map.get(id).map(|e| e.state.read().unwrap().clone())
    }

    pub fn ids(&self) -> Vec<SessionId> {
        let mut ids: Vec<_> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort_by(|a, b| a.as_str().cmp(b.as_str()));
        ids
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The session holding `item`, if any.
    pub fn find_item(&self, item: &ItemId) -> Option<SessionId> {
        let map = self.sessions.read().unwrap();
        map.iter().find(|(_, e)| e.state.read().unwrap().items.contains_key(item)).map(|(id, _)| id.clone())
    }

    /// Takes the single writer slot. A second writer gets `Conflict`
    /// instead of waiting.
    pub fn write(&self, id: &SessionId) -> Result<WriteGuard, StoreError> {
        let map = self.sessions.read().unwrap();
        let entry = map.get(id).ok_or_else(|| StoreError::NotFound(id.clone()))?;
        let lock = entry.writer.clone().try_lock_owned().map_err(|_| StoreError::Conflict(id.clone()))?;
        let session = entry.state.read().unwrap().clone();
        Ok(WriteGuard { _lock: lock, state: entry.state.clone(), dir: self.dir.clone(), session })
    }
}

/// A working copy of a session. Changes become visible on `publish`.
pub struct WriteGuard {
    _lock: OwnedMutexGuard<()>,
    state: Arc<RwLock<PipelineSession>>,
    dir: Option<PathBuf>,
    pub session: PipelineSession,
}

impl WriteGuard {
    pub fn publish(&self) -> Result<(), StoreError> {
        persist(self.dir.as_deref(), &self.session)?;
        *self.state.write().unwrap() = self.session.clone();
        Ok(())
    }
}

fn persist(dir: Option<&Path>, session: &PipelineSession) -> Result<(), StoreError> {
    let Some(dir) = dir else { return Ok(()) };
    let text = serde_json::to_string_pretty(session).map_err(|e| StoreError::Io(e.to_string()))?;
    let path = dir.join(format!("{}.json", session.id));
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).and_then(|_| std::fs::rename(&tmp, &path)).map_err(|e| StoreError::Io(e.to_string()))
}
