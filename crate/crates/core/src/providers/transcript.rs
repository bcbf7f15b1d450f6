use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::item_model::{SessionId, TranscriptId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub id: TranscriptId,
    #[serde(default)]
    pub session_id: Option<SessionId>,
    pub role: String,
    pub backend: String,
    pub prompt: String,
    #[serde(default)]
    pub context: Option<String>,
    pub response: String,
    pub latency_ms: u64,
    pub timestamp: DateTime<Utc>,
    pub retry_count: u32,
}

/// Append-only record of every completed dispatch. Writes are serialized;
/// an optional line-delimited JSON sink mirrors each entry to disk.
#[derive(Default)]
pub struct TranscriptLog {
    entries: Mutex<Vec<TranscriptEntry>>,
    sink: Option<Mutex<BufWriter<File>>>,
}

impl TranscriptLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends to `path`, starting from the entries already recorded there.
    /// Unreadable trailing lines (a crash mid-write) are skipped.
    pub fn with_file(path: &Path) -> std::io::Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e),
        };
        let existing = text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect();
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if !text.is_empty() && !text.ends_with('\n') {
            file.write_all(b"\n")?;
        }
        Ok(TranscriptLog {
            entries: Mutex::new(existing),
            sink: Some(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn append(&self, entry: TranscriptEntry) {
        let mut entries = self.entries.lock().unwrap();
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().unwrap();
            let line = serde_json::to_string(&entry).expect("transcript serializes");
            if let Err(err) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                tracing::warn!(%err, "failed to persist transcript entry");
            }
        }
        entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn get(&self, id: &TranscriptId) -> Option<TranscriptEntry> {
        self.entries.lock().unwrap().iter().find(|e| &e.id == id).cloned()
    }

    pub fn for_session(&self, session: &SessionId) -> Vec<TranscriptEntry> {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.session_id.as_ref() == Some(session))
            .cloned()
            .collect()
    }
}

pub fn read_transcript_lines(text: &str) -> Result<Vec<TranscriptEntry>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
