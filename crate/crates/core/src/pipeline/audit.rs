use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{PipelineSession, TimelineEvent};
use crate::providers::{TranscriptEntry, TranscriptLog};

/// Everything needed to reconstruct where a session's items came from:
/// the session (gate log, items with edits and prior versions, verdicts)
/// and every transcript it produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditBundle {
    pub session: PipelineSession,
    pub transcripts: Vec<TranscriptEntry>,
    pub generated_at: DateTime<Utc>,
}

impl AuditBundle {
    pub fn build(session: &PipelineSession, log: &TranscriptLog) -> Self {
        AuditBundle { session: session.clone(), transcripts: log.for_session(&session.id), generated_at: Utc::now() }
    }

    pub fn dispatch_count(&self) -> usize {
        self.session.timeline.iter().filter(|e| matches!(e, TimelineEvent::Dispatch { .. })).count()
    }

    /// Item provenance that points at transcripts missing from the bundle.
    pub fn dangling_references(&self) -> Vec<String> {
        let known: std::collections::HashSet<_> = self.transcripts.iter().map(|t| &t.id).collect();
        let mut missing = Vec::new();
        for item in self.session.items.values() {
            for id in &item.provenance.prompt_ids {
                if !known.contains(id) {
                    missing.push(format!("{}: {}", item.id, id));
                }
            }
        }
        missing
    }
}
