use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use itemsmith_core::item_model::{ItemId, ItemStatus, TranscriptId};
use itemsmith_core::pipeline::{
    BudgetCounter, CandidateOutcome, Failure, Gate, GateDecision, PipelineSession, SessionMode, Stage,
};
use itemsmith_core::quality::{aggregate, deterministic_verdicts, Lexicon, Policy, QualityError};

/// What the review client sees of a session. Built from the session alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSessionView {
    pub id: String,
    pub mode: SessionMode,
    pub stage: Stage,
    pub pending_gate: Option<Gate>,
    /// Actions the gate endpoint accepts right now.
    pub allowed_actions: Vec<String>,
    pub failure: Option<Failure>,
    pub artifacts: ArtifactsView,
    pub items: Vec<ItemView>,
    pub gate_log: Vec<GateDecision>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArtifactsView {
    pub concept_map: Option<String>,
    pub concept_map_edited: bool,
    pub top_level_concepts: Vec<String>,
    pub selected_concept: Option<String>,
    pub qa_candidates: Vec<String>,
    pub selected_qa: Option<String>,
    pub unparsed_candidates: Vec<UnparsedView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnparsedView {
    pub role: String,
    pub transcript_id: TranscriptId,
    pub raw: String,
    pub problem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub id: ItemId,
    pub text: String,
    pub status: ItemStatus,
    pub source_role: String,
    pub budget: BudgetCounter,
    pub edits: usize,
    /// "acceptable", failed ids such as "4,8,9", or null until every
    /// criterion has a verdict.
    pub quality: Option<String>,
    pub quality_missing: Vec<String>,
}

fn allowed(stage: Stage) -> Vec<String> {
    let names: &[&str] = match stage {
        Stage::GateG1 | Stage::GateG2 => &["approve", "edit", "select", "reject"],
        Stage::GateG3 => &["approve", "edit", "reject"],
        _ => &[],
    };
    names.iter().map(|s| s.to_string()).collect()
}

impl ApiSessionView {
    pub fn of(s: &PipelineSession, lexicon: &Lexicon, policy: Policy) -> Self {
        let a = &s.artifacts;
        let map = a.concept_map.as_ref();
        ApiSessionView {
            id: s.id.to_string(),
            mode: s.mode,
            stage: s.stage,
            pending_gate: s.pending_gate(),
            allowed_actions: allowed(s.stage),
            failure: s.failure.clone(),
            artifacts: ArtifactsView {
                concept_map: map.map(|m| m.text.clone()),
                concept_map_edited: map.is_some_and(|m| m.edited),
                top_level_concepts: map
                    .map(|m| itemsmith_core::pipeline::top_level_nodes(&m.text).into_iter().map(|n| n.label).collect())
                    .unwrap_or_default(),
                selected_concept: a.selected_concept.clone(),
                qa_candidates: a.qa_candidates.iter().map(|q| q.raw.clone()).collect(),
                selected_qa: a.selected_qa.as_ref().map(|q| q.text.clone()),
                unparsed_candidates: a
                    .candidates
                    .iter()
                    .filter_map(|c| match &c.outcome {
                        CandidateOutcome::Unparsed { report } => Some(UnparsedView {
                            role: c.role.clone(),
                            transcript_id: c.transcript_id.clone(),
                            raw: c.raw.clone(),
                            problem: report.to_string(),
                        }),
                        CandidateOutcome::Parsed { .. } => None,
                    })
                    .collect(),
            },
            items: s
                .items
                .values()
                .map(|item| {
                    let mut verdicts = deterministic_verdicts(&item.body, lexicon);
                    if let Some(v) = s.verdicts.get(&item.id) {
                        verdicts.extend(v.iter().cloned());
                    }
                    let (quality, quality_missing) = match aggregate(&item.id, &verdicts, policy) {
                        Ok(r) => (Some(r.compact()), Vec::new()),
                        Err(QualityError::MissingCoverage(m)) => (None, m),
                        Err(_) => (None, Vec::new()),
                    };
                    ItemView {
                        id: item.id.clone(),
                        text: item.render(),
                        status: item.status,
                        source_role: item.provenance.source_role.clone(),
                        budget: s.budget(&item.id),
                        edits: item.provenance.edits.len(),
                        quality,
                        quality_missing,
                    }
                })
                .collect(),
            gate_log: s.gate_log.clone(),
            created_at: s.created_at,
            updated_at: s.updated_at,
        }
    }
}
