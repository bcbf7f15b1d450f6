//! Staged generation sessions with human review gates.
//!
//! A prototype session runs concept map → gate G1 → question/answer
//! candidates → gate G2 → fan-out to every item writer → gate G3. Series
//! sessions start from an accepted prototype and go straight to G3; one-step
//! sessions produce drafts without gates. No dispatch for a stage happens
//! before the preceding gate is closed; [`PipelineSession::timeline`]
//! records the order.

mod artifacts;
mod audit;
mod engine;
mod store;

pub use artifacts::{concept_nodes, find_concept, find_qa, parse_qa_candidates, top_level_nodes, ConceptNode, NodeMatch, QaCandidate};
pub use audit::AuditBundle;
pub use engine::{OneStepOutcome, Pipeline, PipelineConfig};
pub use store::{SessionStore, StoreError, WriteGuard};

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::item_model::{ItemId, McqItem, ParseReport, SessionId, TranscriptId};
use crate::prompts::TemplateError;
use crate::providers::ProviderError;
use crate::quality::{CriterionVerdict, Evaluator};

pub const MAX_ADJUSTMENT_PROMPTS: u32 = 4;
pub const MAX_MANUAL_WORDS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    TextbookFragment,
    LearningObjective,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationInput {
    pub kind: InputKind,
    pub body: String,
    #[serde(default)]
    pub topic: String,
    pub discipline: String,
    pub education_level: String,
    #[serde(default)]
    pub speciality: String,
    #[serde(default = "one")]
    pub requested_items: u32,
}

fn one() -> u32 {
    1
}

impl GenerationInput {
    pub fn learning_objective(body: &str, discipline: &str, education_level: &str) -> Self {
        GenerationInput {
            kind: InputKind::LearningObjective,
            body: body.to_string(),
            topic: String::new(),
            discipline: discipline.to_string(),
            education_level: education_level.to_string(),
            speciality: String::new(),
            requested_items: 1,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.body.trim().is_empty() {
            return Err(PipelineError::Validation("input body is empty".into()));
        }
        if self.requested_items == 0 {
            return Err(PipelineError::Validation("requested_items must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Prototype,
    SeriesExampleBased,
    SeriesConceptDerived,
    OneStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeriesMode {
    #[serde(rename = "example_based")]
    ExampleBased,
    #[serde(rename = "concept_derived")]
    ConceptDerived,
}

impl SeriesMode {
    pub fn session_mode(self) -> SessionMode {
        match self {
            SeriesMode::ExampleBased => SessionMode::SeriesExampleBased,
            SeriesMode::ConceptDerived => SessionMode::SeriesConceptDerived,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gate {
    #[serde(rename = "G1_concept_map")]
    G1ConceptMap,
    #[serde(rename = "G2_question_answer")]
    G2QuestionAnswer,
    #[serde(rename = "G3_item")]
    G3Item,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "awaiting_concept_map")]
    AwaitingConceptMap,
    #[serde(rename = "gate_G1")]
    GateG1,
    #[serde(rename = "awaiting_questions")]
    AwaitingQuestions,
    #[serde(rename = "gate_G2")]
    GateG2,
    #[serde(rename = "awaiting_items")]
    AwaitingItems,
    #[serde(rename = "gate_G3")]
    GateG3,
    #[serde(rename = "completed")]
    Completed,
    #[serde(rename = "rejected")]
    Rejected,
    #[serde(rename = "failed")]
    Failed,
}

impl Stage {
    pub fn gate(self) -> Option<Gate> {
        match self {
            Stage::GateG1 => Some(Gate::G1ConceptMap),
            Stage::GateG2 => Some(Gate::G2QuestionAnswer),
            Stage::GateG3 => Some(Gate::G3Item),
            _ => None,
        }
    }

    pub fn is_awaiting(self) -> bool {
        matches!(self, Stage::AwaitingConceptMap | Stage::AwaitingQuestions | Stage::AwaitingItems)
    }

    pub fn is_closed(self) -> bool {
        matches!(self, Stage::Completed | Stage::Rejected)
    }

    /// Stage sequence for a mode, excluding the failed and rejected exits.
    pub fn order(mode: SessionMode) -> &'static [Stage] {
        match mode {
            SessionMode::Prototype => &[
                Stage::AwaitingConceptMap,
                Stage::GateG1,
                Stage::AwaitingQuestions,
                Stage::GateG2,
                Stage::AwaitingItems,
                Stage::GateG3,
                Stage::Completed,
            ],
            SessionMode::SeriesExampleBased | SessionMode::SeriesConceptDerived => {
                &[Stage::AwaitingItems, Stage::GateG3, Stage::Completed]
            }
            SessionMode::OneStep => &[Stage::AwaitingItems, Stage::Completed],
        }
    }
}

/// A candidate chosen at G1 (concept node) or G2 (question/answer).
/// Numbers are 1-based, matching the numbering the reviewer sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selection {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum GateAction {
    Approve,
    Edit { text: String },
    Select { selection: Selection },
    Reject {
        #[serde(default)]
        reason: Option<String>,
    },
}

impl GateAction {
    pub fn name(&self) -> &'static str {
        match self {
            GateAction::Approve => "approve",
            GateAction::Edit { .. } => "edit",
            GateAction::Select { .. } => "select",
            GateAction::Reject { .. } => "reject",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub gate: Gate,
    #[serde(flatten)]
    pub action: GateAction,
    pub reviewer: String,
    /// The candidate item a G3 decision applies to. Without a target, G3
    /// approve and reject apply to every pending item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<ItemId>,
    #[serde(default = "Utc::now")]
    pub timestamp: DateTime<Utc>,
}

impl GateDecision {
    pub fn new(gate: Gate, action: GateAction, reviewer: &str) -> Self {
        GateDecision { gate, action, reviewer: reviewer.to_string(), target: None, timestamp: Utc::now() }
    }

    pub fn select(gate: Gate, selection: Selection, reviewer: &str) -> Self {
        Self::new(gate, GateAction::Select { selection }, reviewer)
    }

    pub fn for_item(mut self, item: ItemId) -> Self {
        self.target = Some(item);
        self
    }

    /// Whether the decision closes its gate (or, at G3, its item).
    pub fn is_closing(&self) -> bool {
        !(self.gate == Gate::G1ConceptMap && matches!(self.action, GateAction::Edit { .. }))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetCounter {
    pub adjustment_prompts_used: u32,
    pub manual_words_edited: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageText {
    pub text: String,
    #[serde(default)]
    pub transcript_id: Option<TranscriptId>,
    /// Set when the reviewer replaced the generated text.
    #[serde(default)]
    pub edited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CandidateOutcome {
    Parsed { item_id: ItemId },
    Unparsed { report: ParseReport },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub role: String,
    pub transcript_id: TranscriptId,
    pub raw: String,
    #[serde(flatten)]
    pub outcome: CandidateOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    #[serde(default)]
    pub concept_map: Option<StageText>,
    #[serde(default)]
    pub selected_concept: Option<String>,
    #[serde(default)]
    pub qa_response: Option<StageText>,
    #[serde(default)]
    pub qa_candidates: Vec<QaCandidate>,
    #[serde(default)]
    pub selected_qa: Option<StageText>,
    #[serde(default)]
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum SessionInput {
    Generation(GenerationInput),
    Prototype { item: Box<McqItem> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    /// The stage that will be retried on resume.
    pub stage: Stage,
    pub error: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TimelineEvent {
    Dispatch { seq: u64, stage: Stage, role: String, transcript_id: TranscriptId },
    Gate { seq: u64, gate: Gate, decision: usize },
}

impl TimelineEvent {
    pub fn seq(&self) -> u64 {
        match self {
            TimelineEvent::Dispatch { seq, .. } | TimelineEvent::Gate { seq, .. } => *seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSession {
    pub id: SessionId,
    pub mode: SessionMode,
    pub input: SessionInput,
    pub stage: Stage,
    #[serde(default)]
    pub failure: Option<Failure>,
    pub artifacts: Artifacts,
    /// Candidate items keyed by id, in generation order.
    pub items: IndexMap<ItemId, McqItem>,
    pub gate_log: Vec<GateDecision>,
    pub budgets: IndexMap<ItemId, BudgetCounter>,
    #[serde(default)]
    pub verdicts: BTreeMap<ItemId, Vec<CriterionVerdict>>,
    pub timeline: Vec<TimelineEvent>,
    pub transcript_ids: Vec<TranscriptId>,
    /// Items requested from a series or one-step run.
    #[serde(default)]
    pub requested: u32,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl PipelineSession {
    fn new(mode: SessionMode, input: SessionInput, stage: Stage, requested: u32) -> Self {
        let now = Utc::now();
        PipelineSession {
            id: SessionId::generate(),
            mode,
            input,
            stage,
            failure: None,
            artifacts: Artifacts::default(),
            items: IndexMap::new(),
            gate_log: Vec::new(),
            budgets: IndexMap::new(),
            verdicts: BTreeMap::new(),
            timeline: Vec::new(),
            transcript_ids: Vec::new(),
            requested,
            created_at: now,
            updated_at: now,
        }
    }

    pub fn pending_gate(&self) -> Option<Gate> {
        self.stage.gate()
    }

    pub fn generation_input(&self) -> Option<&GenerationInput> {
        match &self.input {
            SessionInput::Generation(g) => Some(g),
            SessionInput::Prototype { .. } => None,
        }
    }

    pub fn prototype(&self) -> Option<&McqItem> {
        match &self.input {
            SessionInput::Prototype { item } => Some(item),
            SessionInput::Generation(_) => None,
        }
    }

    pub fn item(&self, id: &ItemId) -> Option<&McqItem> {
        self.items.get(id)
    }

    pub fn budget(&self, id: &ItemId) -> BudgetCounter {
        self.budgets.get(id).copied().unwrap_or_default()
    }

    pub fn pending_items(&self) -> Vec<ItemId> {
        self.items
            .values()
            .filter(|i| i.status == crate::item_model::ItemStatus::UnderReview)
            .map(|i| i.id.clone())
            .collect()
    }

    fn next_seq(&self) -> u64 {
        self.timeline.last().map_or(0, |e| e.seq() + 1)
    }

    fn record_dispatch(&mut self, stage: Stage, role: &str, transcript_id: &TranscriptId) {
        let seq = self.next_seq();
        self.timeline.push(TimelineEvent::Dispatch {
            seq,
            stage,
            role: role.to_string(),
            transcript_id: transcript_id.clone(),
        });
        self.transcript_ids.push(transcript_id.clone());
    }

    /// Stores verdicts for an item. Evaluator transcripts they cite join the
    /// session timeline so the audit bundle accounts for them.
    pub fn record_verdicts(&mut self, item: &ItemId, verdicts: &[CriterionVerdict]) {
        let mut seen = Vec::new();
        for v in verdicts {
            if let (Some(tid), Evaluator::Automated { role }) = (&v.transcript_id, &v.evaluator) {
                if !seen.contains(tid) && !self.transcript_ids.contains(tid) {
                    seen.push(tid.clone());
                    self.record_dispatch(self.stage, role, tid);
                }
            }
        }
        self.verdicts.entry(item.clone()).or_default().extend_from_slice(verdicts);
        self.updated_at = Utc::now();
    }

    fn record_gate(&mut self, decision: GateDecision) {
        let seq = self.next_seq();
        self.timeline.push(TimelineEvent::Gate { seq, gate: decision.gate, decision: self.gate_log.len() });
        self.gate_log.push(decision);
    }

    /// Checks that every dispatch after the first stage is preceded by a
    /// closing decision at the gate before it.
    pub fn ordering_violations(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut closed: Vec<Gate> = Vec::new();
        for event in &self.timeline {
            match event {
                TimelineEvent::Gate { gate, decision, .. } => {
                    if self.gate_log.get(*decision).is_some_and(GateDecision::is_closing) {
                        closed.push(*gate);
                    }
                }
                TimelineEvent::Dispatch { stage, seq, .. } => {
                    let needs = match (self.mode, stage) {
                        (SessionMode::Prototype, Stage::AwaitingQuestions) => Some(Gate::G1ConceptMap),
                        (SessionMode::Prototype, Stage::AwaitingItems) => Some(Gate::G2QuestionAnswer),
                        (_, Stage::GateG3) => None,
                        _ => None,
                    };
                    if let Some(g) = needs {
                        if !closed.contains(&g) {
                            problems.push(format!("dispatch #{seq} for {stage:?} before {g:?} closed"));
                        }
                    }
                }
            }
        }
        problems
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Validation(String),
    #[error("decision for {got:?} but the session is waiting at {expected:?}")]
    WrongGate { expected: Option<Gate>, got: Gate },
    #[error("session is {0:?} and accepts no further decisions")]
    SessionClosed(Stage),
    #[error("{action} is not valid at {gate:?}")]
    InvalidAction { gate: Gate, action: &'static str },
    #[error("selection {index} is out of range (1-{available})")]
    SelectionOutOfRange { index: usize, available: usize },
    #[error("nothing matches `{0}`")]
    SelectionNotFound(String),
    #[error("`{label}` matches several entries: {matches:?}")]
    AmbiguousSelection { label: String, matches: Vec<String> },
    #[error("approve needs an unambiguous choice; {0} candidates are available, select one")]
    SelectionRequired(usize),
    #[error("this decision needs a target item")]
    TargetRequired,
    #[error("item {0} is not in this session")]
    UnknownItem(ItemId),
    #[error("item {0} is not under review")]
    NotUnderReview(ItemId),
    #[error("item {item} has used all {cap} adjustment prompts")]
    AdjustmentBudgetExhausted { item: ItemId, cap: u32 },
    #[error("item {item} has used {used} of {cap} editable words; this edit changes {requested}")]
    ManualBudgetExceeded { item: ItemId, used: u32, requested: u32, cap: u32 },
    #[error("edited text does not parse: {0}")]
    EditUnparseable(ParseReport),
    #[error("revised item does not parse: {0}")]
    RevisionUnparseable(ParseReport),
    #[error("prototype must be accepted before a series is generated")]
    PrototypeNotAccepted,
    #[error("session is not failed; nothing to resume")]
    NotResumable,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}
