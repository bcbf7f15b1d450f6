//! Canonical multiple-choice item representation.
//!
//! An item is a stem (scenario text), a single interrogative question
//! sentence, exactly five labeled options with one keyed answer, and an
//! optional explanation. Provider output is normalized through
//! [`parse_mcq`]; [`render_mcq`] emits the canonical text layout, and the
//! two are inverse on every value that passes [`McqBody::validate`].

mod edit;
mod parse;
mod render;

pub use edit::{tokenize_words, word_count, word_edit_distance};
pub use parse::{parse_mcq, split_items, ParseIssue, ParseReport};
pub use render::{option_label, render_mcq, render_mcq_unkeyed};

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

/// Number of answer options every item carries unless configured otherwise.
pub const DEFAULT_OPTION_COUNT: usize = 5;

/// Source role recorded for content written or supplied by a person.
pub const HUMAN_SOURCE: &str = "human";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub String);

impl ItemId {
    pub fn generate() -> Self {
        ItemId(format!("item-{}", Uuid::new_v4().simple()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn generate() -> Self {
        SessionId(format!("session-{}", Uuid::new_v4().simple()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TranscriptId(pub String);

impl TranscriptId {
    pub fn generate() -> Self {
        TranscriptId(format!("tx-{}", Uuid::new_v4().simple()))
    }
}

impl fmt::Display for TranscriptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Draft,
    UnderReview,
    Accepted,
    Rejected,
}

/// The textual content of an item, independent of bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqBody {
    pub stem: String,
    pub question: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    #[serde(default)]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidItem {
    #[error("expected {expected} options, found {found}")]
    OptionCount { expected: usize, found: usize },
    #[error("correct index {0} is out of range")]
    CorrectIndex(usize),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("options {0} and {1} are identical")]
    DuplicateOptions(char, char),
    #[error("question must be a single sentence ending in '?'")]
    Question,
    #[error("{0} contains text that would not survive rendering")]
    Unrenderable(String),
}

impl McqBody {
    pub fn correct_option(&self) -> &str {
        &self.options[self.correct_index]
    }

    pub fn distractors(&self) -> impl Iterator<Item = (usize, &str)> {
        self.options
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.correct_index)
            .map(|(i, o)| (i, o.as_str()))
    }

    /// Stem and question joined by a space; used wherever metrics need the
    /// full scenario text.
    pub fn full_stem(&self) -> String {
        format!("{} {}", self.stem, self.question)
    }

    /// Checks the structural invariants plus the textual constraints that
    /// make `parse_mcq(render_mcq(x)) == x` hold.
    pub fn validate(&self, expected_options: usize) -> Result<(), InvalidItem> {
        if self.options.len() != expected_options {
            return Err(InvalidItem::OptionCount {
                expected: expected_options,
                found: self.options.len(),
            });
        }
        if self.correct_index >= self.options.len() {
            return Err(InvalidItem::CorrectIndex(self.correct_index));
        }
        if self.stem.trim().is_empty() {
            return Err(InvalidItem::Empty("stem"));
        }
        if self.question.trim().is_empty() {
            return Err(InvalidItem::Empty("question"));
        }
        for (i, option) in self.options.iter().enumerate() {
            if option.trim().is_empty() {
                return Err(InvalidItem::Empty("option"));
            }
            if !parse::is_clean_option(option) {
                return Err(InvalidItem::Unrenderable(format!(
                    "option {}",
                    option_label(i)
                )));
            }
            for (j, other) in self.options.iter().enumerate().skip(i + 1) {
                if option == other {
                    return Err(InvalidItem::DuplicateOptions(option_label(i), option_label(j)));
                }
            }
        }
        if !parse::is_single_question(&self.question) {
            return Err(InvalidItem::Question);
        }
        if !parse::is_clean_stem(&self.stem) {
            return Err(InvalidItem::Unrenderable("stem".into()));
        }
        if let Some(explanation) = &self.explanation {
            if explanation.trim().is_empty() || explanation.trim() != explanation {
                return Err(InvalidItem::Unrenderable("explanation".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditKind {
    AdjustmentPrompt,
    ManualEdit { word_delta: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    #[serde(flatten)]
    pub kind: EditKind,
    #[serde(default)]
    pub criterion_targeted: Option<u8>,
    pub timestamp: DateTime<Utc>,
    /// Transcript of the revision prompt, for adjustment prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_id: Option<TranscriptId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub source_role: String,
    #[serde(default)]
    pub session_id: Option<SessionId>,
    #[serde(default)]
    pub prompt_ids: Vec<TranscriptId>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub edits: Vec<EditRecord>,
    /// Rendered text of every superseded version, oldest first.
    #[serde(default)]
    pub prior_versions: Vec<String>,
}

impl ProvenanceRecord {
    pub fn human() -> Self {
        ProvenanceRecord {
            source_role: HUMAN_SOURCE.to_string(),
            session_id: None,
            prompt_ids: Vec::new(),
            created_at: Utc::now(),
            edits: Vec::new(),
            prior_versions: Vec::new(),
        }
    }

    pub fn generated(role: &str, session: &SessionId, prompt_ids: Vec<TranscriptId>) -> Self {
        ProvenanceRecord {
            source_role: role.to_string(),
            session_id: Some(session.clone()),
            prompt_ids,
            created_at: Utc::now(),
            edits: Vec::new(),
            prior_versions: Vec::new(),
        }
    }

    pub fn is_machine_generated(&self) -> bool {
        self.source_role != HUMAN_SOURCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: ItemId,
    #[serde(flatten)]
    pub body: McqBody,
    #[serde(default)]
    pub discipline: String,
    #[serde(default)]
    pub education_level: String,
    #[serde(default)]
    pub topic: String,
    pub provenance: ProvenanceRecord,
    pub status: ItemStatus,
}

impl McqItem {
    pub fn new(body: McqBody, provenance: ProvenanceRecord) -> Self {
        McqItem {
            id: ItemId::generate(),
            body,
            discipline: String::new(),
            education_level: String::new(),
            topic: String::new(),
            provenance,
            status: ItemStatus::Draft,
        }
    }

    pub fn with_context(mut self, discipline: &str, education_level: &str, topic: &str) -> Self {
        self.discipline = discipline.to_string();
        self.education_level = education_level.to_string();
        self.topic = topic.to_string();
        self
    }

    pub fn render(&self) -> String {
        render_mcq(&self.body)
    }

    /// Accepted items must be traceable to where they came from.
    pub fn has_traceable_provenance(&self) -> bool {
        let p = &self.provenance;
        !p.source_role.is_empty()
            && (!p.is_machine_generated() || (p.session_id.is_some() && !p.prompt_ids.is_empty()))
    }
}

/// Reads a line-delimited item store.
pub fn read_item_lines(text: &str) -> Result<Vec<McqItem>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

pub fn write_item_lines<'a>(items: impl IntoIterator<Item = &'a McqItem>) -> String {
    let mut out = String::new();
    for item in items {
        // McqItem contains only string-keyed maps and plain values.
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    out
}
