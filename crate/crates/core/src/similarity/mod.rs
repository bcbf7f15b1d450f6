//! Tversky feature-model similarity over contextual and linguistic feature
//! sets, pairwise matrices with CSV export, evaluator-judged conceptual
//! matching, and shingle-based originality screening.

mod conceptual;
mod features;
mod matrix;
mod originality;

pub use conceptual::{conceptual_match, parse_match_judgments, CandidateMatch, ConceptualMatchReport};
pub use features::{extract_contextual_features, feature_prompt, parse_feature_bullets, FeatureStore};
pub use matrix::{pairwise_matrix, parse_reported_grid, ErrataCell, ErrataReport, MatrixSummary, PairStats, ReportedGrid, SimilarityMatrix};
pub use originality::{originality_overlap, OriginalityResult, ShingleIndex, DEFAULT_SHINGLE_SIZE, ORIGINALITY_THRESHOLD};

use std::collections::{BTreeSet, HashSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::item_model::{ItemId, McqBody};
use crate::prompts::TemplateError;
use crate::providers::ProviderError;
use crate::quality::text::stem;
use crate::samples;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TverskyParams {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TverskyParams {
    fn default() -> Self {
        TverskyParams { theta: 1.0, alpha: 0.5, beta: 0.5 }
    }
}

impl TverskyParams {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if [self.theta, self.alpha, self.beta].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SimilarityError::InvalidParams)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Linguistic,
    Contextual,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimilarityError {
    #[error("cannot compare {0:?} features with {1:?} features")]
    KindMismatch(FeatureKind, FeatureKind),
    #[error("Tversky parameters must be finite")]
    InvalidParams,
    #[error("text yields no features")]
    EmptyFeatures,
    #[error("a matrix needs at least two items")]
    TooFewItems,
    #[error("no {kind:?} feature set for item {item}")]
    MissingFeatureSet { item: ItemId, kind: FeatureKind },
    #[error("feature list could not be read from the response")]
    UnparseableFeatures,
    #[error("conceptual match needs at least one candidate")]
    NoCandidates,
    #[error("conceptual judgment missing or ambiguous for MCQ{0}")]
    UnparseableJudgment(usize),
    #[error("text has {words} words, fewer than the shingle size {k}")]
    TooShort { words: usize, k: usize },
    #[error("reported grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub item_id: ItemId,
    pub kind: FeatureKind,
    pub features: BTreeSet<String>,
}

/// Lowercase and collapse internal whitespace. Idempotent.
pub fn normalize_feature(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl FeatureSet {
    pub fn contextual<S: AsRef<str>>(item_id: ItemId, features: impl IntoIterator<Item = S>) -> Self {
        FeatureSet {
            item_id,
            kind: FeatureKind::Contextual,
            features: features
                .into_iter()
                .map(|f| normalize_feature(f.as_ref()))
                .filter(|f| !f.is_empty())
                .collect(),
        }
    }

    pub fn linguistic(item_id: ItemId, text: &str, policy: &TokenPolicy) -> Result<Self, SimilarityError> {
        Ok(FeatureSet { item_id, kind: FeatureKind::Linguistic, features: tokenize_linguistic(text, policy)? })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Linguistic tokenization switches. Defaults keep stopwords, skip
/// stemming, include the options and leave out the explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenPolicy {
    pub keep_stopwords: bool,
    pub stem: bool,
    pub include_options: bool,
    pub include_explanation: bool,
}

impl Default for TokenPolicy {
    fn default() -> Self {
        TokenPolicy { keep_stopwords: true, stem: false, include_options: true, include_explanation: false }
    }
}

static STOPWORDS: LazyLock<HashSet<String>> =
    LazyLock::new(|| samples::word_list(samples::STOPWORDS).into_iter().collect());

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\'' || c == '’'
}

/// Lowercased word sequence with punctuation removed. Hyphens and
/// apostrophes survive only inside a word.
pub fn word_sequence(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !is_word_char(c))
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(|w| w.replace('’', "'"))
        .collect()
}

pub fn tokenize_linguistic(text: &str, policy: &TokenPolicy) -> Result<BTreeSet<String>, SimilarityError> {
    let tokens: BTreeSet<String> = word_sequence(text)
        .into_iter()
        .filter(|w| policy.keep_stopwords || !STOPWORDS.contains(w))
        .map(|w| if policy.stem { stem(&w) } else { w })
        .collect();
    if tokens.is_empty() {
        Err(SimilarityError::EmptyFeatures)
    } else {
        Ok(tokens)
    }
}

/// The text of an item that linguistic comparison sees under `policy`.
pub fn comparison_text(item: &McqBody, policy: &TokenPolicy) -> String {
    let mut parts = vec![item.stem.clone(), item.question.clone()];
    if policy.include_options {
        parts.extend(item.options.iter().cloned());
    }
    if policy.include_explanation {
        parts.extend(item.explanation.iter().cloned());
    }
    parts.join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub shared: usize,
    pub only_a: usize,
    pub only_b: usize,
}

pub fn overlap(a: &FeatureSet, b: &FeatureSet) -> Overlap {
    let shared = a.features.intersection(&b.features).count();
    Overlap { shared, only_a: a.len() - shared, only_b: b.len() - shared }
}

/// S(A, B) = θ·|A∩B| − α·|A∖B| − β·|B∖A|. Negative values read as
/// "perceived as different".
pub fn tversky_score(a: &FeatureSet, b: &FeatureSet, params: &TverskyParams) -> Result<f64, SimilarityError> {
    if a.kind != b.kind {
        return Err(SimilarityError::KindMismatch(a.kind, b.kind));
    }
    params.validate()?;
    let o = overlap(a, b);
    // Penalties are summed first so that alpha == beta gives a bit-exact symmetric score.
    Ok(params.theta * o.shared as f64 - (params.alpha * o.only_a as f64 + params.beta * o.only_b as f64))
}
