//! Nine-criteria quality engine.
//!
//! Criterion 2 and the lexical half of criterion 9 are computed here from
//! the item text. The remaining criteria, and the synonym/paraphrase half
//! of criterion 9, come from an evaluator role or a human reviewer.
//! [`aggregate`] folds all verdicts into an accept/reject decision under an
//! explicit precedence policy; verdicts are never overwritten.

mod criteria;
pub mod text;

pub use criteria::{criteria_block, full_criteria_block, CriterionId, CRITERIA};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::item_model::{option_label, render_mcq, word_count, ItemId, McqBody, McqItem, SessionId, TranscriptId, DEFAULT_OPTION_COUNT};
use crate::prompts::{TemplateError, TemplateName, Templates, Vars};
use crate::providers::{ProviderError, ProviderHub, Role};
use crate::samples;

pub const MIN_STEM_SENTENCES: usize = 3;
pub const MAX_OPTION_WORDS: usize = 7;
pub const UNPARSEABLE_RATIONALE: &str = "evaluator response unparseable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Which part of a criterion a verdict speaks to. Only criterion 9 is split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Whole,
    Lexical,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluator {
    Deterministic,
    Automated { role: String },
    Human { reviewer: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Tier {
    Deterministic,
    Automated,
    Human,
}

impl Evaluator {
    fn tier(&self) -> Tier {
        match self {
            Evaluator::Deterministic => Tier::Deterministic,
            Evaluator::Automated { .. } => Tier::Automated,
            Evaluator::Human { .. } => Tier::Human,
        }
    }
}

/// A machine-located piece of offending text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    /// "stem", "question" or "option B".
    pub location: String,
    pub span: String,
    pub detail: String,
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.span.is_empty() {
            write!(f, "{}: {}", self.location, self.detail)
        } else {
            write!(f, "{} \"{}\": {}", self.location, self.span, self.detail)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub criterion: CriterionId,
    pub aspect: Aspect,
    pub verdict: Verdict,
    pub evaluator: Evaluator,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<Evidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_id: Option<TranscriptId>,
    pub timestamp: DateTime<Utc>,
}

impl CriterionVerdict {
    pub fn human(criterion: CriterionId, verdict: Verdict, reviewer: &str, rationale: &str) -> Self {
        CriterionVerdict {
            criterion,
            aspect: Aspect::Whole,
            verdict,
            evaluator: Evaluator::Human { reviewer: reviewer.to_string() },
            rationale: rationale.to_string(),
            evidence: Vec::new(),
            transcript_id: None,
            timestamp: Utc::now(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Word lists for the lexical check.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub stopwords: HashSet<String>,
    pub general_terms: HashSet<String>,
}

impl Lexicon {
    pub fn bundled() -> Self {
        Lexicon {
            stopwords: samples::word_list(samples::STOPWORDS).into_iter().collect(),
            general_terms: samples::word_list(samples::GENERAL_TERMS).into_iter().collect(),
        }
    }

    pub fn from_lists(stopwords: &str, general_terms: &str) -> Self {
        Lexicon {
            stopwords: samples::word_list(stopwords).into_iter().collect(),
            general_terms: samples::word_list(general_terms).into_iter().collect(),
        }
    }

    fn excluded(&self) -> HashSet<String> {
        self.stopwords.union(&self.general_terms).cloned().collect()
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::bundled()
    }
}

fn deterministic(criterion: u8, aspect: Aspect, evidence: Vec<Evidence>, ok_rationale: &str) -> CriterionVerdict {
    let verdict = if evidence.is_empty() { Verdict::Pass } else { Verdict::Fail };
    let rationale = if evidence.is_empty() {
        ok_rationale.to_string()
    } else {
        evidence.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
    };
    CriterionVerdict {
        criterion: CriterionId::new(criterion).unwrap(),
        aspect,
        verdict,
        evaluator: Evaluator::Deterministic,
        rationale,
        evidence,
        transcript_id: None,
        timestamp: Utc::now(),
    }
}

/// Long stem and short options. Sentences are counted over the stem and the
/// question sentence together, since providers fold the question into the
/// scenario paragraph.
pub fn check_criterion2(item: &McqBody) -> CriterionVerdict {
    let mut evidence = Vec::new();
    let sentences = text::sentence_count(&item.full_stem());
    if sentences < MIN_STEM_SENTENCES {
        evidence.push(Evidence {
            location: "stem".into(),
            span: String::new(),
            detail: format!("{sentences} sentences"),
        });
    }
    if item.options.len() != DEFAULT_OPTION_COUNT {
        evidence.push(Evidence {
            location: "options".into(),
            span: String::new(),
            detail: format!("{} options", item.options.len()),
        });
    }
    for (i, option) in item.options.iter().enumerate() {
        let words = word_count(option);
        if words > MAX_OPTION_WORDS {
            evidence.push(Evidence {
                location: format!("option {}", option_label(i)),
                span: option.clone(),
                detail: format!("{words} words"),
            });
        }
    }
    deterministic(2, Aspect::Whole, evidence, "stem and options within length limits")
}

/// Exact and same-root term sharing between the stem (with question) and
/// the keyed option. A shared term is exempt when a distractor carries it
/// too. Synonyms and paraphrases are left to the semantic evaluator.
pub fn check_criterion9_lexical(item: &McqBody, lexicon: &Lexicon) -> CriterionVerdict {
    let excluded = lexicon.excluded();
    let stem_terms = text::content_terms(&item.full_stem(), &excluded);
    let key_terms = text::content_terms(item.correct_option(), &excluded);
    let distractor_terms: Vec<text::Term> = item
        .distractors()
        .flat_map(|(_, d)| text::content_terms(d, &excluded))
        .collect();

    let mut evidence = Vec::new();
    for term in &key_terms {
        let Some(in_stem) = stem_terms.iter().find(|s| text::same_root(&s.stem, &term.stem)) else {
            continue;
        };
        let exempt = distractor_terms.iter().any(|d| text::same_root(&d.stem, &term.stem));
        if !exempt {
            let detail = if in_stem.surface == term.surface {
                "shared with stem".to_string()
            } else {
                format!("shares a root with stem term \"{}\"", in_stem.surface)
            };
            evidence.push(Evidence {
                location: format!("option {}", option_label(item.correct_index)),
                span: term.surface.clone(),
                detail,
            });
        }
    }
    deterministic(9, Aspect::Lexical, evidence, "no unexempted key term shared with the stem")
}

pub fn deterministic_verdicts(item: &McqBody, lexicon: &Lexicon) -> Vec<CriterionVerdict> {
    vec![check_criterion2(item), check_criterion9_lexical(item, lexicon)]
}

/// Criteria an evaluator is asked about: everything except criterion 2,
/// with criterion 9 meaning its semantic half.
pub fn semantic_criteria() -> Vec<CriterionId> {
    CriterionId::ALL.into_iter().filter(|c| c.get() != 2).collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QualityError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("criterion 2 is checked deterministically, not by an evaluator")]
    DeterministicOnly,
    #[error("no criteria requested")]
    NoCriteria,
    #[error("evaluator response contains no criterion verdicts")]
    Unparseable,
    #[error("no verdict covers criteria {0:?}")]
    MissingCoverage(Vec<String>),
}

static VERDICT_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[ \t*\-#]*(?:C|criterion[ \t]*)(\d)\b[ \t*]*[:.)\-–—]?[ \t*]*(PASS|FAIL)\b[ \t*]*(?:[-–—:][ \t]*)?(.*)$").unwrap()
});

/// Reads "C<n>: PASS|FAIL - rationale" lines for the requested criteria.
/// A requested criterion with no line, or with conflicting lines, becomes a
/// fail. A response with no recognizable line at all is an error.
pub fn parse_evaluator_response(
    response: &str,
    requested: &[CriterionId],
    role: &str,
    transcript_id: Option<TranscriptId>,
) -> Result<Vec<CriterionVerdict>, QualityError> {
    let mut found: BTreeMap<u8, Vec<(Verdict, String)>> = BTreeMap::new();
    for caps in VERDICT_LINE.captures_iter(response) {
        let n: u8 = caps[1].parse().unwrap();
        let verdict = if caps[2].eq_ignore_ascii_case("pass") { Verdict::Pass } else { Verdict::Fail };
        found.entry(n).or_default().push((verdict, caps[3].trim().to_string()));
    }
    if found.is_empty() {
        return Err(QualityError::Unparseable);
    }
    let now = Utc::now();
    Ok(requested
        .iter()
        .map(|&c| {
            let answers = found.get(&c.get());
            let (verdict, rationale) = match answers.map(Vec::as_slice) {
                Some([(v, r)]) => (*v, r.clone()),
                Some(many) if many.iter().all(|(v, _)| *v == many[0].0) => (many[0].0, many[0].1.clone()),
                _ => (Verdict::Fail, UNPARSEABLE_RATIONALE.to_string()),
            };
            CriterionVerdict {
                criterion: c,
                aspect: if c.get() == 9 { Aspect::Semantic } else { Aspect::Whole },
                verdict,
                evaluator: Evaluator::Automated { role: role.to_string() },
                rationale,
                evidence: Vec::new(),
                transcript_id: transcript_id.clone(),
                timestamp: now,
            }
        })
        .collect())
}

pub fn evaluator_prompt(
    templates: &Templates,
    item: &McqBody,
    criteria: &[CriterionId],
) -> Result<String, QualityError> {
    let list = criteria.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
    Ok(templates.render(
        TemplateName::Evaluator,
        &Vars::new()
            .set("criteria_block", criteria_block(criteria))
            .set("item_text", render_mcq(item))
            .set("criterion_list", list),
    )?)
}

/// One dispatch asking `role` to judge `criteria` for `item`.
pub async fn evaluate_semantic_criteria(
    hub: &ProviderHub,
    templates: &Templates,
    item: &McqBody,
    criteria: &[CriterionId],
    role: &Role,
    session: Option<&SessionId>,
) -> Result<Vec<CriterionVerdict>, QualityError> {
    if criteria.is_empty() {
        return Err(QualityError::NoCriteria);
    }
    if criteria.iter().any(|c| c.get() == 2) {
        return Err(QualityError::DeterministicOnly);
    }
    let prompt = evaluator_prompt(templates, item, criteria)?;
    let out = hub.dispatch_for(session, role, &prompt, None).await?;
    parse_evaluator_response(&out.response, criteria, &role.to_string(), Some(out.entry.id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Deterministic verdicts govern where they exist, then human, then automated.
    #[default]
    DeterministicFirst,
    /// Human verdicts govern where they exist, then deterministic, then automated.
    HumanOverrides,
}

impl Policy {
    fn precedence(self) -> [Tier; 3] {
        match self {
            Policy::DeterministicFirst => [Tier::Deterministic, Tier::Human, Tier::Automated],
            Policy::HumanOverrides => [Tier::Human, Tier::Deterministic, Tier::Automated],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub item_id: ItemId,
    pub policy: Policy,
    /// Every verdict considered, from every evaluator, side by side.
    pub verdicts: Vec<CriterionVerdict>,
    pub accepted: bool,
    pub failed_ids: Vec<u8>,
}

impl QualityReport {
    /// "acceptable" or the failed criterion ids, e.g. "4,8,9".
    pub fn compact(&self) -> String {
        if self.accepted {
            "acceptable".to_string()
        } else {
            self.failed_ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
    }
}

fn parts(c: CriterionId) -> &'static [Aspect] {
    if c.get() == 9 {
        &[Aspect::Lexical, Aspect::Semantic]
    } else {
        &[Aspect::Whole]
    }
}

fn covers(v: &CriterionVerdict, c: CriterionId, part: Aspect) -> bool {
    v.criterion == c && (v.aspect == Aspect::Whole || v.aspect == part)
}

/// Accepts iff every criterion passes under `policy`. For each criterion
/// part, the highest-precedence evaluator tier that has a verdict governs;
/// within that tier a single fail is a fail.
pub fn aggregate(item_id: &ItemId, verdicts: &[CriterionVerdict], policy: Policy) -> Result<QualityReport, QualityError> {
    let mut failed = BTreeSet::new();
    let mut missing = Vec::new();
    for c in CriterionId::ALL {
        for &part in parts(c) {
            let governing = policy.precedence().into_iter().find_map(|tier| {
                let in_tier: Vec<_> = verdicts
                    .iter()
                    .filter(|v| v.evaluator.tier() == tier && covers(v, c, part))
                    .collect();
                (!in_tier.is_empty()).then_some(in_tier)
            });
            match governing {
                None => missing.push(match part {
                    Aspect::Whole => c.to_string(),
                    Aspect::Lexical => format!("{c} lexical"),
                    Aspect::Semantic => format!("{c} semantic"),
                }),
                Some(vs) if vs.iter().any(|v| !v.passed()) => {
                    failed.insert(c.get());
                }
                Some(_) => {}
            }
        }
    }
    if !missing.is_empty() {
        return Err(QualityError::MissingCoverage(missing));
    }
    Ok(QualityReport {
        item_id: item_id.clone(),
        policy,
        verdicts: verdicts.to_vec(),
        accepted: failed.is_empty(),
        failed_ids: failed.into_iter().collect(),
    })
}

/// Deterministic checks plus one evaluator pass over the remaining criteria.
pub async fn assess(
    hub: &ProviderHub,
    templates: &Templates,
    lexicon: &Lexicon,
    item: &McqItem,
    evaluator: &Role,
    extra: &[CriterionVerdict],
    policy: Policy,
) -> Result<QualityReport, QualityError> {
    let mut verdicts = deterministic_verdicts(&item.body, lexicon);
    verdicts.extend(
        evaluate_semantic_criteria(
            hub,
            templates,
            &item.body,
            &semantic_criteria(),
            evaluator,
            item.provenance.session_id.as_ref(),
        )
        .await?,
    );
    verdicts.extend_from_slice(extra);
    aggregate(&item.id, &verdicts, policy)
}
