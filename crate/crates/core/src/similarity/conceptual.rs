use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SimilarityError;
use crate::item_model::{render_mcq_unkeyed, ItemId, McqBody, SessionId, TranscriptId};
use crate::prompts::{TemplateName, Templates, Vars};
use crate::providers::{ProviderHub, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub item_id: ItemId,
    pub same_concept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptualMatchReport {
    pub prototype_id: ItemId,
    pub candidates: Vec<CandidateMatch>,
    /// Share of the pool (prototype included) judged to test the same concept.
    pub percentage: f64,
    #[serde(default)]
    pub main_concepts: String,
    #[serde(default)]
    pub transcript_ids: Vec<TranscriptId>,
}

impl ConceptualMatchReport {
    pub fn from_judgments(prototype_id: ItemId, candidates: Vec<CandidateMatch>) -> Result<Self, SimilarityError> {
        if candidates.is_empty() {
            return Err(SimilarityError::NoCandidates);
        }
        let matches = candidates.iter().filter(|c| c.same_concept).count();
        Ok(ConceptualMatchReport {
            prototype_id,
            percentage: 100.0 * (matches + 1) as f64 / (candidates.len() + 1) as f64,
            candidates,
            main_concepts: String::new(),
            transcript_ids: Vec::new(),
        })
    }

    pub fn judgment(&self, item: &ItemId) -> Option<bool> {
        self.candidates.iter().find(|c| &c.item_id == item).map(|c| c.same_concept)
    }
}

static JUDGMENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)MCQ\s*(\d+)\W{0,6}?\b(YES|NO)\b").unwrap());

/// Reads "MCQ<k>: YES|NO" answers for k in 2..=candidates+1. Every
/// candidate needs exactly one consistent answer.
pub fn parse_match_judgments(response: &str, candidates: usize) -> Result<Vec<bool>, SimilarityError> {
    let mut answers: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    for caps in JUDGMENT.captures_iter(response) {
        let k: usize = caps[1].parse().unwrap_or(0);
        answers.entry(k).or_default().push(caps[2].eq_ignore_ascii_case("yes"));
    }
    (2..=candidates + 1)
        .map(|k| match answers.get(&k).map(Vec::as_slice) {
            Some([first, rest @ ..]) if rest.iter().all(|v| v == first) => Ok(*first),
            _ => Err(SimilarityError::UnparseableJudgment(k)),
        })
        .collect()
}

fn items_block(prototype: &McqBody, candidates: &[(ItemId, McqBody)]) -> String {
    let mut out = format!("MCQ1 (prototype):\n{}", render_mcq_unkeyed(prototype));
    for (i, (_, body)) in candidates.iter().enumerate() {
        out.push_str(&format!("\n\nMCQ{}:\n{}", i + 2, render_mcq_unkeyed(body)));
    }
    out
}

/// Two dispatches: ask for the prototype's main concepts, then whether
/// each candidate targets them.
pub async fn conceptual_match(
    hub: &ProviderHub,
    templates: &Templates,
    prototype_id: &ItemId,
    prototype: &McqBody,
    candidates: &[(ItemId, McqBody)],
    role: &Role,
    session: Option<&SessionId>,
) -> Result<ConceptualMatchReport, SimilarityError> {
    if candidates.is_empty() {
        return Err(SimilarityError::NoCandidates);
    }
    let block = items_block(prototype, candidates);
    let first = templates.render(TemplateName::ConceptsMain, &Vars::new().set("items_block", block.clone()))?;
    let main = hub.dispatch_for(session, role, &first, None).await?;
    let second = templates.render(
        TemplateName::ConceptsSame,
        &Vars::new()
            .set("last_index", (candidates.len() + 1).to_string())
            .set("main_concepts", main.response.trim())
            .set("items_block", block),
    )?;
    let judged = hub.dispatch_for(session, role, &second, None).await?;
    let flags = parse_match_judgments(&judged.response, candidates.len())?;
    let mut report = ConceptualMatchReport::from_judgments(
        prototype_id.clone(),
        candidates
            .iter()
            .zip(flags)
            .map(|((id, _), same_concept)| CandidateMatch { item_id: id.clone(), same_concept })
            .collect(),
    )?;
    report.main_concepts = main.response.trim().to_string();
    report.transcript_ids = vec![main.entry.id, judged.entry.id];
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(flags: &[bool]) -> Vec<CandidateMatch> {
        flags
            .iter()
            .enumerate()
            .map(|(i, f)| CandidateMatch { item_id: ItemId(format!("c{i}")), same_concept: *f })
            .collect()
    }

    #[test]
    fn percentage_counts_prototype() {
        let all = ConceptualMatchReport::from_judgments(ItemId::from("p"), cands(&[true; 9])).unwrap();
        assert_eq!(all.percentage, 100.0);
        let mut flags = [true; 9];
        flags[4] = false;
        let most = ConceptualMatchReport::from_judgments(ItemId::from("p"), cands(&flags)).unwrap();
        assert_eq!(most.percentage, 90.0);
        assert_eq!(
            ConceptualMatchReport::from_judgments(ItemId::from("p"), vec![]),
            Err(SimilarityError::NoCandidates)
        );
    }

    #[test]
    fn judgments_parse() {
        let text = "MCQ2: YES\n**MCQ3** - No, it tests antibiotics.\nMCQ 4: yes";
        assert_eq!(parse_match_judgments(text, 3).unwrap(), vec![true, false, true]);
        assert_eq!(parse_match_judgments(text, 4), Err(SimilarityError::UnparseableJudgment(5)));
        assert_eq!(
            parse_match_judgments("MCQ2: YES\nMCQ2: NO", 1),
            Err(SimilarityError::UnparseableJudgment(2))
        );
    }
}
