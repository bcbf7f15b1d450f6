//! Reading the concept map and question/answer stage outputs.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// One line of a concept map, with list markers removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptNode {
    /// As shown in the map, numbering kept ("6. Ecological Roles").
    pub text: String,
    /// Numbering removed, for matching ("Ecological Roles").
    pub label: String,
    pub depth: usize,
    pub top_level: bool,
}

static NUMBERING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+[.)]\s*").unwrap());

const MARKERS: &[char] = &['•', '●', '○', '◦', '▪', '▫', '■', '□', '‣', '-', '*', '+'];

pub fn concept_nodes(map: &str) -> Vec<ConceptNode> {
    map.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let indent = line.chars().take_while(|c| c.is_whitespace()).count();
            let text = line.trim().trim_start_matches(MARKERS).trim().to_string();
            let numbered = NUMBERING.is_match(&text);
            let label = NUMBERING.replace(&text, "").trim().to_string();
            ConceptNode { depth: indent, top_level: numbered && indent == 0, text, label }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeMatch {
    Found(ConceptNode),
    NotFound,
    Ambiguous(Vec<String>),
}

/// Exact label match (case-insensitive) first, then a unique substring match.
pub fn find_concept(map: &str, wanted: &str) -> NodeMatch {
    let nodes = concept_nodes(map);
    let w = wanted.trim().to_lowercase();
    let w_label = NUMBERING.replace(&w, "").to_string();
    let exact: Vec<_> = nodes
        .iter()
        .filter(|n| n.label.to_lowercase() == w_label || n.text.to_lowercase() == w)
        .collect();
    let pool = if exact.is_empty() {
        nodes.iter().filter(|n| n.label.to_lowercase().contains(&w_label)).collect()
    } else {
        exact
    };
    match pool.as_slice() {
        [] => NodeMatch::NotFound,
        [one] => NodeMatch::Found((*one).clone()),
        many => {
            // Repeated sub-nodes under different parents are one concept only
            // if a top-level node is among them.
            let tops: Vec<_> = many.iter().filter(|n| n.top_level).collect();
            if tops.len() == 1 {
                NodeMatch::Found((*tops[0]).clone())
            } else {
                NodeMatch::Ambiguous(many.iter().map(|n| n.text.clone()).collect())
            }
        }
    }
}

pub fn top_level_nodes(map: &str) -> Vec<ConceptNode> {
    concept_nodes(map).into_iter().filter(|n| n.top_level).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaCandidate {
    /// 1-based, as numbered in the response.
    pub number: usize,
    pub question: String,
    pub answer: Option<String>,
    /// The block as it appeared, used verbatim in the next prompt.
    pub raw: String,
}

static QA_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s*#]*Question\s+(\d+)\s*[:.)]\**\s*").unwrap());
static ANSWER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\**Answer\**\s*:\**\s*").unwrap());

/// Splits a response into "Question N: ... Answer: ..." blocks. A response
/// without such headers is a single candidate.
pub fn parse_qa_candidates(response: &str) -> Vec<QaCandidate> {
    let heads: Vec<_> = QA_HEADER.captures_iter(response).collect();
    if heads.is_empty() {
        let text = response.trim();
        if text.is_empty() {
            return Vec::new();
        }
        return vec![qa_block(1, text, text)];
    }
    heads
        .iter()
        .enumerate()
        .map(|(i, caps)| {
            let whole = caps.get(0).unwrap();
            let end = heads.get(i + 1).map_or(response.len(), |n| n.get(0).unwrap().start());
            let raw = response[whole.start()..end].trim();
            let body = response[whole.end()..end].trim();
            let number = caps[1].parse().unwrap_or(i + 1);
            qa_block(number, raw, body)
        })
        .collect()
}

fn qa_block(number: usize, raw: &str, body: &str) -> QaCandidate {
    match ANSWER.find(body) {
        Some(m) => QaCandidate {
            number,
            question: body[..m.start()].trim().to_string(),
            answer: Some(body[m.end()..].trim().to_string()),
            raw: raw.to_string(),
        },
        None => QaCandidate { number, question: body.to_string(), answer: None, raw: raw.to_string() },
    }
}

fn clean_answer(a: &str) -> String {
    a.trim().trim_end_matches('.').trim().to_lowercase()
}

/// By "Question N" or by answer text.
pub fn find_qa<'a>(candidates: &'a [QaCandidate], wanted: &str) -> Option<&'a QaCandidate> {
    static QN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^question\s+(\d+)$").unwrap());
    let w = wanted.trim();
    if let Some(c) = QN.captures(w) {
        let n: usize = c[1].parse().ok()?;
        return candidates.iter().find(|q| q.number == n);
    }
    let w = clean_answer(w);
    let mut hits = candidates.iter().filter(|q| q.answer.as_deref().map(clean_answer).as_deref() == Some(w.as_str()));
    match (hits.next(), hits.next()) {
        (Some(one), None) => Some(one),
        _ => None,
    }
}
