use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::McqBody;

static LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(?([A-Z])[\)\.:]").unwrap());
static CORRECT_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\s*\(\s*correct(?:\s+answer)?\s*\)").unwrap());
static EXPLANATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:^|\s)explanation\s*:").unwrap());
static ITEM_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?m)^[ \t]*(?:\*\*)?(?:(?:MCQ|Question|Item)[ \t]*)?(\d{1,2})(?:[ \t]*\([^)\n]*\))?[ \t]*[\.\):][ \t]*(?:\*\*)?[ \t]*",
    )
    .unwrap()
});

/// A structural element that could not be recovered from raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ParseIssue {
    MissingOptionLabels,
    OptionCount { expected: usize, found: usize },
    CorrectMarker { found: usize },
    NoInterrogative,
    StemMissing,
    EmptyOption { label: char },
    DuplicateOption { first: char, second: char },
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseIssue::MissingOptionLabels => write!(f, "no option labels (A), A. or A:) found"),
            ParseIssue::OptionCount { expected, found } => {
                write!(f, "expected {expected} options, found {found}")
            }
            ParseIssue::CorrectMarker { found } => {
                write!(f, "expected exactly one (correct) marker, found {found}")
            }
            ParseIssue::NoInterrogative => write!(f, "no interrogative sentence before the options"),
            ParseIssue::StemMissing => write!(f, "stem missing"),
            ParseIssue::EmptyOption { label } => write!(f, "option {label} is empty"),
            ParseIssue::DuplicateOption { first, second } => {
                write!(f, "options {first} and {second} are identical")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub issues: Vec<ParseIssue>,
}

impl ParseReport {
    pub fn has(&self, issue: &ParseIssue) -> bool {
        self.issues.contains(issue)
    }
}

impl fmt::Display for ParseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        write!(f, "unparseable item: {}", parts.join("; "))
    }
}

impl std::error::Error for ParseReport {}

#[derive(Debug, Clone, Copy)]
struct Label {
    letter: usize,
    start: usize,
    end: usize,
}

fn label_candidates(text: &str) -> Vec<Label> {
    let bytes = text.as_bytes();
    LABEL
        .captures_iter(text)
        .filter_map(|caps| {
            let whole = caps.get(0).unwrap();
            let preceded_ok = whole.start() == 0
                || text[..whole.start()]
                    .chars()
                    .next_back()
                    .is_some_and(char::is_whitespace);
            let followed_ok =
                whole.end() == bytes.len() || text[whole.end()..].starts_with(char::is_whitespace);
            if !(preceded_ok && followed_ok) {
                return None;
            }
            let letter = (caps[1].as_bytes()[0] - b'A') as usize;
            let rest = &text[whole.end()..];
            let end = whole.end() + (rest.len() - rest.trim_start().len());
            Some(Label { letter, start: whole.start(), end })
        })
        .collect()
}

fn chain_from(labels: &[Label], first: usize) -> Vec<Label> {
    let mut chain = vec![labels[first]];
    for label in &labels[first + 1..] {
        let last = chain.last().unwrap();
        if label.letter == last.letter + 1 && label.start >= last.end {
            chain.push(*label);
        }
    }
    chain
}

/// Picks the option list: the last "A" label that starts a complete
/// chain, else the longest chain found.
fn option_chain(text: &str, expected: usize) -> Option<Vec<Label>> {
    let labels = label_candidates(text);
    let mut best: Option<Vec<Label>> = None;
    for (i, label) in labels.iter().enumerate().rev() {
        if label.letter != 0 {
            continue;
        }
        let chain = chain_from(&labels, i);
        if chain.len() == expected {
            return Some(chain);
        }
        if best.as_ref().is_none_or(|b| chain.len() > b.len()) {
            best = Some(chain);
        }
    }
    best
}

fn is_boundary(text: &str, idx: usize) -> bool {
    // idx points at a terminator; a boundary needs whitespace after it
    text[idx + 1..].starts_with(char::is_whitespace)
}

/// Byte offset at which the sentence containing `pos` starts.
fn sentence_start(text: &str, pos: usize) -> usize {
    for (i, c) in text[..pos].char_indices().rev() {
        if c == '\n' {
            return i + 1;
        }
        if matches!(c, '.' | '!' | '?') && is_boundary(text, i) {
            return i + 1;
        }
    }
    0
}

/// Splits raw provider text into a structured item.
pub fn parse_mcq(raw: &str, expected_options: usize) -> Result<McqBody, ParseReport> {
    let text = raw.trim();
    let mut issues = Vec::new();

    let Some(chain) = option_chain(text, expected_options) else {
        issues.push(ParseIssue::MissingOptionLabels);
        let pre_issues = split_question(text).err().unwrap_or_default();
        issues.extend(pre_issues);
        return Err(ParseReport { issues });
    };
    if chain.len() != expected_options {
        issues.push(ParseIssue::OptionCount { expected: expected_options, found: chain.len() });
    }

    let pre = &text[..chain[0].start];
    let mut segments: Vec<&str> = chain
        .windows(2)
        .map(|w| &text[w[0].end..w[1].start])
        .collect();
    let tail = &text[chain.last().unwrap().end..];
    let (last_option, explanation) = match EXPLANATION.find(tail) {
        Some(m) => {
            let expl = tail[m.end()..].trim();
            (&tail[..m.start()], (!expl.is_empty()).then(|| expl.to_string()))
        }
        None => (tail, None),
    };
    segments.push(last_option);

    let mut options = Vec::with_capacity(segments.len());
    let mut keyed = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let seg = seg.trim();
        let markers = CORRECT_MARKER.find_iter(seg).count();
        let cleaned = if markers > 0 {
            keyed.push(i);
            CORRECT_MARKER.replace_all(seg, "").trim().to_string()
        } else {
            seg.to_string()
        };
        if cleaned.is_empty() {
            issues.push(ParseIssue::EmptyOption { label: super::option_label(i) });
        }
        options.push(cleaned);
    }
    if keyed.len() != 1 {
        issues.push(ParseIssue::CorrectMarker { found: keyed.len() });
    }
    for i in 0..options.len() {
        for j in i + 1..options.len() {
            if !options[i].is_empty() && options[i] == options[j] {
                issues.push(ParseIssue::DuplicateOption {
                    first: super::option_label(i),
                    second: super::option_label(j),
                });
            }
        }
    }

    let split = split_question(pre);
    if let Err(pre_issues) = &split {
        issues.extend(pre_issues.iter().cloned());
    }

    if !issues.is_empty() {
        return Err(ParseReport { issues });
    }
    let (stem, question) = split.unwrap();
    Ok(McqBody {
        stem,
        question,
        options,
        correct_index: keyed[0],
        explanation,
    })
}

fn split_question(pre: &str) -> Result<(String, String), Vec<ParseIssue>> {
    let pre = pre.trim();
    let Some(q) = pre.rfind('?') else {
        let mut issues = vec![ParseIssue::NoInterrogative];
        if pre.is_empty() {
            issues.push(ParseIssue::StemMissing);
        }
        return Err(issues);
    };
    let start = sentence_start(pre, q);
    let stem = pre[..start].trim();
    let question = pre[start..].trim();
    if stem.is_empty() {
        return Err(vec![ParseIssue::StemMissing]);
    }
    Ok((stem.to_string(), question.to_string()))
}

fn has_label_token(text: &str) -> bool {
    !label_candidates(text).is_empty()
}

pub(super) fn is_clean_option(option: &str) -> bool {
    option.trim() == option
        && !option.contains('\n')
        && !has_label_token(option)
        && !CORRECT_MARKER.is_match(option)
        && !EXPLANATION.is_match(option)
}

pub(super) fn is_single_question(question: &str) -> bool {
    let q = question;
    if q.trim() != q || !q.ends_with('?') || q.contains('\n') {
        return false;
    }
    let body = &q[..q.len() - 1];
    sentence_start(q, q.len() - 1) == 0 && !body.contains('?')
}

pub(super) fn is_clean_stem(stem: &str) -> bool {
    stem.trim() == stem && !stem.is_empty()
}

/// Splits a response holding several numbered items ("1.", "MCQ 2:",
/// "3 (prototype).") into per-item texts. Headers must count up from 1; a
/// response without headers is returned whole.
pub fn split_items(response: &str) -> Vec<String> {
    let mut headers = Vec::new();
    let mut expected = 1u32;
    for caps in ITEM_HEADER.captures_iter(response) {
        let n: u32 = caps[1].parse().unwrap_or(0);
        if n == expected {
            let m = caps.get(0).unwrap();
            headers.push((m.start(), m.end()));
            expected += 1;
        }
    }
    if headers.is_empty() {
        let whole = response.trim();
        return if whole.is_empty() { Vec::new() } else { vec![whole.to_string()] };
    }
    headers
        .iter()
        .enumerate()
        .map(|(i, &(_, body_start))| {
            let end = headers.get(i + 1).map_or(response.len(), |h| h.0);
            response[body_start..end].trim().to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}
