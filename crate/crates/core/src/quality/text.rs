//! Sentence counting, content-term extraction and the suffix stemmer used
//! by the deterministic checks.

use std::collections::HashSet;

/// Splits on '.', '!' or '?' followed by whitespace or end of text.
/// Abbreviations are not special-cased.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            let boundary = match iter.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if boundary {
                push_sentence(&mut out, &text[start..end]);
                start = end;
            }
        }
    }
    push_sentence(&mut out, &text[start..]);
    out
}

fn push_sentence<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if s.chars().any(char::is_alphanumeric) {
        out.push(s);
    }
}

pub fn sentence_count(text: &str) -> usize {
    sentences(text).len()
}

/// Conservative plural and verb-suffix stripping.
pub fn stem(word: &str) -> String {
    let w = word;
    let n = w.chars().count();
    if n > 4 && w.ends_with("ies") {
        return format!("{}y", &w[..w.len() - 3]);
    }
    if w.ends_with("sses") {
        return w[..w.len() - 2].to_string();
    }
    if n > 4 && ["ches", "shes", "xes", "zes"].iter().any(|s| w.ends_with(s)) {
        return w[..w.len() - 2].to_string();
    }
    if n > 3 && w.ends_with('s') && !["ss", "us", "is"].iter().any(|s| w.ends_with(s)) {
        return w[..w.len() - 1].to_string();
    }
    if n > 5 && w.ends_with("ing") {
        return w[..w.len() - 3].to_string();
    }
    if n > 4 && w.ends_with("ed") {
        return w[..w.len() - 2].to_string();
    }
    w.to_string()
}

/// Two stems share a root when equal, or when their common prefix covers
/// at least five characters and three quarters of the longer stem.
pub fn same_root(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    let common = a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count();
    let longer = a.chars().count().max(b.chars().count());
    common >= 5 && common * 4 >= longer * 3
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub surface: String,
    pub stem: String,
}

/// Lowercased alphanumeric runs outside the excluded word sets, stemmed.
pub fn content_terms(text: &str, excluded: &HashSet<String>) -> Vec<Term> {
    let lower = text.to_lowercase();
    let mut seen = HashSet::new();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !excluded.contains(*w))
        .filter(|w| !w.chars().all(|c| c.is_numeric()))
        .filter(|w| seen.insert(w.to_string()))
        .map(|w| Term { surface: w.to_string(), stem: stem(w) })
        .filter(|t| !excluded.contains(&t.stem))
        .collect()
}
