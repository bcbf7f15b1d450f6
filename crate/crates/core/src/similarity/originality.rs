use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{word_sequence, SimilarityError};

pub const DEFAULT_SHINGLE_SIZE: usize = 5;
/// Overlap must stay strictly below this percentage.
pub const ORIGINALITY_THRESHOLD: f64 = 10.0;

/// Word k-shingles of a document corpus.
#[derive(Debug, Clone)]
pub struct ShingleIndex {
    k: usize,
    shingles: HashSet<String>,
    documents: usize,
}

fn shingles(words: &[String], k: usize) -> impl Iterator<Item = String> + '_ {
    words.windows(k).map(|w| w.join(" "))
}

impl ShingleIndex {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "shingle size must be positive");
        ShingleIndex { k, shingles: HashSet::new(), documents: 0 }
    }

    pub fn from_documents<S: AsRef<str>>(k: usize, docs: impl IntoIterator<Item = S>) -> Self {
        let mut index = Self::new(k);
        for d in docs {
            index.add(d.as_ref());
        }
        index
    }

    pub fn add(&mut self, document: &str) {
        let words = word_sequence(document);
        self.shingles.extend(shingles(&words, self.k));
        self.documents += 1;
    }

    pub fn shingle_size(&self) -> usize {
        self.k
    }

    pub fn documents(&self) -> usize {
        self.documents
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginalityResult {
    pub matched: usize,
    pub total: usize,
    pub percentage: f64,
    pub passes: bool,
}

/// Percentage of the text's positional shingles found anywhere in the corpus.
pub fn originality_overlap(text: &str, corpus: &ShingleIndex) -> Result<OriginalityResult, SimilarityError> {
    let words = word_sequence(text);
    let k = corpus.k;
    if words.len() < k {
        return Err(SimilarityError::TooShort { words: words.len(), k });
    }
    let total = words.len() - k + 1;
    let matched = shingles(&words, k).filter(|s| corpus.shingles.contains(s)).count();
    let percentage = 100.0 * matched as f64 / total as f64;
    Ok(OriginalityResult { matched, total, percentage, passes: percentage < ORIGINALITY_THRESHOLD })
}
