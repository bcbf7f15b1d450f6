/// Whitespace-delimited tokens; hyphenated compounds stay one word.
pub fn tokenize_words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Word-level Levenshtein distance (case-sensitive), counting insertions,
/// deletions and substitutions of whole tokens.
pub fn word_edit_distance(before: &str, after: &str) -> usize {
    let a = tokenize_words(before);
    let b = tokenize_words(after);
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, wa) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, wb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(wa != wb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts() {
        assert_eq!(word_edit_distance("a b c", "a  b\nc"), 0);
    }

    #[test]
    fn single_substitution() {
        assert_eq!(
            word_edit_distance("herd immunity limits spread", "herd protection limits spread"),
            1
        );
    }

    #[test]
    fn empty_side_counts_other() {
        assert_eq!(word_edit_distance("", "one two three"), 3);
        assert_eq!(word_edit_distance("one two", "   "), 2);
    }

    #[test]
    fn case_sensitive_and_hyphen_is_one_word() {
        assert_eq!(word_edit_distance("Herd", "herd"), 1);
        assert_eq!(word_count("root-associated microbes"), 2);
    }
}
