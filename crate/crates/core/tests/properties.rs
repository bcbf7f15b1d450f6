mod common;

use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;

use itemsmith_core::agreement::{build_contingency, cohen_kappa, Band, ContingencyTable};
use itemsmith_core::item_model::{parse_mcq, render_mcq, word_edit_distance, ItemId, McqBody};
use itemsmith_core::similarity::{
    originality_overlap, tversky_score, FeatureKind, FeatureSet, ShingleIndex, TverskyParams,
    ORIGINALITY_THRESHOLD,
};

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,9}"
}

fn words(min: usize, max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), min..=max).prop_map(|w| w.join(" "))
}

fn capitalized(s: String) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => s,
    }
}

fn body() -> impl Strategy<Value = McqBody> {
    (
        prop::collection::vec(words(3, 12), 3..=5),
        words(3, 10),
        prop::collection::hash_set(words(1, 7), 5).prop_map(|o| o.into_iter().collect::<Vec<_>>()),
        0usize..5,
        prop::option::of(words(2, 15)),
    )
        .prop_map(|(sentences, q, options, correct_index, explanation)| McqBody {
            stem: sentences.into_iter().map(|s| format!("{}.", capitalized(s))).collect::<Vec<_>>().join(" "),
            question: format!("{}?", capitalized(q)),
            options,
            correct_index,
            explanation: explanation.map(|e| format!("{}.", capitalized(e))),
        })
}

/// Top-down recursion over token slices, memoized on suffix lengths.
fn edit_oracle(a: &[&str], b: &[&str], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let d = if a[0] == b[0] {
        edit_oracle(&a[1..], &b[1..], memo)
    } else {
        1 + edit_oracle(&a[1..], b, memo).min(edit_oracle(a, &b[1..], memo)).min(edit_oracle(&a[1..], &b[1..], memo))
    };
    memo.insert((a.len(), b.len()), d);
    d
}

fn tokens() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "A", "x-y", "dd"]), 0..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parse_inverts_render(b in body()) {
        prop_assert_eq!(parse_mcq(&render_mcq(&b), 5), Ok(b));
    }

    #[test]
    fn edit_distance_matches_oracle(a in tokens(), b in tokens()) {
        let (ta, tb) = (a.join(" "), b.join(" "));
        let va: Vec<&str> = a.iter().map(String::as_str).collect();
        let vb: Vec<&str> = b.iter().map(String::as_str).collect();
        prop_assert_eq!(word_edit_distance(&ta, &tb), edit_oracle(&va, &vb, &mut HashMap::new()));
    }

    #[test]
    fn edit_distance_is_a_metric(a in tokens(), b in tokens(), c in tokens()) {
        let (a, b, c) = (a.join(" "), b.join(" "), c.join(" "));
        let d = word_edit_distance;
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &b) == 0, a.split_whitespace().eq(b.split_whitespace()));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }

    #[test]
    fn kappa_laws(a in 0u64..60, b in 0u64..60, c in 0u64..60, d in 0u64..60) {
        let t = ContingencyTable::new(a, b, c, d);
        if let Ok(r) = cohen_kappa(&t) {
            prop_assert!(r.kappa <= 1.0 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.p_o) && (0.0..=1.0).contains(&r.p_e));
            prop_assert_eq!(r.band, Band::of(r.kappa));
            let swapped = cohen_kappa(&t.transposed()).unwrap();
            prop_assert!((swapped.kappa - r.kappa).abs() < 1e-12);
            if b == 0 && c == 0 {
                prop_assert!((r.kappa - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contingency_counts_pairs(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80)) {
        let human: BTreeMap<usize, bool> = pairs.iter().enumerate().map(|(i, p)| (i, p.0)).collect();
        let machine: BTreeMap<usize, bool> = pairs.iter().enumerate().map(|(i, p)| (i, p.1)).collect();
        let t = build_contingency(&human, &machine).unwrap();
        prop_assert_eq!(t.n() as usize, pairs.len());
        prop_assert_eq!(t.a as usize, pairs.iter().filter(|p| p.0 && p.1).count());
        prop_assert_eq!(t.b as usize, pairs.iter().filter(|p| p.0 && !p.1).count());
    }
}

#[test]
fn tversky_laws_over_random_pairs() {
    common::laws::tversky_laws(10_000, 2024).unwrap();
}

#[test]
fn tversky_rejects_mixed_kinds_and_bad_params() {
    let a = FeatureSet::contextual(ItemId("a".into()), ["x", "y"]);
    let mut b = FeatureSet::contextual(ItemId("b".into()), ["y"]);
    b.kind = FeatureKind::Linguistic;
    assert!(tversky_score(&a, &b, &TverskyParams::default()).is_err());
    let nan = TverskyParams { theta: f64::NAN, ..Default::default() };
    assert!(tversky_score(&a, &a, &nan).is_err());
}

/// A text of `total + k - 1` distinct words and a corpus document holding
/// exactly the first `matched` of its shingles.
fn constructed(total: usize, matched: usize, k: usize) -> (String, ShingleIndex) {
    let words: Vec<String> = (0..total + k - 1).map(|i| format!("w{i}")).collect();
    let text = words.join(" ");
    let doc = if matched == 0 { "unrelated filler words only here".to_string() } else { words[..matched + k - 1].join(" ") };
    (text, ShingleIndex::from_documents(k, [doc]))
}

#[test]
fn originality_percentages_are_exact() {
    for (total, matched) in [(10, 0), (10, 1), (40, 3), (7, 7), (250, 25), (1000, 333)] {
        let (text, idx) = constructed(total, matched, 5);
        let r = originality_overlap(&text, &idx).unwrap();
        assert_eq!((r.matched, r.total), (matched, total));
        assert_eq!(r.percentage, 100.0 * matched as f64 / total as f64);
    }
}

#[test]
fn originality_threshold_is_strict() {
    assert_eq!(ORIGINALITY_THRESHOLD, 10.0);
    let (text, idx) = constructed(1000, 100, 5);
    let r = originality_overlap(&text, &idx).unwrap();
    assert_eq!((r.percentage, r.passes), (10.0, false));
    let (text, idx) = constructed(10_000, 999, 5);
    let r = originality_overlap(&text, &idx).unwrap();
    assert_eq!((r.percentage, r.passes), (9.99, true));
}

#[test]
fn originality_grows_with_the_corpus() {
    let words: Vec<String> = (0..60).map(|i| format!("t{i}")).collect();
    let text = words.join(" ");
    let mut idx = ShingleIndex::new(4);
    let mut last = originality_overlap(&text, &idx).unwrap().percentage;
    for start in (0..60).step_by(7) {
        idx.add(&words[start..(start + 9).min(60)].join(" "));
        let now = originality_overlap(&text, &idx).unwrap().percentage;
        assert!(now >= last);
        last = now;
    }
    assert!(last > 0.0);
}
