//! Bundled reference material: the photosynthesis prototype walk-through,
//! the herd-immunity series with its contextual feature sets, and the
//! word lists used by the lexical checks. The mock backend serves these as
//! its builtin fixtures.

use std::collections::BTreeMap;

use crate::item_model::{parse_mcq, McqBody, DEFAULT_OPTION_COUNT};
use crate::prompts::Templates;
use crate::providers::{Fixture, Role};
use crate::similarity;

pub const LEARNING_OBJECTIVE: &str = "Compare and contrast photosynthesis and cellular respiration in terms of reactants, products, energy flow, organelles involved, and ecological roles";
pub const PHOTOSYNTHESIS_LEVEL: &str = "upper secondary school";
pub const PHOTOSYNTHESIS_DISCIPLINE: &str = "biology";

pub const CONCEPT_MAP: &str = include_str!("../fixtures/photosynthesis/concept_map.txt");
pub const QUESTIONS: &str = include_str!("../fixtures/photosynthesis/questions.txt");
pub const FINAL_ITEMS: [&str; 4] = [
    include_str!("../fixtures/photosynthesis/item_writer_1.txt"),
    include_str!("../fixtures/photosynthesis/item_writer_2.txt"),
    include_str!("../fixtures/photosynthesis/item_writer_3.txt"),
    include_str!("../fixtures/photosynthesis/item_writer_4.txt"),
];

pub const HERD_CONCEPT: &str = "Herd immunity";
pub const HERD_SERIES: &str = include_str!("../fixtures/herd_immunity/series.txt");
pub const HERD_CONTEXTUAL_FEATURES: &str = include_str!("../fixtures/herd_immunity/contextual_features.json");
pub const REPORTED_CONTEXTUAL: &str = include_str!("../fixtures/herd_immunity/reported_contextual.csv");
pub const REPORTED_LINGUISTIC: &str = include_str!("../fixtures/herd_immunity/reported_linguistic.csv");

pub const STOPWORDS: &str = include_str!("../data/stopwords.txt");
pub const GENERAL_TERMS: &str = include_str!("../data/general_terms.txt");

pub fn word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn final_items() -> Vec<McqBody> {
    FINAL_ITEMS
        .iter()
        .map(|raw| parse_mcq(raw, DEFAULT_OPTION_COUNT).expect("bundled item parses"))
        .collect()
}

/// Raw text blocks of the herd-immunity series, in order, without numbers.
pub fn herd_blocks() -> Vec<String> {
    HERD_SERIES
        .split("\n\n")
        .map(str::trim)
        .filter(|b| !b.is_empty())
        .map(|b| {
            let (_, rest) = b.split_once(". ").expect("numbered block");
            rest.to_string()
        })
        .collect()
}

pub fn herd_items() -> Vec<McqBody> {
    herd_blocks()
        .iter()
        .map(|raw| parse_mcq(raw, DEFAULT_OPTION_COUNT).expect("bundled item parses"))
        .collect()
}

/// Herd-immunity items `first..=last` (1-based) renumbered from 1, the shape
/// of a series response.
pub fn herd_series_response(first: usize, last: usize) -> String {
    herd_blocks()[first - 1..last]
        .iter()
        .enumerate()
        .map(|(i, b)| format!("{}. {b}", i + 1))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Item labels `MCQ1`..`MCQ10` mapped to their contextual feature lists.
pub fn herd_features() -> BTreeMap<String, Vec<String>> {
    serde_json::from_str(HERD_CONTEXTUAL_FEATURES).expect("bundled features parse")
}

/// Feature lists in item order.
pub fn herd_feature_lists() -> Vec<Vec<String>> {
    let mut map = herd_features();
    (1..=map.len())
        .map(|i| map.remove(&format!("MCQ{i}")).expect("contiguous labels"))
        .collect()
}

fn all_pass_block() -> String {
    (1..=9)
        .map(|n| format!("C{n}: PASS - The item satisfies this criterion."))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fixtures the builtin mock serves for `role`.
pub fn builtin_fixtures(role: &Role) -> Vec<Fixture> {
    match role {
        Role::ConceptMapper => vec![
            Fixture::new("Compile the concepts related to the learning objective", CONCEPT_MAP),
            Fixture::new("Compile the concepts related to the attached fragment", CONCEPT_MAP),
        ],
        Role::QuestionWriter => vec![Fixture::new("Use the concept", QUESTIONS)],
        Role::ItemWriter(n) => {
            let mut fixtures = vec![
                Fixture::new("Generate ", herd_series_response(2, 6)),
                Fixture::new("Use this MCQ as a prototype", herd_series_response(6, 10)),
                Fixture::new("Write ", herd_series_response(1, 5)),
            ];
            if let Some(item) = FINAL_ITEMS.get(*n as usize - 1) {
                fixtures.push(Fixture::new("Present the Question", *item));
                fixtures.push(Fixture::new("Check the MCQ below against", *item));
            }
            fixtures
        }
        Role::Evaluator => vec![
            Fixture::new("Check whether the MCQ below meets", all_pass_block()),
            Fixture::new(
                "In the MCQs below, what are the main concepts of MCQ1?",
                "Herd immunity: vaccinating a large share of a population limits transmission and indirectly protects those who are not immune.",
            ),
            Fixture::new(
                "Do MCQs 2-",
                (2..=10).map(|k| format!("MCQ{k}: YES")).collect::<Vec<_>>().join("\n"),
            ),
        ],
        Role::FeatureExtractor => {
            let templates = Templates::bundled();
            herd_items()
                .iter()
                .zip(herd_feature_lists())
                .map(|(item, features)| {
                    let prompt = similarity::feature_prompt(&templates, HERD_CONCEPT, item)
                        .expect("bundled template renders");
                    let bullets = features.iter().map(|f| format!("• {f}")).collect::<Vec<_>>().join("\n");
                    Fixture::hashed(&prompt, bullets)
                })
                .collect()
        }
    }
}
