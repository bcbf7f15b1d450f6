//! Prompt templates with named placeholders.
//!
//! The bundled templates are compiled in; a directory of same-named `.txt`
//! files can override any of them. Substitution is single-pass, so values
//! containing braces are inserted literally.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateName {
    ConceptMapObjective,
    ConceptMapTextbook,
    QuestionAnswer,
    Item,
    SeriesExample,
    SeriesConcept,
    OneStep,
    Adjustment,
    Evaluator,
    Features,
    ConceptsMain,
    ConceptsSame,
}

impl TemplateName {
    pub const ALL: [TemplateName; 12] = [
        TemplateName::ConceptMapObjective,
        TemplateName::ConceptMapTextbook,
        TemplateName::QuestionAnswer,
        TemplateName::Item,
        TemplateName::SeriesExample,
        TemplateName::SeriesConcept,
        TemplateName::OneStep,
        TemplateName::Adjustment,
        TemplateName::Evaluator,
        TemplateName::Features,
        TemplateName::ConceptsMain,
        TemplateName::ConceptsSame,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateName::ConceptMapObjective => "concept_map_objective",
            TemplateName::ConceptMapTextbook => "concept_map_textbook",
            TemplateName::QuestionAnswer => "question_answer",
            TemplateName::Item => "item",
            TemplateName::SeriesExample => "series_example",
            TemplateName::SeriesConcept => "series_concept",
            TemplateName::OneStep => "one_step",
            TemplateName::Adjustment => "adjustment",
            TemplateName::Evaluator => "evaluator",
            TemplateName::Features => "features",
            TemplateName::ConceptsMain => "concepts_main",
            TemplateName::ConceptsSame => "concepts_same",
        }
    }

    fn bundled(self) -> &'static str {
        match self {
            TemplateName::ConceptMapObjective => include_str!("../../templates/concept_map_objective.txt"),
            TemplateName::ConceptMapTextbook => include_str!("../../templates/concept_map_textbook.txt"),
            TemplateName::QuestionAnswer => include_str!("../../templates/question_answer.txt"),
            TemplateName::Item => include_str!("../../templates/item.txt"),
            TemplateName::SeriesExample => include_str!("../../templates/series_example.txt"),
            TemplateName::SeriesConcept => include_str!("../../templates/series_concept.txt"),
            TemplateName::OneStep => include_str!("../../templates/one_step.txt"),
            TemplateName::Adjustment => include_str!("../../templates/adjustment.txt"),
            TemplateName::Evaluator => include_str!("../../templates/evaluator.txt"),
            TemplateName::Features => include_str!("../../templates/features.txt"),
            TemplateName::ConceptsMain => include_str!("../../templates/concepts_main.txt"),
            TemplateName::ConceptsSame => include_str!("../../templates/concepts_same.txt"),
        }
    }
}

pub const PLACEHOLDERS: &[&str] = &[
    "education_level",
    "speciality",
    "discipline",
    "input_body",
    "concept",
    "question_answer",
    "criteria_block",
    "prototype_item",
    "count",
    "item_text",
    "items_block",
    "criterion_list",
    "last_index",
    "main_concepts",
];

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template}` uses unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template `{template}` needs a value for {{{name}}}")]
    MissingValue { template: String, name: String },
    #[error("reading template `{template}`: {message}")]
    Io { template: String, message: String },
}

#[derive(Debug, Clone)]
pub struct Templates {
    texts: BTreeMap<TemplateName, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self::bundled()
    }
}

impl Templates {
    pub fn bundled() -> Self {
        let texts = TemplateName::ALL
            .iter()
            .map(|&n| (n, n.bundled().trim_end().to_string()))
            .collect();
        Templates { texts }
    }

    /// Bundled templates, with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut templates = Self::bundled();
        for name in TemplateName::ALL {
            let path = dir.join(format!("{}.txt", name.file_stem()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    template: name.file_stem().into(),
                    message: e.to_string(),
                })?;
                templates.set(name, text.trim_end())?;
            }
        }
        Ok(templates)
    }

    pub fn set(&mut self, name: TemplateName, text: &str) -> Result<(), TemplateError> {
        check_placeholders(name, text)?;
        self.texts.insert(name, text.to_string());
        Ok(())
    }

    pub fn text(&self, name: TemplateName) -> &str {
        &self.texts[&name]
    }

    pub fn render(&self, name: TemplateName, vars: &Vars) -> Result<String, TemplateError> {
        let template = self.text(name);
        let mut missing = None;
        let out = PLACEHOLDER.replace_all(template, |caps: &regex::Captures| {
            let key = &caps[1];
            match vars.0.get(key) {
                Some(v) => v.clone(),
                None => {
                    missing.get_or_insert_with(|| key.to_string());
                    String::new()
                }
            }
        });
        match missing {
            Some(name_) => Err(TemplateError::MissingValue {
                template: name.file_stem().into(),
                name: name_,
            }),
            None => Ok(out.into_owned()),
        }
    }
}

fn check_placeholders(name: TemplateName, text: &str) -> Result<(), TemplateError> {
    for caps in PLACEHOLDER.captures_iter(text) {
        if !PLACEHOLDERS.contains(&&caps[1]) {
            return Err(TemplateError::UnknownPlaceholder {
                template: name.file_stem().into(),
                name: caps[1].to_string(),
            });
        }
    }
    Ok(())
}

/// Placeholder values for one rendering.
#[derive(Debug, Clone, Default)]
pub struct Vars(BTreeMap<&'static str, String>);

impl Vars {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &'static str, value: impl Into<String>) -> Self {
        debug_assert!(PLACEHOLDERS.contains(&key), "unknown placeholder {key}");
        self.0.insert(key, value.into());
        self
    }
}
