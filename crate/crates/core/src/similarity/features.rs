use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureSet, SimilarityError};
use crate::item_model::{render_mcq_unkeyed, ItemId, McqBody, SessionId};
use crate::prompts::{TemplateError, TemplateName, Templates, Vars};
use crate::providers::{ProviderHub, Role};

pub fn feature_prompt(templates: &Templates, concept: &str, item: &McqBody) -> Result<String, TemplateError> {
    templates.render(
        TemplateName::Features,
        &Vars::new().set("concept", concept).set("item_text", render_mcq_unkeyed(item)),
    )
}

static BULLET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[•●○▪◦‣∙·\-*+]|\d+[.)])\s+(.+?)\s*$").unwrap());

/// Bullet or numbered lines, with emphasis markers stripped.
pub fn parse_feature_bullets(response: &str) -> Result<Vec<String>, SimilarityError> {
    let features: Vec<String> = response
        .lines()
        .filter_map(|l| BULLET.captures(l))
        .map(|c| c[1].replace("**", "").trim_end_matches(['.', ';']).trim().to_string())
        .filter(|f| !f.is_empty())
        .collect();
    if features.is_empty() {
        Err(SimilarityError::UnparseableFeatures)
    } else {
        Ok(features)
    }
}

pub async fn extract_contextual_features(
    hub: &ProviderHub,
    templates: &Templates,
    item_id: &ItemId,
    item: &McqBody,
    concept: &str,
    role: &Role,
    session: Option<&SessionId>,
) -> Result<FeatureSet, SimilarityError> {
    let prompt = feature_prompt(templates, concept, item)?;
    let out = hub.dispatch_for(session, role, &prompt, None).await?;
    let features = parse_feature_bullets(&out.response)?;
    Ok(FeatureSet::contextual(item_id.clone(), features))
}

/// Feature sets by item and kind. A manual override always wins over an
/// extracted set and survives later extractions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureStore {
    extracted: BTreeMap<String, FeatureSet>,
    overrides: BTreeMap<String, FeatureSet>,
}

fn key(item: &ItemId, kind: FeatureKind) -> String {
    format!("{}#{kind:?}", item.as_str())
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_extracted(&mut self, set: FeatureSet) {
        self.extracted.insert(key(&set.item_id, set.kind), set);
    }

    pub fn put_override(&mut self, set: FeatureSet) {
        self.overrides.insert(key(&set.item_id, set.kind), set);
    }

    pub fn clear_override(&mut self, item: &ItemId, kind: FeatureKind) -> Option<FeatureSet> {
        self.overrides.remove(&key(item, kind))
    }

    pub fn get(&self, item: &ItemId, kind: FeatureKind) -> Option<&FeatureSet> {
        let k = key(item, kind);
        self.overrides.get(&k).or_else(|| self.extracted.get(&k))
    }

    pub fn is_override(&self, item: &ItemId, kind: FeatureKind) -> bool {
        self.overrides.contains_key(&key(item, kind))
    }

    /// Sets for `items` in order, failing on the first missing one.
    pub fn collect(&self, items: &[ItemId], kind: FeatureKind) -> Result<Vec<FeatureSet>, SimilarityError> {
        items
            .iter()
            .map(|id| {
                self.get(id, kind)
                    .cloned()
                    .ok_or_else(|| SimilarityError::MissingFeatureSet { item: id.clone(), kind })
            })
            .collect()
    }
}
