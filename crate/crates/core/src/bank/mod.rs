//! Item banks: an open pool of prototypes, one per concept slot, and a
//! secret pool of series items from which exam variants are drawn.

mod store;

pub use store::BankStore;

use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::item_model::{option_label, render_mcq_unkeyed, ItemId, ItemStatus, McqItem};
use crate::similarity::{ConceptualMatchReport, SimilarityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Open,
    Secret,
}

/// Stored screening output backing a slot's series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "evidence", rename_all = "snake_case")]
pub enum Evidence {
    ConceptualMatch(ConceptualMatchReport),
    SimilarityMatrix(SimilarityMatrix),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptSlot {
    pub concept: String,
    pub prototype_id: ItemId,
    #[serde(default)]
    pub series_ids: Vec<ItemId>,
    /// Keys into [`ItemBank::evidence`].
    #[serde(default)]
    pub evidence_refs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pools {
    pub open: Vec<ItemId>,
    pub secret: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemBank {
    pub id: String,
    pub discipline: String,
    pub slots: Vec<ConceptSlot>,
    pub pools: Pools,
    /// Full item records, so a bank file is self-contained.
    #[serde(default)]
    pub items: IndexMap<ItemId, McqItem>,
    #[serde(default)]
    pub evidence: BTreeMap<String, Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVariant {
    pub id: String,
    /// One item per slot, in slot order.
    pub item_ids: Vec<ItemId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReuseMode {
    /// No item appears in two variants.
    #[default]
    Strict,
    /// Items may repeat across variants once a series is exhausted.
    AllowReuse,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BankError {
    #[error("concept `{0}` already has a slot")]
    DuplicateConcept(String),
    #[error("no slot for concept `{0}`")]
    UnknownSlot(String),
    #[error("item {item} is {status:?}, only accepted items can be banked")]
    NotAccepted { item: ItemId, status: ItemStatus },
    #[error("item id {0} is already in the bank")]
    IdCollision(ItemId),
    #[error("no conceptual-match evidence for item {0}")]
    MissingEvidence(ItemId),
    #[error("item {0} was judged to test a different concept")]
    NegativeEvidence(ItemId),
    #[error("evidence is for prototype {found}, slot prototype is {expected}")]
    EvidenceMismatch { expected: ItemId, found: ItemId },
    #[error("series is empty")]
    EmptySeries,
    #[error("bank has no slots")]
    NoSlots,
    #[error("variant count must be at least 1")]
    ZeroVariants,
    #[error("slot `{concept}` has {available} series items, fewer than the {requested} variants requested without reuse")]
    Infeasible { concept: String, available: usize, requested: usize },
    #[error("slot `{0}` has no series items")]
    SlotWithoutSeries(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("bank file: {0}")]
    Schema(String),
    #[error("unknown bank {0}")]
    UnknownBank(String),
    #[error("bank {0} already exists")]
    BankExists(String),
    #[error("bank store i/o: {0}")]
    Io(String),
}

impl ItemBank {
    pub fn new(id: &str, discipline: &str) -> Self {
        ItemBank {
            id: id.to_string(),
            discipline: discipline.to_string(),
            slots: Vec::new(),
            pools: Pools::default(),
            items: IndexMap::new(),
            evidence: BTreeMap::new(),
        }
    }

    pub fn slot(&self, concept: &str) -> Option<&ConceptSlot> {
        self.slots.iter().find(|s| s.concept == concept)
    }

    pub fn pool_of(&self, id: &ItemId) -> Option<Pool> {
        if self.pools.open.contains(id) {
            Some(Pool::Open)
        } else if self.pools.secret.contains(id) {
            Some(Pool::Secret)
        } else {
            None
        }
    }

    fn contains(&self, id: &ItemId) -> bool {
        self.items.contains_key(id) || self.pool_of(id).is_some()
    }

    pub fn add_prototype(&mut self, concept: &str, item: McqItem) -> Result<&ConceptSlot, BankError> {
        if self.slot(concept).is_some() {
            return Err(BankError::DuplicateConcept(concept.to_string()));
        }
        check_accepted(&item)?;
        if self.contains(&item.id) {
            return Err(BankError::IdCollision(item.id));
        }
        self.pools.open.push(item.id.clone());
        self.slots.push(ConceptSlot {
            concept: concept.to_string(),
            prototype_id: item.id.clone(),
            series_ids: Vec::new(),
            evidence_refs: Vec::new(),
        });
        self.items.insert(item.id.clone(), item);
        Ok(self.slots.last().unwrap())
    }

    /// Adds accepted series items to a slot. `evidence` must judge every one
    /// of them to test the slot prototype's concept. An optional similarity
    /// matrix is stored alongside as further evidence.
    pub fn attach_series(
        &mut self,
        concept: &str,
        items: Vec<McqItem>,
        evidence: ConceptualMatchReport,
        matrix: Option<SimilarityMatrix>,
    ) -> Result<&ConceptSlot, BankError> {
        let index = self
            .slots
            .iter()
            .position(|s| s.concept == concept)
            .ok_or_else(|| BankError::UnknownSlot(concept.to_string()))?;
        if items.is_empty() {
            return Err(BankError::EmptySeries);
        }
        let prototype = self.slots[index].prototype_id.clone();
        if evidence.prototype_id != prototype {
            return Err(BankError::EvidenceMismatch { expected: prototype, found: evidence.prototype_id });
        }
        let mut seen = HashSet::new();
        for item in &items {
            check_accepted(item)?;
            if self.contains(&item.id) || !seen.insert(&item.id) {
                return Err(BankError::IdCollision(item.id.clone()));
            }
            match evidence.judgment(&item.id) {
                None => return Err(BankError::MissingEvidence(item.id.clone())),
                Some(false) => return Err(BankError::NegativeEvidence(item.id.clone())),
                Some(true) => {}
            }
        }

        let key = self.next_evidence_key(concept);
        self.evidence.insert(key.clone(), Evidence::ConceptualMatch(evidence));
        self.slots[index].evidence_refs.push(key);
        if let Some(m) = matrix {
            let key = self.next_evidence_key(concept);
            self.evidence.insert(key.clone(), Evidence::SimilarityMatrix(m));
            self.slots[index].evidence_refs.push(key);
        }
        for item in items {
            self.pools.secret.push(item.id.clone());
            self.slots[index].series_ids.push(item.id.clone());
            self.items.insert(item.id.clone(), item);
        }
        Ok(&self.slots[index])
    }

    fn next_evidence_key(&self, concept: &str) -> String {
        let slug: String = concept
            .chars()
            .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
            .collect();
        (1..).map(|n| format!("{slug}#{n}")).find(|k| !self.evidence.contains_key(k)).unwrap()
    }

    /// Draws `n` variants, one series item per slot each, shuffled by a
    /// seeded ChaCha8 generator so the same seed gives the same variants.
    pub fn compile_variants(&self, n: usize, seed: u64, mode: ReuseMode) -> Result<Vec<TestVariant>, BankError> {
        if n == 0 {
            return Err(BankError::ZeroVariants);
        }
        if self.slots.is_empty() {
            return Err(BankError::NoSlots);
        }
        for slot in &self.slots {
            if slot.series_ids.is_empty() {
                return Err(BankError::SlotWithoutSeries(slot.concept.clone()));
            }
        }
        if mode == ReuseMode::Strict {
            if let Some(limiting) = self.slots.iter().min_by_key(|s| s.series_ids.len()) {
                if limiting.series_ids.len() < n {
                    return Err(BankError::Infeasible {
                        concept: limiting.concept.clone(),
                        available: limiting.series_ids.len(),
                        requested: n,
                    });
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns: Vec<Vec<ItemId>> = self
            .slots
            .iter()
            .map(|slot| {
                let mut ids = slot.series_ids.clone();
                ids.shuffle(&mut rng);
                ids
            })
            .collect();
        Ok((0..n)
            .map(|v| TestVariant {
                id: format!("variant-{}", v + 1),
                item_ids: columns.iter().map(|ids| ids[v % ids.len()].clone()).collect(),
            })
            .collect())
    }

    /// The variant as an exam sheet without answer markers.
    pub fn exam_sheet(&self, variant: &TestVariant) -> Result<String, BankError> {
        let mut out = format!("{}\n\n", variant.id);
        for (n, id) in variant.item_ids.iter().enumerate() {
            let item = self.item(id)?;
            out.push_str(&format!("{}. {}\n", n + 1, render_mcq_unkeyed(&item.body)));
        }
        Ok(out)
    }

    pub fn answer_key(&self, variant: &TestVariant) -> Result<String, BankError> {
        let mut out = format!("{}\n", variant.id);
        for (n, id) in variant.item_ids.iter().enumerate() {
            let item = self.item(id)?;
            out.push_str(&format!("{}. {}\n", n + 1, option_label(item.body.correct_index)));
        }
        Ok(out)
    }

    fn item(&self, id: &ItemId) -> Result<&McqItem, BankError> {
        self.items.get(id).ok_or_else(|| BankError::Invariant(format!("item {id} has no record")))
    }

    /// Checks every structural invariant of a bank.
    pub fn validate(&self) -> Result<(), BankError> {
        let bad = |msg: String| Err(BankError::Invariant(msg));
        let mut open = HashSet::new();
        for id in &self.pools.open {
            if !open.insert(id) {
                return bad(format!("{id} listed twice in the open pool"));
            }
        }
        let mut secret = HashSet::new();
        for id in &self.pools.secret {
            if !secret.insert(id) {
                return bad(format!("{id} listed twice in the secret pool"));
            }
            if open.contains(id) {
                return bad(format!("{id} is in both pools"));
            }
        }

        let mut concepts = HashSet::new();
        let mut placed = HashSet::new();
        for slot in &self.slots {
            if !concepts.insert(&slot.concept) {
                return bad(format!("concept `{}` has two slots", slot.concept));
            }
            if !open.contains(&slot.prototype_id) {
                return bad(format!("prototype {} of `{}` is not in the open pool", slot.prototype_id, slot.concept));
            }
            if !placed.insert(&slot.prototype_id) {
                return bad(format!("{} appears in more than one slot position", slot.prototype_id));
            }
            let mut matched = HashSet::new();
            for key in &slot.evidence_refs {
                match self.evidence.get(key) {
                    None => return bad(format!("slot `{}` cites missing evidence `{key}`", slot.concept)),
                    Some(Evidence::ConceptualMatch(r)) if r.prototype_id == slot.prototype_id => {
                        matched.extend(r.candidates.iter().filter(|c| c.same_concept).map(|c| &c.item_id));
                    }
                    Some(_) => {}
                }
            }
            for id in &slot.series_ids {
                if !secret.contains(id) {
                    return bad(format!("series item {id} of `{}` is not in the secret pool", slot.concept));
                }
                if !placed.insert(id) {
                    return bad(format!("{id} appears in more than one slot position"));
                }
                if !matched.contains(id) {
                    return bad(format!("series item {id} of `{}` lacks a positive conceptual match", slot.concept));
                }
            }
        }
        if placed.len() != open.len() + secret.len() {
            return bad("a pooled item belongs to no slot".into());
        }
        for id in placed {
            match self.items.get(id) {
                None => return bad(format!("item {id} has no record")),
                Some(item) if item.status != ItemStatus::Accepted => {
                    return bad(format!("item {id} is {:?}", item.status))
                }
                Some(_) => {}
            }
        }
        if self.items.len() != open.len() + secret.len() {
            return bad("an item record belongs to no pool".into());
        }
        Ok(())
    }

    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bank serializes")
    }

    /// Parses and validates a bank file.
    pub fn import_json(text: &str) -> Result<Self, BankError> {
        let bank: ItemBank = serde_json::from_str(text).map_err(|e| BankError::Schema(e.to_string()))?;
        bank.validate()?;
        Ok(bank)
    }
}

fn check_accepted(item: &McqItem) -> Result<(), BankError> {
    if item.status != ItemStatus::Accepted {
        return Err(BankError::NotAccepted { item: item.id.clone(), status: item.status });
    }
    Ok(())
}
