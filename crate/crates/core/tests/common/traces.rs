//! Exhaustive enumeration of short reviewer traces against the mock pipeline.
//! Every reachable state is expanded once under a fixed action alphabet and
//! each transition is checked against the gate and budget rules.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use itemsmith_core::item_model::ItemStatus;
use itemsmith_core::pipeline::{
    Gate, GateAction, GateDecision, PipelineError, PipelineSession, Selection, SessionMode, Stage, TimelineEvent,
    MAX_ADJUSTMENT_PROMPTS, MAX_MANUAL_WORDS,
};
use itemsmith_core::quality::CriterionId;
use itemsmith_core::samples;

use super::{lo_input, Rig};

#[derive(Debug, Clone)]
pub enum Act {
    Decide(Gate, GateAction, Option<usize>),
    Adjust(usize),
    Manual(usize, usize),
}

/// Adjustments go to the second item and manual edits to the first, so the
/// two budgets are exercised without multiplying each other's states.
pub fn alphabet() -> Vec<Act> {
    use Act::*;
    use GateAction::*;
    let reject = || Reject { reason: None };
    let label = |l: &str| Select { selection: Selection::Label(l.into()) };
    let index = |i| Select { selection: Selection::Index(i) };
    vec![
        Decide(Gate::G1ConceptMap, label("Ecological Roles"), None),
        Decide(Gate::G1ConceptMap, index(9), None),
        Decide(Gate::G1ConceptMap, Approve, None),
        Decide(Gate::G1ConceptMap, Edit { text: samples::CONCEPT_MAP.into() }, None),
        Decide(Gate::G1ConceptMap, Edit { text: "1. Unrelated Topic".into() }, None),
        Decide(Gate::G1ConceptMap, reject(), None),
        Decide(Gate::G2QuestionAnswer, index(2), None),
        Decide(Gate::G2QuestionAnswer, index(99), None),
        Decide(Gate::G2QuestionAnswer, reject(), None),
        Decide(Gate::G3Item, Approve, Some(0)),
        Decide(Gate::G3Item, reject(), Some(1)),
        Decide(Gate::G3Item, Edit { text: String::new() }, Some(0)),
        Decide(Gate::G3Item, Approve, None),
        Decide(Gate::G3Item, index(1), None),
        Adjust(1),
        Manual(0, 3),
        Manual(0, 4),
    ]
}

fn hash_of(v: impl Hash) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

/// Item text is left out: no check depends on it, and keeping it multiplies
/// the states by every interleaving of edits and revisions.
fn key(s: &PipelineSession) -> u64 {
    let items: Vec<_> = s
        .items
        .values()
        .map(|i| (format!("{:?}", i.status), s.budget(&i.id).adjustment_prompts_used, s.budget(&i.id).manual_words_edited))
        .collect();
    hash_of((
        format!("{:?}", s.stage),
        s.artifacts.concept_map.as_ref().map(|m| (m.text.clone(), m.edited)),
        &s.artifacts.selected_concept,
        s.artifacts.selected_qa.as_ref().map(|q| q.text.clone()),
        items,
    ))
}

fn dispatches(s: &PipelineSession) -> usize {
    s.timeline.iter().filter(|e| matches!(e, TimelineEvent::Dispatch { .. })).count()
}

/// The current text of the item with `extra` words inserted into the stem.
pub fn lengthened(s: &PipelineSession, idx: usize, extra: usize) -> String {
    let text = s.items[idx].render();
    let (first, rest) = text.split_once('\n').unwrap();
    format!("{first}{}\n{rest}", " zq".repeat(extra))
}

fn rank(stage: Stage) -> usize {
    Stage::order(SessionMode::Prototype).iter().position(|s| *s == stage).unwrap_or(usize::MAX)
}

#[derive(Debug, Default)]
pub struct Tally {
    pub states: usize,
    pub transitions: usize,
    pub refusals: usize,
    pub completed: usize,
    pub rejected: usize,
    pub exhausted_adjustments: usize,
    pub exceeded_words: usize,
}

pub async fn enumerate(r: &Rig) -> Result<Tally, String> {
    let p = &r.pipeline;
    let root = p.start_prototype_session(lo_input()).await.map_err(|e| e.to_string())?;
    let c9 = CriterionId::new(9).unwrap();

    let mut seen = HashSet::from([key(&root)]);
    let mut stack = vec![root];
    let mut t = Tally::default();

    while let Some(before) = stack.pop() {
        t.states += 1;
        match before.stage {
            Stage::Completed => t.completed += 1,
            Stage::Rejected => t.rejected += 1,
            _ => {}
        }
        for act in alphabet() {
            let target = |i: usize| before.items.get_index(i).map(|(id, _)| id.clone());
            let mut s = before.clone();
            let result = match &act {
                Act::Decide(gate, action, on) => {
                    let mut d = GateDecision::new(*gate, action.clone(), "r");
                    if let Some(i) = on {
                        // Targeted forms only exist once there are items.
                        let Some(id) = target(*i) else { continue };
                        if let GateAction::Edit { text } = &mut d.action {
                            *text = lengthened(&before, *i, 1);
                        }
                        d = d.for_item(id);
                    }
                    p.submit_gate_decision(&mut s, d).await.map(|_| ())
                }
                Act::Adjust(i) => match target(*i) {
                    Some(id) => p.apply_adjustment_prompt(&mut s, &id, c9).await.map(|_| ()),
                    None => continue,
                },
                Act::Manual(i, n) => match target(*i) {
                    Some(id) => p.apply_manual_edit(&mut s, &id, &lengthened(&before, *i, *n)).map(|_| ()),
                    None => continue,
                },
            };
            t.transitions += 1;
            check(&before, &s, &act, &result)?;

            match &result {
                Err(PipelineError::AdjustmentBudgetExhausted { .. }) => t.exhausted_adjustments += 1,
                Err(PipelineError::ManualBudgetExceeded { .. }) => t.exceeded_words += 1,
                _ => {}
            }
            if result.is_err() {
                t.refusals += 1;
                continue;
            }
            if seen.insert(key(&s)) {
                stack.push(s);
            }
        }
    }
    Ok(t)
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn check(before: &PipelineSession, after: &PipelineSession, act: &Act, result: &Result<(), PipelineError>) -> Result<(), String> {
    let ctx = format!("{act:?} at {:?} -> {result:?}", before.stage);

    ensure!(!matches!(result, Err(PipelineError::RevisionUnparseable(_) | PipelineError::Provider(_))), "unexpected error: {ctx}");
    if result.is_err() {
        ensure!(after == before, "refusal changed state: {ctx}");
        return Ok(());
    }

    ensure!(after.stage != Stage::Failed, "failed: {ctx}");
    ensure!(after.ordering_violations().is_empty(), "{ctx}: {:?}", after.ordering_violations());
    if after.stage == Stage::Rejected {
        ensure!(before.stage.gate().is_some(), "rejected outside a gate: {ctx}");
    } else {
        ensure!(rank(after.stage) >= rank(before.stage), "stage went backwards: {ctx}");
    }
    ensure!(!after.stage.is_awaiting(), "left waiting on a provider: {ctx}");

    for (id, item) in &after.items {
        let b = after.budget(id);
        ensure!(b.adjustment_prompts_used <= MAX_ADJUSTMENT_PROMPTS, "adjustment cap passed: {ctx}");
        ensure!(b.manual_words_edited <= MAX_MANUAL_WORDS, "word cap passed: {ctx}");
        if let Some(old) = before.items.get(id) {
            let a = before.budget(id);
            ensure!(
                b.adjustment_prompts_used >= a.adjustment_prompts_used && b.manual_words_edited >= a.manual_words_edited,
                "budget went down: {ctx}"
            );
            if old.status != ItemStatus::UnderReview {
                ensure!(item.status == old.status, "closed item reopened: {ctx}");
                ensure!(item.render() == old.render(), "closed item edited: {ctx}");
            }
        }
    }

    let new_dispatches = dispatches(after) - dispatches(before);
    match act {
        Act::Decide(gate, _, _) => {
            ensure!(before.stage.gate() == Some(*gate), "decision accepted off its gate: {ctx}");
            ensure!(after.gate_log.len() > before.gate_log.len(), "decision not logged: {ctx}");
            let expected = match (before.stage, after.stage) {
                (Stage::GateG1, Stage::GateG2) => 1,
                (Stage::GateG2, Stage::GateG3) => 4,
                _ => 0,
            };
            ensure!(new_dispatches == expected, "{new_dispatches} dispatches: {ctx}");
        }
        Act::Adjust(i) | Act::Manual(i, _) => {
            let id = before.items.get_index(*i).unwrap().0;
            let (a, b) = (before.budget(id), after.budget(id));
            ensure!(after.stage == before.stage, "stage moved: {ctx}");
            if let Act::Manual(_, n) = act {
                ensure!(b.manual_words_edited == a.manual_words_edited + *n as u32, "words charged wrongly: {ctx}");
                ensure!(new_dispatches == 0, "manual edit dispatched: {ctx}");
            } else {
                ensure!(b.adjustment_prompts_used == a.adjustment_prompts_used + 1, "prompt not charged: {ctx}");
                ensure!(new_dispatches == 1, "{new_dispatches} dispatches: {ctx}");
            }
        }
    }
    Ok(())
}
