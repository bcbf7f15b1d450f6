use std::sync::Arc;

use chrono::Utc;
use futures::future::join_all;

use super::*;
use crate::item_model::{
    parse_mcq, render_mcq, split_items, word_edit_distance, EditKind, EditRecord, ItemStatus, McqBody,
    ProvenanceRecord, DEFAULT_OPTION_COUNT,
};
use crate::prompts::{TemplateName, Templates, Vars};
use crate::providers::{Dispatched, ProviderHub, Role};
use crate::quality::{criteria_block, full_criteria_block, CriterionId};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Fan-out roles for the item stage. `None` uses every configured item writer.
    pub item_writers: Option<Vec<Role>>,
    pub series_role: Role,
    pub one_step_role: Role,
    pub expected_options: usize,
    pub max_adjustments: u32,
    pub max_manual_words: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            item_writers: None,
            series_role: Role::ItemWriter(1),
            one_step_role: Role::ItemWriter(1),
            expected_options: DEFAULT_OPTION_COUNT,
            max_adjustments: MAX_ADJUSTMENT_PROMPTS,
            max_manual_words: MAX_MANUAL_WORDS,
        }
    }
}

/// Drafts from a one-step run plus the blocks that failed to parse.
#[derive(Debug, Clone)]
pub struct OneStepOutcome {
    pub session: PipelineSession,
    pub drafts: Vec<McqItem>,
    /// 1-based block number and its parse report.
    pub reports: Vec<(usize, ParseReport)>,
}

pub struct Pipeline {
    hub: Arc<ProviderHub>,
    templates: Arc<Templates>,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(hub: Arc<ProviderHub>, templates: Arc<Templates>) -> Self {
        Pipeline { hub, templates, config: PipelineConfig::default() }
    }

    pub fn with_config(mut self, config: PipelineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn hub(&self) -> &Arc<ProviderHub> {
        &self.hub
    }

    pub fn templates(&self) -> &Arc<Templates> {
        &self.templates
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn item_writers(&self) -> Result<Vec<Role>, PipelineError> {
        let roles = match &self.config.item_writers {
            Some(r) => r.clone(),
            None => self.hub.item_writer_roles(),
        };
        if roles.is_empty() {
            return Err(ProviderError::UnconfiguredRole(Role::ItemWriter(1).to_string()).into());
        }
        Ok(roles)
    }

    pub fn new_prototype_session(&self, input: GenerationInput) -> Result<PipelineSession, PipelineError> {
        input.validate()?;
        Ok(PipelineSession::new(
            SessionMode::Prototype,
            SessionInput::Generation(input),
            Stage::AwaitingConceptMap,
            1,
        ))
    }

    /// Creates the session and runs the concept-map stage. A provider failure
    /// leaves the returned session failed and resumable.
    pub async fn start_prototype_session(&self, input: GenerationInput) -> Result<PipelineSession, PipelineError> {
        let mut session = self.new_prototype_session(input)?;
        let _ = self.advance(&mut session).await;
        Ok(session)
    }

    pub fn new_series_session(
        &self,
        prototype: &McqItem,
        mode: SeriesMode,
        count: u32,
    ) -> Result<PipelineSession, PipelineError> {
        if prototype.status != ItemStatus::Accepted {
            return Err(PipelineError::PrototypeNotAccepted);
        }
        if count == 0 {
            return Err(PipelineError::Validation("count must be at least 1".into()));
        }
        Ok(PipelineSession::new(
            mode.session_mode(),
            SessionInput::Prototype { item: Box::new(prototype.clone()) },
            Stage::AwaitingItems,
            count,
        ))
    }

    pub async fn start_series_session(
        &self,
        prototype: &McqItem,
        mode: SeriesMode,
        count: u32,
    ) -> Result<PipelineSession, PipelineError> {
        let mut session = self.new_series_session(prototype, mode, count)?;
        let _ = self.advance(&mut session).await;
        Ok(session)
    }

    pub fn new_one_step_session(&self, input: GenerationInput) -> Result<PipelineSession, PipelineError> {
        input.validate()?;
        let n = input.requested_items;
        Ok(PipelineSession::new(SessionMode::OneStep, SessionInput::Generation(input), Stage::AwaitingItems, n))
    }

    pub async fn run_one_step(&self, input: GenerationInput) -> Result<OneStepOutcome, PipelineError> {
        let mut session = self.new_one_step_session(input)?;
        self.advance(&mut session).await?;
        Ok(one_step_outcome(session))
    }

    /// Runs the dispatch stage the session is waiting on. Gate and closed
    /// stages are left alone. On provider or parse failure the session moves
    /// to `failed`, remembering which stage to retry, and the error is returned.
    pub async fn advance(&self, session: &mut PipelineSession) -> Result<(), PipelineError> {
        let stage = session.stage;
        let result = match stage {
            Stage::AwaitingConceptMap => self.run_concept_map(session).await,
            Stage::AwaitingQuestions => self.run_questions(session).await,
            Stage::AwaitingItems => match session.mode {
                SessionMode::Prototype => self.run_item_fan_out(session).await,
                SessionMode::SeriesExampleBased | SessionMode::SeriesConceptDerived => self.run_series(session).await,
                SessionMode::OneStep => self.run_one_step_stage(session).await,
            },
            _ => return Ok(()),
        };
        session.updated_at = Utc::now();
        if let Err(e) = &result {
            tracing::warn!(session = %session.id, ?stage, error = %e, "stage failed");
            session.failure = Some(Failure { stage, error: e.to_string(), at: Utc::now() });
            session.stage = Stage::Failed;
        }
        result
    }

    pub async fn resume(&self, session: &mut PipelineSession) -> Result<(), PipelineError> {
        let failure = match (session.stage, session.failure.take()) {
            (Stage::Failed, Some(f)) => f,
            (_, f) => {
                session.failure = f;
                return Err(PipelineError::NotResumable);
            }
        };
        session.stage = failure.stage;
        self.advance(session).await
    }

    pub async fn submit_gate_decision(
        &self,
        session: &mut PipelineSession,
        decision: GateDecision,
    ) -> Result<(), PipelineError> {
        self.decide(session, decision)?;
        self.advance(session).await
    }

    async fn call(
        &self,
        session: &PipelineSession,
        role: &Role,
        prompt: &str,
        context: Option<&str>,
    ) -> Result<Dispatched, PipelineError> {
        Ok(self.hub.dispatch_for(Some(&session.id), role, prompt, context).await?)
    }

    async fn run_concept_map(&self, s: &mut PipelineSession) -> Result<(), PipelineError> {
        let input = s.generation_input().cloned().ok_or_else(|| PipelineError::Validation("no generation input".into()))?;
        let vars = Vars::new()
            .set("education_level", &input.education_level)
            .set("discipline", &input.discipline)
            .set("input_body", &input.body);
        let (prompt, context) = match input.kind {
            InputKind::LearningObjective => (self.templates.render(TemplateName::ConceptMapObjective, &vars)?, None),
            InputKind::TextbookFragment => {
                (self.templates.render(TemplateName::ConceptMapTextbook, &vars)?, Some(input.body.as_str()))
            }
        };
        let role = Role::ConceptMapper;
        let out = self.call(s, &role, &prompt, context).await?;
        s.record_dispatch(Stage::AwaitingConceptMap, &role.to_string(), &out.entry.id);
        s.artifacts.concept_map =
            Some(StageText { text: out.response, transcript_id: Some(out.entry.id), edited: false });
        s.stage = Stage::GateG1;
        Ok(())
    }

    async fn run_questions(&self, s: &mut PipelineSession) -> Result<(), PipelineError> {
        let concept = s.artifacts.selected_concept.clone().ok_or_else(|| PipelineError::Validation("no concept selected".into()))?;
        let prompt = self.templates.render(TemplateName::QuestionAnswer, &Vars::new().set("concept", &concept))?;
        let role = Role::QuestionWriter;
        let out = self.call(s, &role, &prompt, None).await?;
        let candidates = parse_qa_candidates(&out.response);
        s.record_dispatch(Stage::AwaitingQuestions, &role.to_string(), &out.entry.id);
        if candidates.is_empty() {
            return Err(PipelineError::Validation("question writer returned no candidates".into()));
        }
        s.artifacts.qa_response = Some(StageText { text: out.response, transcript_id: Some(out.entry.id), edited: false });
        s.artifacts.qa_candidates = candidates;
        s.stage = Stage::GateG2;
        Ok(())
    }

    async fn run_item_fan_out(&self, s: &mut PipelineSession) -> Result<(), PipelineError> {
        let qa = s.artifacts.selected_qa.clone().ok_or_else(|| PipelineError::Validation("no question selected".into()))?;
        let prompt = self.templates.render(
            TemplateName::Item,
            &Vars::new().set("question_answer", &qa.text).set("criteria_block", full_criteria_block()),
        )?;
        let roles = self.item_writers()?;
        let calls = roles.iter().map(|r| self.call(s, r, &prompt, None));
        let results = join_all(calls).await;

        let mut outs = Vec::with_capacity(roles.len());
        let mut first_err = None;
        for r in results {
            match r {
                Ok(d) => outs.push(d),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_err {
            // Whole stage is retried; keep the ids so the audit can account for them.
            s.transcript_ids.extend(outs.into_iter().map(|d| d.entry.id));
            return Err(e);
        }

        let input = s.generation_input().cloned().unwrap_or_else(|| GenerationInput::learning_objective("", "", ""));
        let topic = if input.topic.is_empty() { s.artifacts.selected_concept.clone().unwrap_or_default() } else { input.topic.clone() };
        for (role, out) in roles.iter().zip(outs) {
            let role_name = role.to_string();
            s.record_dispatch(Stage::AwaitingItems, &role_name, &out.entry.id);
            let parsed = parse_one(&out.response, self.config.expected_options);
            self.add_candidate(s, &role_name, out, parsed, (&input.discipline, &input.education_level, &topic));
        }
        self.open_item_gate(s)
    }

    async fn run_series(&self, s: &mut PipelineSession) -> Result<(), PipelineError> {
        let proto = s.prototype().cloned().ok_or(PipelineError::PrototypeNotAccepted)?;
        let template = match s.mode {
            SessionMode::SeriesConceptDerived => TemplateName::SeriesConcept,
            _ => TemplateName::SeriesExample,
        };
        let prompt = self.templates.render(
            template,
            &Vars::new()
                .set("prototype_item", render_mcq(&proto.body))
                .set("count", s.requested.to_string())
                .set("discipline", &proto.discipline)
                .set("education_level", &proto.education_level)
                .set("criteria_block", full_criteria_block()),
        )?;
        let role = self.config.series_role.clone();
        let out = self.call(s, &role, &prompt, None).await?;
        let role_name = role.to_string();
        s.record_dispatch(Stage::AwaitingItems, &role_name, &out.entry.id);
        let blocks = split_items(&out.response);
        for block in blocks {
            let parsed = parse_mcq(&block, self.config.expected_options);
            let one = Dispatched { response: block, entry: out.entry.clone() };
            self.add_candidate(s, &role_name, one, parsed, (&proto.discipline, &proto.education_level, &proto.topic));
        }
        self.open_item_gate(s)
    }

    async fn run_one_step_stage(&self, s: &mut PipelineSession) -> Result<(), PipelineError> {
        let input = s.generation_input().cloned().ok_or_else(|| PipelineError::Validation("no generation input".into()))?;
        let prompt = self
            .templates
            .render(
                TemplateName::OneStep,
                &Vars::new()
                    .set("count", input.requested_items.to_string())
                    .set("education_level", &input.education_level)
                    .set("speciality", &input.speciality)
                    .set("discipline", &input.discipline)
                    .set("input_body", &input.body),
            )?
            .replace(", , ", ", ");
        let role = self.config.one_step_role.clone();
        let out = self.call(s, &role, &prompt, None).await?;
        let role_name = role.to_string();
        s.record_dispatch(Stage::AwaitingItems, &role_name, &out.entry.id);
        for block in split_items(&out.response) {
            let parsed = parse_mcq(&block, self.config.expected_options);
            let one = Dispatched { response: block, entry: out.entry.clone() };
            self.add_candidate(s, &role_name, one, parsed, (&input.discipline, &input.education_level, &input.topic));
        }
        for item in s.items.values_mut() {
            item.status = ItemStatus::Draft;
        }
        s.stage = Stage::Completed;
        Ok(())
    }

    fn add_candidate(
        &self,
        s: &mut PipelineSession,
        role: &str,
        out: Dispatched,
        parsed: Result<McqBody, ParseReport>,
        (discipline, level, topic): (&str, &str, &str),
    ) {
        let tid = out.entry.id.clone();
        let outcome = match parsed {
            Ok(body) => {
                let mut item = McqItem::new(body, ProvenanceRecord::generated(role, &s.id, vec![tid.clone()]))
                    .with_context(discipline, level, topic);
                item.status = ItemStatus::UnderReview;
                let id = item.id.clone();
                s.budgets.insert(id.clone(), BudgetCounter::default());
                s.items.insert(id.clone(), item);
                CandidateOutcome::Parsed { item_id: id }
            }
            Err(report) => CandidateOutcome::Unparsed { report },
        };
        s.artifacts.candidates.push(Candidate { role: role.to_string(), transcript_id: tid, raw: out.response, outcome });
    }

    fn open_item_gate(&self, s: &mut PipelineSession) -> Result<(), PipelineError> {
        if s.items.is_empty() {
            return Err(PipelineError::Validation("no candidate item could be parsed".into()));
        }
        s.stage = Stage::GateG3;
        Ok(())
    }

    /// Validates and records a gate decision. On error the session is left
    /// exactly as it was. A closing decision moves the session to the next
    /// dispatch stage; call [`Pipeline::advance`] to run it.
    pub fn decide(&self, session: &mut PipelineSession, decision: GateDecision) -> Result<(), PipelineError> {
        let mut s = session.clone();
        if s.stage.is_closed() {
            return Err(PipelineError::SessionClosed(s.stage));
        }
        let expected = s.stage.gate();
        if expected != Some(decision.gate) {
            return Err(PipelineError::WrongGate { expected, got: decision.gate });
        }
        match decision.gate {
            Gate::G1ConceptMap => self.decide_g1(&mut s, decision)?,
            Gate::G2QuestionAnswer => self.decide_g2(&mut s, decision)?,
            Gate::G3Item => self.decide_g3(&mut s, decision)?,
        }
        s.updated_at = Utc::now();
        *session = s;
        Ok(())
    }

    fn decide_g1(&self, s: &mut PipelineSession, d: GateDecision) -> Result<(), PipelineError> {
        let map = s.artifacts.concept_map.as_ref().map(|m| m.text.clone()).unwrap_or_default();
        let node = match &d.action {
            GateAction::Reject { .. } => {
                s.record_gate(d);
                s.stage = Stage::Rejected;
                return Ok(());
            }
            GateAction::Edit { text } => {
                if text.trim().is_empty() {
                    return Err(PipelineError::Validation("edited concept map is empty".into()));
                }
                let tid = s.artifacts.concept_map.as_ref().and_then(|m| m.transcript_id.clone());
                s.artifacts.concept_map = Some(StageText { text: text.clone(), transcript_id: tid, edited: true });
                s.record_gate(d);
                return Ok(());
            }
            GateAction::Approve => {
                let tops = top_level_nodes(&map);
                match tops.as_slice() {
                    [one] => one.clone(),
                    _ => return Err(PipelineError::SelectionRequired(tops.len())),
                }
            }
            GateAction::Select { selection: Selection::Index(i) } => {
                let tops = top_level_nodes(&map);
                match i.checked_sub(1).and_then(|k| tops.get(k)) {
                    Some(n) => n.clone(),
                    None => return Err(PipelineError::SelectionOutOfRange { index: *i, available: tops.len() }),
                }
            }
            GateAction::Select { selection: Selection::Label(l) } => match find_concept(&map, l) {
                NodeMatch::Found(n) => n,
                NodeMatch::NotFound => return Err(PipelineError::SelectionNotFound(l.clone())),
                NodeMatch::Ambiguous(matches) => {
                    return Err(PipelineError::AmbiguousSelection { label: l.clone(), matches })
                }
            },
        };
        s.artifacts.selected_concept = Some(node.label);
        s.record_gate(d);
        s.stage = Stage::AwaitingQuestions;
        Ok(())
    }

    fn decide_g2(&self, s: &mut PipelineSession, d: GateDecision) -> Result<(), PipelineError> {
        let tid = s.artifacts.qa_response.as_ref().and_then(|r| r.transcript_id.clone());
        let cands = &s.artifacts.qa_candidates;
        let chosen = match &d.action {
            GateAction::Reject { .. } => {
                s.record_gate(d);
                s.stage = Stage::Rejected;
                return Ok(());
            }
            GateAction::Edit { text } => {
                if text.trim().is_empty() {
                    return Err(PipelineError::Validation("edited question is empty".into()));
                }
                StageText { text: text.clone(), transcript_id: tid, edited: true }
            }
            GateAction::Approve => match cands.as_slice() {
                [one] => StageText { text: one.raw.clone(), transcript_id: tid, edited: false },
                _ => return Err(PipelineError::SelectionRequired(cands.len())),
            },
            GateAction::Select { selection: Selection::Index(i) } => {
                match cands.iter().find(|c| c.number == *i) {
                    Some(c) => StageText { text: c.raw.clone(), transcript_id: tid, edited: false },
                    None => return Err(PipelineError::SelectionOutOfRange { index: *i, available: cands.len() }),
                }
            }
            GateAction::Select { selection: Selection::Label(l) } => match find_qa(cands, l) {
                Some(c) => StageText { text: c.raw.clone(), transcript_id: tid, edited: false },
                None => return Err(PipelineError::SelectionNotFound(l.clone())),
            },
        };
        s.artifacts.selected_qa = Some(chosen);
        s.record_gate(d);
        s.stage = Stage::AwaitingItems;
        Ok(())
    }

    fn decide_g3(&self, s: &mut PipelineSession, d: GateDecision) -> Result<(), PipelineError> {
        match (&d.action, &d.target) {
            (GateAction::Select { .. }, _) => {
                return Err(PipelineError::InvalidAction { gate: Gate::G3Item, action: "select" })
            }
            (GateAction::Edit { .. }, None) => return Err(PipelineError::TargetRequired),
            (GateAction::Edit { text }, Some(id)) => {
                let text = text.clone();
                let id = id.clone();
                self.manual_edit_in(s, &id, &text)?;
                s.items[&id].status = ItemStatus::Accepted;
                s.record_gate(d);
            }
            (GateAction::Approve | GateAction::Reject { .. }, Some(id)) => {
                let id = id.clone();
                close_item(s, &id, &d.action)?;
                s.record_gate(d);
            }
            (GateAction::Approve | GateAction::Reject { .. }, None) => {
                for id in s.pending_items() {
                    close_item(s, &id, &d.action)?;
                    s.record_gate(d.clone().for_item(id));
                }
            }
        }
        if s.pending_items().is_empty() {
            s.stage = Stage::Completed;
        }
        Ok(())
    }

    fn check_reviewable(s: &PipelineSession, id: &ItemId) -> Result<(), PipelineError> {
        let item = s.items.get(id).ok_or_else(|| PipelineError::UnknownItem(id.clone()))?;
        if item.status != ItemStatus::UnderReview || s.stage != Stage::GateG3 {
            return Err(PipelineError::NotUnderReview(id.clone()));
        }
        Ok(())
    }

    fn manual_edit_in(&self, s: &mut PipelineSession, id: &ItemId, new_text: &str) -> Result<(), PipelineError> {
        Self::check_reviewable(s, id)?;
        let old = s.items[id].render();
        let delta = word_edit_distance(&old, new_text) as u32;
        if delta == 0 {
            return Ok(());
        }
        let budget = s.budget(id);
        if budget.manual_words_edited + delta > self.config.max_manual_words {
            return Err(PipelineError::ManualBudgetExceeded {
                item: id.clone(),
                used: budget.manual_words_edited,
                requested: delta,
                cap: self.config.max_manual_words,
            });
        }
        let body = parse_mcq(new_text, self.config.expected_options).map_err(PipelineError::EditUnparseable)?;
        let item = &mut s.items[id];
        item.provenance.prior_versions.push(old);
        item.provenance.edits.push(EditRecord {
            kind: EditKind::ManualEdit { word_delta: delta },
            criterion_targeted: None,
            timestamp: Utc::now(),
            transcript_id: None,
        });
        item.body = body;
        s.budgets.entry(id.clone()).or_default().manual_words_edited += delta;
        Ok(())
    }

    /// Replaces the item text with a reviewer's edit, charging the word-level
    /// edit distance to the item's budget. Refusals leave the session unchanged.
    pub fn apply_manual_edit(
        &self,
        session: &mut PipelineSession,
        item: &ItemId,
        new_text: &str,
    ) -> Result<McqItem, PipelineError> {
        let mut s = session.clone();
        self.manual_edit_in(&mut s, item, new_text)?;
        s.updated_at = Utc::now();
        *session = s;
        Ok(session.items[item].clone())
    }

    /// Asks the item's writer to revise it against one criterion.
    ///
    /// A transport failure consumes nothing. A revision that does not parse
    /// still counts against the budget and is recorded; the item text is kept.
    pub async fn apply_adjustment_prompt(
        &self,
        session: &mut PipelineSession,
        item: &ItemId,
        criterion: CriterionId,
    ) -> Result<McqItem, PipelineError> {
        Self::check_reviewable(session, item)?;
        let budget = session.budget(item);
        if budget.adjustment_prompts_used >= self.config.max_adjustments {
            return Err(PipelineError::AdjustmentBudgetExhausted { item: item.clone(), cap: self.config.max_adjustments });
        }
        let current = session.items[item].clone();
        let prompt = self.templates.render(
            TemplateName::Adjustment,
            &Vars::new().set("criteria_block", criteria_block(&[criterion])).set("item_text", current.render()),
        )?;
        let role = current
            .provenance
            .source_role
            .parse::<Role>()
            .ok()
            .filter(|r| self.hub.is_configured(r))
            .unwrap_or_else(|| self.config.series_role.clone());
        let out = self.call(session, &role, &prompt, None).await?;

        let mut s = session.clone();
        let tid = out.entry.id.clone();
        s.record_dispatch(Stage::GateG3, &role.to_string(), &tid);
        s.budgets.entry(item.clone()).or_default().adjustment_prompts_used += 1;
        let parsed = parse_one(&out.response, self.config.expected_options);
        let it = &mut s.items[item];
        it.provenance.edits.push(EditRecord {
            kind: EditKind::AdjustmentPrompt,
            criterion_targeted: Some(criterion.get()),
            timestamp: Utc::now(),
            transcript_id: Some(tid.clone()),
        });
        it.provenance.prompt_ids.push(tid);
        let result = match parsed {
            Ok(body) => {
                let old = it.render();
                it.provenance.prior_versions.push(old);
                it.body = body;
                Ok(it.clone())
            }
            Err(report) => Err(PipelineError::RevisionUnparseable(report)),
        };
        s.updated_at = Utc::now();
        *session = s;
        result
    }
}

fn close_item(s: &mut PipelineSession, id: &ItemId, action: &GateAction) -> Result<(), PipelineError> {
    Pipeline::check_reviewable(s, id)?;
    s.items[id].status = match action {
        GateAction::Approve => ItemStatus::Accepted,
        _ => ItemStatus::Rejected,
    };
    Ok(())
}

/// A response that should hold one item, possibly numbered.
fn parse_one(response: &str, expected: usize) -> Result<McqBody, ParseReport> {
    match parse_mcq(response, expected) {
        Ok(b) => Ok(b),
        Err(report) => match split_items(response).as_slice() {
            [one] if one != response.trim() => parse_mcq(one, expected),
            _ => Err(report),
        },
    }
}

pub(super) fn one_step_outcome(session: PipelineSession) -> OneStepOutcome {
    let drafts = session.items.values().cloned().collect();
    let reports = session
        .artifacts
        .candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match &c.outcome {
            CandidateOutcome::Unparsed { report } => Some((i + 1, report.clone())),
            CandidateOutcome::Parsed { .. } => None,
        })
        .collect();
    OneStepOutcome { session, drafts, reports }
}
