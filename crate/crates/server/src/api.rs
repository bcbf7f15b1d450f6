use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, State};
use axum::http::{header, StatusCode};
use axum::middleware::from_fn_with_state;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use itemsmith_core::agreement::{build_contingency, cohen_kappa, ContingencyTable};
use itemsmith_core::bank::{ConceptSlot, ItemBank, ReuseMode};
use itemsmith_core::item_model::{parse_mcq, word_edit_distance, ItemId, ItemStatus, McqItem, SessionId};
use itemsmith_core::pipeline::{
    AuditBundle, GateDecision, GenerationInput, PipelineError, PipelineSession, SeriesMode, SessionMode, Stage,
    WriteGuard,
};
use itemsmith_core::quality::{
    aggregate, deterministic_verdicts, evaluate_semantic_criteria, semantic_criteria, CriterionId, CriterionVerdict,
    QualityError, QualityReport, Verdict,
};
use itemsmith_core::similarity::{
    comparison_text, conceptual_match, extract_contextual_features, pairwise_matrix, ConceptualMatchReport,
    FeatureKind, FeatureSet, MatrixSummary, SimilarityMatrix, TokenPolicy, TverskyParams,
};

use crate::error::ApiError;
use crate::state::{idempotency, require_token, AppState};
use crate::view::ApiSessionView;

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Response, ApiError>;

/// JSON body whose rejections use the API error shape.
#[derive(FromRequest)]
#[from_request(via(Json), rejection(ApiError))]
pub struct Body<T>(pub T);

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/gate", post(gate))
        .route("/sessions/:id/resume", post(resume))
        .route("/sessions/:id/audit", get(audit))
        .route("/items/:id/adjust", post(adjust))
        .route("/items/:id/edit", post(edit))
        .route("/items/:id/quality", get(quality))
        .route("/items/:id/evaluate", post(evaluate))
        .route("/items/:id/verdicts", post(add_verdicts))
        .route("/items/:id/features", post(features))
        .route("/metrics/similarity", post(similarity))
        .route("/metrics/kappa", post(kappa))
        .route("/banks", get(list_banks).post(create_bank))
        .route("/banks/import", post(import_bank))
        .route("/banks/:id", get(get_bank))
        .route("/banks/:id/export", get(export_bank))
        .route("/banks/:id/prototypes", post(add_prototype))
        .route("/banks/:id/series", post(add_series))
        .route("/banks/:id/variants", post(variants))
        .layer(from_fn_with_state(state.clone(), idempotency))
        .layer(from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

fn view(state: &AppState, session: &PipelineSession) -> ApiSessionView {
    ApiSessionView::of(session, &state.lexicon, state.policy)
}

fn session_id(id: String) -> SessionId {
    SessionId(id)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Serialize)]
struct SessionSummary {
    id: SessionId,
    mode: SessionMode,
    stage: Stage,
}

async fn list_sessions(State(state): Shared) -> Json<Vec<SessionSummary>> {
    let list = state
        .sessions
        .ids()
        .into_iter()
        .filter_map(|id| state.sessions.get(&id))
        .map(|s| SessionSummary { id: s.id, mode: s.mode, stage: s.stage })
        .collect();
    Json(list)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub mode: SessionMode,
    #[serde(default)]
    pub input: Option<GenerationInput>,
    #[serde(default)]
    pub prototype_id: Option<ItemId>,
    #[serde(default)]
    pub prototype: Option<McqItem>,
    #[serde(default)]
    pub count: Option<u32>,
}

async fn create_session(State(state): Shared, Body(req): Body<CreateSession>) -> ApiResult {
    let pipeline = &state.pipeline;
    let session = match req.mode {
        SessionMode::Prototype | SessionMode::OneStep => {
            let input = req.input.ok_or_else(|| ApiError::bad_request("`input` is required for this mode"))?;
            if req.mode == SessionMode::Prototype {
                pipeline.new_prototype_session(input)?
            } else {
                pipeline.new_one_step_session(input)?
            }
        }
        SessionMode::SeriesExampleBased | SessionMode::SeriesConceptDerived => {
            let prototype = match (req.prototype, req.prototype_id) {
                (Some(item), None) => item,
                (None, Some(id)) => state.find_item(&id)?,
                _ => return Err(ApiError::bad_request("give exactly one of `prototype` and `prototype_id`")),
            };
            let mode = if req.mode == SessionMode::SeriesExampleBased {
                SeriesMode::ExampleBased
            } else {
                SeriesMode::ConceptDerived
            };
            pipeline.new_series_session(&prototype, mode, req.count.unwrap_or(5))?
        }
    };
    let id = session.id.clone();
    state.sessions.insert(session)?;
    let guard = state.sessions.write(&id)?;
    drive(&state, guard, StatusCode::CREATED).await
}

/// Runs the stage the session awaits, if any, in a background task that
/// holds the session's writer slot. Answers with `done` when the stage
/// finishes in time and 202 with the last published state otherwise.
async fn drive(state: &Arc<AppState>, mut guard: WriteGuard, done: StatusCode) -> ApiResult {
    if !guard.session.stage.is_awaiting() {
        guard.publish()?;
        return Ok((done, Json(view(state, &guard.session))).into_response());
    }
    let id = guard.session.id.clone();
    let pipeline = state.pipeline.clone();
    let task = tokio::spawn(async move {
        let result = pipeline.advance(&mut guard.session).await;
        let published = guard.publish();
        (result, published, guard.session)
    });
    match tokio::time::timeout(state.stage_timeout, task).await {
        Ok(Ok((result, published, session))) => {
            published?;
            match result {
                Ok(()) => Ok((done, Json(view(state, &session))).into_response()),
                Err(e) => {
                    let stage = session.failure.as_ref().map(|f| f.stage);
                    Err(ApiError::from(e).with_detail(json!({ "session_id": session.id, "failed_stage": stage })))
                }
            }
        }
        Ok(Err(e)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
        Err(_) => {
            let current = state.sessions.get(&id).ok_or_else(|| ApiError::not_found("session", id.as_str()))?;
            Ok((StatusCode::ACCEPTED, Json(view(state, &current))).into_response())
        }
    }
}

async fn get_session(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let session = state.sessions.get(&session_id(id.clone())).ok_or_else(|| ApiError::not_found("session", &id))?;
    Ok(Json(view(&state, &session)).into_response())
}

async fn gate(State(state): Shared, Path(id): Path<String>, Body(decision): Body<GateDecision>) -> ApiResult {
    let mut guard = state.sessions.write(&session_id(id))?;
    state.pipeline.decide(&mut guard.session, decision)?;
    guard.publish()?;
    drive(&state, guard, StatusCode::OK).await
}

async fn resume(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let mut guard = state.sessions.write(&session_id(id))?;
    let s = &mut guard.session;
    match (s.stage, s.failure.take()) {
        (Stage::Failed, Some(f)) => s.stage = f.stage,
        (_, f) => {
            s.failure = f;
            return Err(PipelineError::NotResumable.into());
        }
    }
    guard.publish()?;
    drive(&state, guard, StatusCode::OK).await
}

async fn audit(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let session = state.sessions.get(&session_id(id.clone())).ok_or_else(|| ApiError::not_found("session", &id))?;
    Ok(Json(AuditBundle::build(&session, state.pipeline.hub().transcripts())).into_response())
}

fn item_writer(state: &AppState, item: &ItemId) -> Result<WriteGuard, ApiError> {
    let sid = state.sessions.find_item(item).ok_or_else(|| ApiError::not_found("item", item.as_str()))?;
    Ok(state.sessions.write(&sid)?)
}

fn criterion(n: u8) -> Result<CriterionId, ApiError> {
    CriterionId::new(n).ok_or_else(|| ApiError::bad_request(format!("no criterion {n}")))
}

#[derive(Deserialize)]
pub struct AdjustRequest {
    pub criterion: u8,
}

async fn adjust(State(state): Shared, Path(id): Path<String>, Body(req): Body<AdjustRequest>) -> ApiResult {
    let item = ItemId(id);
    let c = criterion(req.criterion)?;
    let mut guard = item_writer(&state, &item)?;
    let run = state.pipeline.apply_adjustment_prompt(&mut guard.session, &item, c);
    let result = tokio::time::timeout(state.stage_timeout, run)
        .await
        .map_err(|_| ApiError::new(StatusCode::GATEWAY_TIMEOUT, "stage_timeout", "the revision did not arrive in time"))?;
    match result {
        Ok(_) => {
            guard.publish()?;
            Ok(Json(view(&state, &guard.session)).into_response())
        }
        Err(e @ PipelineError::RevisionUnparseable(_)) => {
            guard.publish()?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Deserialize)]
pub struct EditRequest {
    pub text: String,
    #[serde(default)]
    pub preview: bool,
}

#[derive(Serialize)]
struct EditPreview {
    word_delta: u32,
    used: u32,
    cap: u32,
    within_budget: bool,
    parse_issues: Vec<String>,
}

async fn edit(State(state): Shared, Path(id): Path<String>, Body(req): Body<EditRequest>) -> ApiResult {
    let item = ItemId(id);
    if req.preview {
        let sid = state.sessions.find_item(&item).ok_or_else(|| ApiError::not_found("item", item.as_str()))?;
        let session = state.sessions.get(&sid).ok_or_else(|| ApiError::not_found("item", item.as_str()))?;
        let config = state.pipeline.config();
        let delta = word_edit_distance(&session.items[&item].render(), &req.text) as u32;
        let used = session.budget(&item).manual_words_edited;
        let parse_issues = match parse_mcq(&req.text, config.expected_options) {
            Ok(_) => Vec::new(),
            Err(r) => r.issues.iter().map(ToString::to_string).collect(),
        };
        let preview = EditPreview {
            word_delta: delta,
            used,
            cap: config.max_manual_words,
            within_budget: used + delta <= config.max_manual_words,
            parse_issues,
        };
        return Ok(Json(preview).into_response());
    }
    let mut guard = item_writer(&state, &item)?;
    state.pipeline.apply_manual_edit(&mut guard.session, &item, &req.text)?;
    guard.publish()?;
    Ok(Json(view(&state, &guard.session)).into_response())
}

#[derive(Serialize)]
struct QualityView {
    item_id: ItemId,
    status: ItemStatus,
    /// Present once every criterion has a verdict.
    report: Option<QualityReport>,
    compact: Option<String>,
    missing: Vec<String>,
    verdicts: Vec<CriterionVerdict>,
}

fn stored_verdicts(state: &AppState, item: &ItemId) -> Vec<CriterionVerdict> {
    state
        .sessions
        .find_item(item)
        .and_then(|sid| state.sessions.get(&sid))
        .and_then(|s| s.verdicts.get(item).cloned())
        .unwrap_or_default()
}

async fn quality(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let id = ItemId(id);
    let item = state.find_item(&id)?;
    let mut verdicts = deterministic_verdicts(&item.body, &state.lexicon);
    verdicts.extend(stored_verdicts(&state, &id));
    let (report, missing) = match aggregate(&id, &verdicts, state.policy) {
        Ok(r) => (Some(r), Vec::new()),
        Err(QualityError::MissingCoverage(m)) => (None, m),
        Err(e) => return Err(e.into()),
    };
    let compact = report.as_ref().map(QualityReport::compact);
    Ok(Json(QualityView { item_id: id, status: item.status, report, compact, missing, verdicts }).into_response())
}

fn store_verdicts(state: &AppState, item: &ItemId, verdicts: &[CriterionVerdict]) -> Result<(), ApiError> {
    let Some(sid) = state.sessions.find_item(item) else { return Ok(()) };
    let mut guard = state.sessions.write(&sid)?;
    guard.session.record_verdicts(item, verdicts);
    guard.publish()?;
    Ok(())
}

#[derive(Deserialize, Default)]
pub struct EvaluateRequest {
    #[serde(default)]
    pub criteria: Option<Vec<u8>>,
}

async fn evaluate(State(state): Shared, Path(id): Path<String>, Body(req): Body<EvaluateRequest>) -> ApiResult {
    let id = ItemId(id);
    let item = state.find_item(&id)?;
    let criteria = match req.criteria {
        Some(list) => list.into_iter().map(criterion).collect::<Result<Vec<_>, _>>()?,
        None => semantic_criteria(),
    };
    let verdicts = evaluate_semantic_criteria(
        state.pipeline.hub(),
        state.pipeline.templates(),
        &item.body,
        &criteria,
        &state.evaluator,
        item.provenance.session_id.as_ref(),
    )
    .await?;
    store_verdicts(&state, &id, &verdicts)?;
    Ok(Json(verdicts).into_response())
}

#[derive(Deserialize)]
pub struct HumanVerdict {
    pub criterion: u8,
    pub verdict: Verdict,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Deserialize)]
pub struct VerdictsRequest {
    pub reviewer: String,
    pub verdicts: Vec<HumanVerdict>,
}

async fn add_verdicts(State(state): Shared, Path(id): Path<String>, Body(req): Body<VerdictsRequest>) -> ApiResult {
    let id = ItemId(id);
    state.find_item(&id)?;
    if state.sessions.find_item(&id).is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "not_in_session", "verdicts are stored with session items only"));
    }
    let verdicts = req
        .verdicts
        .iter()
        .map(|v| Ok(CriterionVerdict::human(criterion(v.criterion)?, v.verdict, &req.reviewer, &v.rationale)))
        .collect::<Result<Vec<_>, ApiError>>()?;
    store_verdicts(&state, &id, &verdicts)?;
    Ok((StatusCode::CREATED, Json(verdicts)).into_response())
}

#[derive(Deserialize)]
pub struct FeaturesRequest {
    /// Reviewer-supplied features; these override any extracted set.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    /// Concept named in the extraction prompt; defaults to the item topic.
    #[serde(default)]
    pub concept: Option<String>,
}

async fn features(State(state): Shared, Path(id): Path<String>, Body(req): Body<FeaturesRequest>) -> ApiResult {
    let id = ItemId(id);
    let item = state.find_item(&id)?;
    let set = match req.features {
        Some(list) => {
            let set = FeatureSet::contextual(id, list);
            state.features.write().unwrap().put_override(set.clone());
            set
        }
        None => {
            let concept = req.concept.unwrap_or_else(|| item.topic.clone());
            let set = extract_contextual_features(
                state.pipeline.hub(),
                state.pipeline.templates(),
                &id,
                &item.body,
                &concept,
                &state.feature_extractor,
                item.provenance.session_id.as_ref(),
            )
            .await?;
            state.features.write().unwrap().put_extracted(set.clone());
            state.features.read().unwrap().get(&id, FeatureKind::Contextual).cloned().unwrap_or(set)
        }
    };
    Ok(Json(set).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityRequest {
    pub kind: FeatureKind,
    #[serde(default)]
    pub item_ids: Vec<ItemId>,
    /// Inline feature sets, used instead of `item_ids`.
    #[serde(default)]
    pub feature_sets: Vec<FeatureSet>,
    #[serde(default)]
    pub params: TverskyParams,
    #[serde(default)]
    pub token_policy: TokenPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResponse {
    pub matrix: SimilarityMatrix,
    pub summary: Option<MatrixSummary>,
}

async fn similarity(State(state): Shared, Body(req): Body<SimilarityRequest>) -> ApiResult {
    let sets = match (req.feature_sets.is_empty(), req.item_ids.is_empty()) {
        (false, true) => req.feature_sets,
        (true, false) => match req.kind {
            FeatureKind::Contextual => state.features.read().unwrap().collect(&req.item_ids, FeatureKind::Contextual)?,
            FeatureKind::Linguistic => req
                .item_ids
                .iter()
                .map(|id| {
                    let item = state.find_item(id)?;
                    let text = comparison_text(&item.body, &req.token_policy);
                    Ok(FeatureSet::linguistic(id.clone(), &text, &req.token_policy)?)
                })
                .collect::<Result<Vec<_>, ApiError>>()?,
        },
        _ => return Err(ApiError::bad_request("give exactly one of `item_ids` and `feature_sets`")),
    };
    let matrix = pairwise_matrix(&sets, req.kind, &req.params)?;
    let summary = matrix.summary();
    Ok(Json(SimilarityResponse { matrix, summary }).into_response())
}

#[derive(Deserialize)]
#[serde(untagged)]
pub enum KappaRequest {
    Table { table: ContingencyTable },
    Paired { human: BTreeMap<String, bool>, machine: BTreeMap<String, bool> },
}

async fn kappa(Body(req): Body<KappaRequest>) -> ApiResult {
    let table = match req {
        KappaRequest::Table { table } => table,
        KappaRequest::Paired { human, machine } => build_contingency(&human, &machine)?,
    };
    let r = cohen_kappa(&table)?;
    Ok(Json(json!({
        "table": table,
        "n": table.n(),
        "p_o": r.p_o,
        "p_e": r.p_e,
        "kappa": r.kappa,
        "band": r.band,
        "band_label": r.band.label(),
    }))
    .into_response())
}

async fn list_banks(State(state): Shared) -> Json<Vec<String>> {
    Json(state.banks.ids())
}

#[derive(Deserialize)]
pub struct CreateBank {
    pub id: String,
    pub discipline: String,
}

async fn create_bank(State(state): Shared, Body(req): Body<CreateBank>) -> ApiResult {
    if req.id.trim().is_empty() {
        return Err(ApiError::bad_request("bank id is empty"));
    }
    let bank = state.banks.create(ItemBank::new(&req.id, &req.discipline))?;
    Ok((StatusCode::CREATED, Json(&*bank)).into_response())
}

async fn import_bank(State(state): Shared, text: String) -> ApiResult {
    let bank = state.banks.create(ItemBank::import_json(&text)?)?;
    Ok((StatusCode::CREATED, Json(&*bank)).into_response())
}

async fn get_bank(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    Ok(Json(&*state.banks.snapshot(&id)?).into_response())
}

async fn export_bank(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let text = state.banks.snapshot(&id)?.export_json();
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddPrototype {
    pub concept: String,
    #[serde(default)]
    pub item_id: Option<ItemId>,
    #[serde(default)]
    pub item: Option<McqItem>,
}

fn pick_item(state: &AppState, id: Option<ItemId>, item: Option<McqItem>) -> Result<McqItem, ApiError> {
    match (item, id) {
        (Some(item), None) => Ok(item),
        (None, Some(id)) => state.find_item(&id),
        _ => Err(ApiError::bad_request("give exactly one of `item` and `item_id`")),
    }
}

async fn add_prototype(State(state): Shared, Path(id): Path<String>, Body(req): Body<AddPrototype>) -> ApiResult {
    let item = pick_item(&state, req.item_id, req.item)?;
    let (slot, _) = state.banks.transact(&id, |b| b.add_prototype(&req.concept, item).cloned())?;
    Ok((StatusCode::CREATED, Json(slot)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddSeries {
    pub concept: String,
    #[serde(default)]
    pub item_ids: Vec<ItemId>,
    #[serde(default)]
    pub items: Vec<McqItem>,
    /// Conceptual-match evidence; judged by the evaluator role when absent.
    #[serde(default)]
    pub evidence: Option<ConceptualMatchReport>,
    #[serde(default = "yes")]
    pub linguistic_matrix: bool,
}

fn yes() -> bool {
    true
}

async fn add_series(State(state): Shared, Path(id): Path<String>, Body(req): Body<AddSeries>) -> ApiResult {
    let mut items = req.items;
    for item_id in &req.item_ids {
        items.push(state.find_item(item_id)?);
    }
    if items.is_empty() {
        return Err(ApiError::bad_request("no series items given"));
    }
    let evidence = match req.evidence {
        Some(e) => e,
        None => {
            let bank = state.banks.snapshot(&id)?;
            let slot: &ConceptSlot =
                bank.slot(&req.concept).ok_or_else(|| ApiError::not_found("slot", &req.concept))?;
            let proto = &bank.items[&slot.prototype_id];
            let candidates: Vec<_> = items.iter().map(|i| (i.id.clone(), i.body.clone())).collect();
            conceptual_match(
                state.pipeline.hub(),
                state.pipeline.templates(),
                &proto.id,
                &proto.body,
                &candidates,
                &state.evaluator,
                None,
            )
            .await?
        }
    };
    let matrix = if req.linguistic_matrix && items.len() >= 2 {
        let policy = TokenPolicy::default();
        let sets = items
            .iter()
            .map(|i| FeatureSet::linguistic(i.id.clone(), &comparison_text(&i.body, &policy), &policy))
            .collect::<Result<Vec<_>, _>>()?;
        Some(pairwise_matrix(&sets, FeatureKind::Linguistic, &TverskyParams::default())?)
    } else {
        None
    };
    let (slot, _) = state.banks.transact(&id, |b| b.attach_series(&req.concept, items, evidence, matrix).cloned())?;
    Ok((StatusCode::CREATED, Json(slot)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantsRequest {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ReuseMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantView {
    pub id: String,
    pub item_ids: Vec<ItemId>,
    pub exam_sheet: String,
    pub answer_key: String,
}

async fn variants(State(state): Shared, Path(id): Path<String>, Body(req): Body<VariantsRequest>) -> ApiResult {
    let bank = state.banks.snapshot(&id)?;
    let list = bank
        .compile_variants(req.n, req.seed, req.mode)?
        .into_iter()
        .map(|v| {
            Ok(VariantView {
                exam_sheet: bank.exam_sheet(&v)?,
                answer_key: bank.answer_key(&v)?,
                id: v.id,
                item_ids: v.item_ids,
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(Json(list).into_response())
}
