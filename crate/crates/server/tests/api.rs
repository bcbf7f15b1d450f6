use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use itemsmith_core::agreement::{cohen_kappa, ContingencyTable};
use itemsmith_core::bank::BankStore;
use itemsmith_core::item_model::{ItemStatus, McqItem, ProvenanceRecord};
use itemsmith_core::pipeline::{Pipeline, SessionStore};
use itemsmith_core::prompts::Templates;
use itemsmith_core::providers::{Backend, MockBackend, ProviderHub, RetryPolicy, Role, TransportError};
use itemsmith_core::samples;
use itemsmith_core::similarity::{pairwise_matrix, FeatureKind, FeatureSet, SimilarityMatrix, TverskyParams};
use itemsmith_server::{router, AppState, ErrorBody};

fn roles() -> Vec<Role> {
    let mut roles = vec![Role::ConceptMapper, Role::QuestionWriter, Role::Evaluator, Role::FeatureExtractor];
    roles.extend(Role::item_writers(4));
    roles
}

/// Sleeps before answering, to push stages past the request timeout.
struct Slow {
    inner: Arc<MockBackend>,
    delay: Duration,
}

#[async_trait]
impl Backend for Slow {
    fn name(&self) -> &str {
        "slow"
    }

    async fn complete(&self, prompt: &str, context: Option<&str>) -> Result<String, TransportError> {
        tokio::time::sleep(self.delay).await;
        self.inner.complete(prompt, context).await
    }
}

struct App {
    router: Router,
    state: Arc<AppState>,
    mocks: Vec<(Role, Arc<MockBackend>)>,
}

fn build(delay: Option<Duration>, timeout: Duration, token: Option<&str>) -> App {
    let mut hub = ProviderHub::new().with_retry(RetryPolicy::immediate(1));
    let mut mocks = Vec::new();
    for role in roles() {
        let mock = Arc::new(MockBackend::new("mock"));
        mock.load(samples::builtin_fixtures(&role)).unwrap();
        let backend: Arc<dyn Backend> = match delay {
            Some(delay) => Arc::new(Slow { inner: mock.clone(), delay }),
            None => mock.clone(),
        };
        hub = hub.with_role(role.clone(), backend);
        mocks.push((role, mock));
    }
    let pipeline = Pipeline::new(Arc::new(hub), Arc::new(Templates::bundled()));
    let state = AppState::new(Arc::new(pipeline), Arc::new(SessionStore::new()), Arc::new(BankStore::new()))
        .with_stage_timeout(timeout)
        .with_token(token.map(String::from));
    let state = Arc::new(state);
    App { router: router(state.clone()), state, mocks }
}

fn app() -> App {
    build(None, Duration::from_secs(10), None)
}

struct Reply {
    status: StatusCode,
    body: Value,
    raw: String,
    replay: bool,
}

impl App {
    async fn send(&self, method: &str, path: &str, body: Option<Value>, headers: &[(&str, &str)]) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let replay = resp.headers().contains_key("idempotent-replay");
        let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let raw = String::from_utf8(bytes.to_vec()).unwrap();
        let body = serde_json::from_str(&raw).unwrap_or(Value::Null);
        Reply { status, body, raw, replay }
    }

    async fn get(&self, path: &str) -> Reply {
        self.send("GET", path, None, &[]).await
    }

    async fn post(&self, path: &str, body: Value) -> Reply {
        self.send("POST", path, Some(body), &[]).await
    }

    fn mock(&self, role: &Role) -> &Arc<MockBackend> {
        &self.mocks.iter().find(|(r, _)| r == role).unwrap().1
    }
}

fn lo_body() -> Value {
    json!({
        "mode": "prototype",
        "input": {
            "kind": "learning_objective",
            "body": samples::LEARNING_OBJECTIVE,
            "discipline": samples::PHOTOSYNTHESIS_DISCIPLINE,
            "education_level": samples::PHOTOSYNTHESIS_LEVEL,
        }
    })
}

fn select(gate: &str, selection: Value) -> Value {
    json!({ "gate": gate, "action": "select", "selection": selection, "reviewer": "r" })
}

/// Creates a prototype session and walks it to G3.
async fn at_g3(app: &App) -> (String, Vec<String>) {
    let created = app.post("/sessions", lo_body()).await;
    assert_eq!(created.status, StatusCode::CREATED, "{}", created.raw);
    let id = created.body["id"].as_str().unwrap().to_string();
    let g2 = app.post(&format!("/sessions/{id}/gate"), select("G1_concept_map", json!("Ecological Roles"))).await;
    assert_eq!(g2.status, StatusCode::OK, "{}", g2.raw);
    let g3 = app.post(&format!("/sessions/{id}/gate"), select("G2_question_answer", json!(2))).await;
    assert_eq!(g3.status, StatusCode::OK, "{}", g3.raw);
    assert_eq!(g3.body["stage"], "gate_G3");
    let items = g3.body["items"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap().to_string()).collect();
    (id, items)
}

fn error(reply: &Reply) -> ErrorBody {
    serde_json::from_value(reply.body.clone()).unwrap_or_else(|_| panic!("not an error body: {}", reply.raw))
}

#[tokio::test]
async fn creating_a_session_stops_at_the_first_gate() {
    let app = app();
    let r = app.post("/sessions", lo_body()).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.body["stage"], "gate_G1");
    assert_eq!(r.body["pending_gate"], "G1_concept_map");
    assert_eq!(r.body["mode"], "prototype");
    assert!(r.body["artifacts"]["concept_map"].as_str().unwrap().contains("Ecological Roles"));
    assert!(r.body["artifacts"]["top_level_concepts"].as_array().unwrap().iter().any(|c| c == "Ecological Roles"));
    assert_eq!(r.body["allowed_actions"], json!(["approve", "edit", "select", "reject"]));

    let id = r.body["id"].as_str().unwrap();
    let again = app.get(&format!("/sessions/{id}")).await;
    assert_eq!(again.status, StatusCode::OK);
    assert_eq!(again.body, r.body);
    let list = app.get("/sessions").await;
    assert_eq!(list.body.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn request_validation_errors() {
    let app = app();
    let mut body = lo_body();
    body["input"]["body"] = json!("  ");
    let r = app.post("/sessions", body).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(error(&r).code, "validation");

    let r = app.post("/sessions", json!({ "mode": "prototype" })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = app.send("POST", "/sessions", None, &[("content-type", "application/json")]).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(error(&r).code, "validation");

    let r = app.get("/sessions/session-nope").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(error(&r).detail["id"], "session-nope");
    assert_eq!(app.get("/items/item-nope/quality").await.status, StatusCode::NOT_FOUND);
    assert_eq!(app.get("/banks/nope").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn gate_errors_map_to_status_codes() {
    let app = app();
    let id = app.post("/sessions", lo_body()).await.body["id"].as_str().unwrap().to_string();
    let path = format!("/sessions/{id}/gate");

    let r = app.post(&path, select("G2_question_answer", json!(1))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(error(&r).code, "wrong_gate");

    let r = app.post(&path, select("G1_concept_map", json!(99))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(error(&r).code, "selection_out_of_range");

    let r = app.post(&path, select("G1_concept_map", json!("Quantum Chromodynamics"))).await;
    assert_eq!(error(&r).code, "selection_not_found");

    let reject = json!({ "gate": "G1_concept_map", "action": "reject", "reason": "off topic", "reviewer": "r" });
    let r = app.post(&path, reject).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body["stage"], "rejected");
    assert_eq!(r.body["allowed_actions"], json!([]));

    let r = app.post(&path, select("G1_concept_map", json!("Ecological Roles"))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(error(&r).code, "session_closed");
}

#[tokio::test]
async fn full_run_with_quality_and_audit() {
    let app = app();
    let (id, items) = at_g3(&app).await;
    assert_eq!(items.len(), 4);
    let view = app.get(&format!("/sessions/{id}")).await.body;
    for (item, expected) in view["items"].as_array().unwrap().iter().zip(samples::FINAL_ITEMS) {
        let norm = |t: &str| t.split_whitespace().collect::<Vec<_>>().join(" ");
        assert_eq!(norm(item["text"].as_str().unwrap()), norm(expected));
        assert_eq!(item["status"], "under_review");
        assert_eq!(item["budget"], json!({ "adjustment_prompts_used": 0, "manual_words_edited": 0 }));
        assert!(item["quality"].is_null());
        assert!(!item["quality_missing"].as_array().unwrap().is_empty());
    }

    let q = app.get(&format!("/items/{}/quality", items[2])).await;
    assert_eq!(q.status, StatusCode::OK);
    assert!(q.body["report"].is_null());
    assert!(q.body["missing"].as_array().unwrap().iter().any(|m| m == "C9 semantic"));

    let ev = app.post(&format!("/items/{}/evaluate", items[2]), json!({})).await;
    assert_eq!(ev.status, StatusCode::OK, "{}", ev.raw);
    assert_eq!(ev.body.as_array().unwrap().len(), 8);
    let q = app.get(&format!("/items/{}/quality", items[2])).await;
    assert_eq!(q.body["compact"], "acceptable");

    let human = json!({ "reviewer": "teacher", "verdicts": [{ "criterion": 4, "verdict": "fail", "rationale": "clue" }] });
    let r = app.post(&format!("/items/{}/verdicts", items[2]), human).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let q = app.get(&format!("/items/{}/quality", items[2])).await;
    assert_eq!(q.body["compact"], "4");

    let done = app.post(&format!("/sessions/{id}/gate"), json!({ "gate": "G3_item", "action": "approve", "reviewer": "r" })).await;
    assert_eq!(done.status, StatusCode::OK);
    assert_eq!(done.body["stage"], "completed");
    assert!(done.body["items"].as_array().unwrap().iter().all(|i| i["status"] == "accepted"));

    let audit = app.get(&format!("/sessions/{id}/audit")).await;
    assert_eq!(audit.status, StatusCode::OK);
    let transcripts = audit.body["transcripts"].as_array().unwrap().len();
    let dispatches = audit.body["session"]["timeline"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["event"] == "dispatch")
        .count();
    // concept map, questions, four writers, one evaluation
    assert_eq!((transcripts, dispatches), (7, 7));
    assert_eq!(app.get("/sessions/session-missing/audit").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn untouched_session_audit_has_only_the_first_stage() {
    let app = app();
    let id = app.post("/sessions", lo_body()).await.body["id"].as_str().unwrap().to_string();
    let audit = app.get(&format!("/sessions/{id}/audit")).await;
    assert_eq!(audit.body["transcripts"].as_array().unwrap().len(), 1);
    assert_eq!(audit.body["session"]["gate_log"], json!([]));
}

#[tokio::test]
async fn adjustment_and_edit_budgets() {
    let app = app();
    let (_, items) = at_g3(&app).await;
    let item = &items[0];
    for used in 1..=4 {
        let r = app.post(&format!("/items/{item}/adjust"), json!({ "criterion": 9 })).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.raw);
        let it = r.body["items"].as_array().unwrap().iter().find(|i| i["id"] == item.as_str()).unwrap().clone();
        assert_eq!(it["budget"]["adjustment_prompts_used"], used);
    }
    let r = app.post(&format!("/items/{item}/adjust"), json!({ "criterion": 9 })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error(&r).code, "budget_exhausted");
    assert_eq!(app.post(&format!("/items/{item}/adjust"), json!({ "criterion": 12 })).await.status, StatusCode::BAD_REQUEST);

    let other = &items[1];
    let current = samples::FINAL_ITEMS[1].to_string();
    let words: Vec<&str> = current.split_whitespace().collect();
    let eleven = words.iter().enumerate().map(|(i, w)| if (3..14).contains(&i) { "zzz" } else { w }).collect::<Vec<_>>().join(" ");

    let preview = app.post(&format!("/items/{other}/edit"), json!({ "text": eleven, "preview": true })).await;
    assert_eq!(preview.status, StatusCode::OK);
    assert_eq!(preview.body["word_delta"], 11);
    assert_eq!(preview.body["within_budget"], false);

    let r = app.post(&format!("/items/{other}/edit"), json!({ "text": eleven })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error(&r).detail, json!({ "used": 0, "requested": 11, "cap": 10 }));
    let r = app.post(&format!("/items/{other}/edit"), json!({ "text": "not an item at all" })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn kappa_endpoint_matches_direct_calls() {
    let app = app();
    for (a, b, c, d) in [(18, 0, 18, 22), (11, 7, 5, 35)] {
        let r = app.post("/metrics/kappa", json!({ "table": { "a": a, "b": b, "c": c, "d": d } })).await;
        assert_eq!(r.status, StatusCode::OK);
        let direct = cohen_kappa(&ContingencyTable::new(a, b, c, d)).unwrap();
        assert_eq!(r.body["kappa"].as_f64().unwrap().to_bits(), direct.kappa.to_bits());
        assert_eq!(r.body["p_o"].as_f64().unwrap().to_bits(), direct.p_o.to_bits());
        assert_eq!(r.body["p_e"].as_f64().unwrap().to_bits(), direct.p_e.to_bits());
    }
    let r = app.post("/metrics/kappa", json!({ "table": { "a": 18, "b": 0, "c": 18, "d": 22 } })).await;
    assert!((r.body["kappa"].as_f64().unwrap() - 0.432).abs() <= 0.001);
    assert_eq!(r.body["band"], "moderate");

    let paired = json!({ "human": { "x": true, "y": false, "z": true }, "machine": { "x": true, "y": true, "z": false } });
    let r = app.post("/metrics/kappa", paired).await;
    assert_eq!(r.body["table"], json!({ "a": 1, "b": 1, "c": 1, "d": 0 }));
    let r = app.post("/metrics/kappa", json!({ "human": { "x": true }, "machine": { "y": true } })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = app.post("/metrics/kappa", json!({ "table": { "a": 7, "b": 0, "c": 0, "d": 0 } })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn similarity_endpoint_matches_direct_calls() {
    let app = app();
    let sets: Vec<FeatureSet> = samples::herd_feature_lists()
        .into_iter()
        .enumerate()
        .map(|(i, f)| FeatureSet::contextual(itemsmith_core::item_model::ItemId(format!("MCQ{}", i + 1)), f))
        .collect();
    for params in [TverskyParams::default(), TverskyParams { theta: 0.7, alpha: 0.3, beta: 0.9 }] {
        let r = app.post("/metrics/similarity", json!({ "kind": "contextual", "feature_sets": sets, "params": params })).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.raw);
        let got: SimilarityMatrix = serde_json::from_value(r.body["matrix"].clone()).unwrap();
        let direct = pairwise_matrix(&sets, FeatureKind::Contextual, &params).unwrap();
        let bits = |m: &SimilarityMatrix| m.values.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&got), bits(&direct));
        assert_eq!(got.item_ids, direct.item_ids);
    }

    let (_, items) = at_g3(&app).await;
    let r = app.post("/metrics/similarity", json!({ "kind": "linguistic", "item_ids": items })).await;
    assert_eq!(r.status, StatusCode::OK);
    let m: SimilarityMatrix = serde_json::from_value(r.body["matrix"].clone()).unwrap();
    assert!(m.is_symmetric());
    assert!(r.body["summary"]["all_pairs"].is_object());

    let r = app.post("/metrics/similarity", json!({ "kind": "contextual", "item_ids": items })).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(error(&r).code, "missing_features");
    for id in &items {
        let f = app.post(&format!("/items/{id}/features"), json!({ "features": ["Urban park", "Carbon"] })).await;
        assert_eq!(f.status, StatusCode::OK);
        assert_eq!(f.body["features"], json!(["carbon", "urban park"]));
    }
    let r = app.post("/metrics/similarity", json!({ "kind": "contextual", "item_ids": items })).await;
    assert_eq!(r.body["matrix"]["values"][0][1], 2.0);
    let r = app.post("/metrics/similarity", json!({ "kind": "contextual", "item_ids": items[..1] })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

fn herd_prototype() -> McqItem {
    let mut item = McqItem::new(samples::herd_items()[0].clone(), ProvenanceRecord::human())
        .with_context("biology", "undergraduate", samples::HERD_CONCEPT);
    item.status = ItemStatus::Accepted;
    item
}

#[tokio::test]
async fn bank_lifecycle_over_http() {
    let app = app();
    let proto = herd_prototype();
    let series = app.post("/sessions", json!({ "mode": "series_example_based", "prototype": proto, "count": 5 })).await;
    assert_eq!(series.status, StatusCode::CREATED, "{}", series.raw);
    let sid = series.body["id"].as_str().unwrap().to_string();
    let ids: Vec<String> =
        series.body["items"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap().to_string()).collect();
    assert_eq!(ids.len(), 5);

    assert_eq!(app.post("/banks", json!({ "id": "bio", "discipline": "biology" })).await.status, StatusCode::CREATED);
    let slot = app.post("/banks/bio/prototypes", json!({ "concept": "Herd immunity", "item": proto })).await;
    assert_eq!(slot.status, StatusCode::CREATED, "{}", slot.raw);

    let r = app.post("/banks/bio/series", json!({ "concept": "Herd immunity", "item_ids": ids })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error(&r).code, "not_accepted");

    let r = app.post(&format!("/sessions/{sid}/gate"), json!({ "gate": "G3_item", "action": "approve", "reviewer": "r" })).await;
    assert_eq!(r.body["stage"], "completed");
    let r = app.post("/banks/bio/series", json!({ "concept": "Herd immunity", "item_ids": ids })).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.raw);
    assert_eq!(r.body["series_ids"].as_array().unwrap().len(), 5);
    assert_eq!(r.body["evidence_refs"].as_array().unwrap().len(), 2);

    let v = app.post("/banks/bio/variants", json!({ "n": 5, "seed": 3 })).await;
    assert_eq!(v.status, StatusCode::OK);
    let variants = v.body.as_array().unwrap();
    assert_eq!(variants.len(), 5);
    assert!(variants.iter().all(|v| !v["exam_sheet"].as_str().unwrap().contains("(correct)")));
    let r = app.post("/banks/bio/variants", json!({ "n": 6 })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error(&r).code, "infeasible");

    let export = app.get("/banks/bio/export").await;
    assert_eq!(export.status, StatusCode::OK);
    let mut copy = export.body.clone();
    copy["id"] = json!("bio-copy");
    let r = app.send("POST", "/banks/import", Some(copy), &[]).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.raw);
    assert_eq!(app.get("/banks").await.body, json!(["bio", "bio-copy"]));
    let r = app.send("POST", "/banks/import", Some(json!({ "id": "broken" })), &[]).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let q = app.get(&format!("/items/{}/quality", ids[0])).await;
    assert_eq!(q.status, StatusCode::OK);
}

#[tokio::test]
async fn idempotent_replay() {
    let app = app();
    let key = [("idempotency-key", "k-1")];
    let first = app.send("POST", "/banks", Some(json!({ "id": "b", "discipline": "x" })), &key).await;
    let second = app.send("POST", "/banks", Some(json!({ "id": "b", "discipline": "x" })), &key).await;
    assert_eq!(first.status, StatusCode::CREATED);
    assert_eq!((second.status, &second.raw), (StatusCode::CREATED, &first.raw));
    assert!(second.replay && !first.replay);
    let fresh = app.post("/banks", json!({ "id": "b", "discipline": "x" })).await;
    assert_eq!(fresh.status, StatusCode::CONFLICT);

    let created = app.send("POST", "/sessions", Some(lo_body()), &[("idempotency-key", "s")]).await;
    let replayed = app.send("POST", "/sessions", Some(lo_body()), &[("idempotency-key", "s")]).await;
    assert_eq!(created.raw, replayed.raw);
    assert_eq!(app.get("/sessions").await.body.as_array().unwrap().len(), 1);

    let id = created.body["id"].as_str().unwrap();
    let path = format!("/sessions/{id}/gate");
    let decision = select("G1_concept_map", json!("Ecological Roles"));
    let a = app.send("POST", &path, Some(decision.clone()), &[("idempotency-key", "g")]).await;
    let b = app.send("POST", &path, Some(decision.clone()), &[("idempotency-key", "g")]).await;
    assert_eq!((a.status, b.status), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a.raw, b.raw);
    let c = app.post(&path, decision).await;
    assert_eq!(c.status, StatusCode::CONFLICT);
    assert_eq!(app.get(&format!("/sessions/{id}")).await.body["gate_log"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn slow_stages_answer_202_and_hold_the_writer() {
    let app = build(Some(Duration::from_millis(400)), Duration::from_millis(50), None);
    let r = app.post("/sessions", lo_body()).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    assert_eq!(r.body["stage"], "awaiting_concept_map");
    let id = r.body["id"].as_str().unwrap().to_string();

    let busy = app.post(&format!("/sessions/{id}/gate"), select("G1_concept_map", json!("Ecological Roles"))).await;
    assert_eq!(busy.status, StatusCode::CONFLICT);
    assert_eq!(error(&busy).code, "conflict");

    let mut stage = Value::Null;
    for _ in 0..100 {
        tokio::time::sleep(Duration::from_millis(20)).await;
        stage = app.get(&format!("/sessions/{id}")).await.body["stage"].clone();
        if stage == "gate_G1" {
            break;
        }
    }
    assert_eq!(stage, "gate_G1");
    let r = app.post(&format!("/sessions/{id}/gate"), select("G1_concept_map", json!("Ecological Roles"))).await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    assert_eq!(r.body["stage"], "awaiting_questions");
}

#[tokio::test]
async fn provider_failure_then_resume() {
    let app = app();
    app.mock(&Role::ConceptMapper).fail_next(2);
    let r = app.post("/sessions", lo_body()).await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    let e = error(&r);
    assert_eq!(e.code, "provider_failure");
    assert_eq!(e.detail["failed_stage"], "awaiting_concept_map");
    let id = e.detail["session_id"].as_str().unwrap().to_string();
    assert_eq!(app.get(&format!("/sessions/{id}")).await.body["stage"], "failed");

    let r = app.send("POST", &format!("/sessions/{id}/resume"), None, &[]).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.raw);
    assert_eq!(r.body["stage"], "gate_G1");
    let r = app.send("POST", &format!("/sessions/{id}/resume"), None, &[]).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(error(&r).code, "not_resumable");
    assert_eq!(app.state.pipeline.hub().transcripts().len(), 1);
}

#[tokio::test]
async fn bearer_token_guards_everything_but_health() {
    let app = build(None, Duration::from_secs(5), Some("s3cret"));
    assert_eq!(app.get("/health").await.status, StatusCode::OK);
    let r = app.get("/sessions").await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(error(&r).code, "unauthorized");
    let wrong = app.send("GET", "/sessions", None, &[("authorization", "Bearer nope")]).await;
    assert_eq!(wrong.status, StatusCode::UNAUTHORIZED);
    let ok = app.send("GET", "/sessions", None, &[("authorization", "Bearer s3cret")]).await;
    assert_eq!(ok.status, StatusCode::OK);
}
