use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::extract::State;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tower::ServiceExt;

use itemsmith_core::bank::BankStore;
use itemsmith_core::pipeline::{Pipeline, SessionStore};
use itemsmith_core::prompts::Templates;
use itemsmith_core::providers::{MockBackend, ProviderConfig, Role};
use itemsmith_core::samples;
use itemsmith_server::{router, AppState};

const SECRET: &str = "sk-live-5b1d0c9e-do-not-leak";
const KEY_VAR: &str = "ITEMSMITH_TEST_UPSTREAM_KEY";

struct Upstream {
    answers: MockBackend,
    authorized: AtomicUsize,
}

async fn chat(State(up): State<Arc<Upstream>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    if headers.get("authorization").and_then(|v| v.to_str().ok()) == Some(&format!("Bearer {SECRET}")) {
        up.authorized.fetch_add(1, Ordering::SeqCst);
    }
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    match up.answers.lookup(prompt) {
        Some(answer) => (StatusCode::OK, Json(json!({ "choices": [{ "message": { "content": answer } }] }))),
        None => (StatusCode::BAD_REQUEST, Json(json!({ "error": "no fixture" }))),
    }
}

async fn upstream() -> (String, Arc<Upstream>) {
    let answers = MockBackend::new("upstream");
    for role in [Role::ConceptMapper, Role::QuestionWriter, Role::ItemWriter(1), Role::Evaluator] {
        answers.load(samples::builtin_fixtures(&role)).unwrap();
    }
    let up = Arc::new(Upstream { answers, authorized: AtomicUsize::new(0) });
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(up.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), up)
}

fn config(base_url: &str) -> ProviderConfig {
    let text = format!(
        r#"
[retry]
max_retries = 0
base_delay_ms = 0

[backends.live]
kind = "live"
base_url = "{base_url}"
model = "test-model"
api_key_env = "{KEY_VAR}"

[backends.down]
kind = "live"
base_url = "http://127.0.0.1:9/v1"
model = "test-model"
api_key_env = "{KEY_VAR}"
timeout_ms = 2000

[roles]
concept_mapper = "live"
question_writer = "live"
item_writer_1 = "live"
item_writer_2 = "live"
evaluator = "live"
feature_extractor = "down"
"#
    );
    ProviderConfig::from_toml(&text).unwrap()
}

#[tokio::test]
async fn no_response_carries_the_api_key() {
    std::env::set_var(KEY_VAR, SECRET);
    let (base_url, up) = upstream().await;
    let hub = config(&base_url).build(None).unwrap();
    let pipeline = Pipeline::new(Arc::new(hub), Arc::new(Templates::bundled()));
    let state = AppState::new(Arc::new(pipeline), Arc::new(SessionStore::new()), Arc::new(BankStore::new()));
    let app = router(Arc::new(state));

    let mut seen = Vec::new();
    let call = |method: &'static str, path: String, body: Option<Value>| {
        let app = app.clone();
        async move {
            let req = Request::builder().method(method).uri(path).header("content-type", "application/json");
            let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            let headers = format!("{:?}", resp.headers());
            let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
            let text = String::from_utf8(bytes.to_vec()).unwrap();
            (status, headers, text)
        }
    };

    let lo = json!({
        "mode": "prototype",
        "input": {
            "kind": "learning_objective",
            "body": samples::LEARNING_OBJECTIVE,
            "discipline": "biology",
            "education_level": "upper secondary school",
        }
    });
    let (status, h, created) = call("POST", "/sessions".into(), Some(lo)).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let id = serde_json::from_str::<Value>(&created).unwrap()["id"].as_str().unwrap().to_string();
    seen.push(h + &created);

    let g1 = json!({ "gate": "G1_concept_map", "action": "select", "selection": "Ecological Roles", "reviewer": "r" });
    let (_, h, b) = call("POST", format!("/sessions/{id}/gate"), Some(g1)).await;
    seen.push(h + &b);
    let g2 = json!({ "gate": "G2_question_answer", "action": "select", "selection": 2, "reviewer": "r" });
    let (status, h, b) = call("POST", format!("/sessions/{id}/gate"), Some(g2)).await;
    assert_eq!(status, StatusCode::OK, "{b}");
    let view: Value = serde_json::from_str(&b).unwrap();
    let item = view["items"][0]["id"].as_str().unwrap().to_string();
    seen.push(h + &b);

    for (method, path, body) in [
        ("POST", format!("/items/{item}/evaluate"), Some(json!({}))),
        ("GET", format!("/items/{item}/quality"), None),
        ("POST", format!("/items/{item}/adjust"), Some(json!({ "criterion": 5 }))),
        ("POST", format!("/items/{item}/features"), Some(json!({}))),
        ("GET", format!("/sessions/{id}"), None),
        ("GET", format!("/sessions/{id}/audit"), None),
        ("GET", "/sessions".to_string(), None),
        ("GET", "/health".to_string(), None),
        ("POST", "/metrics/kappa".to_string(), Some(json!({ "table": { "a": 1, "b": 2, "c": 3, "d": 4 } }))),
        ("POST", format!("/sessions/{id}/resume"), None),
    ] {
        let (status, h, b) = call(method, path.clone(), body).await;
        if path.ends_with("/features") {
            assert_eq!(status, StatusCode::BAD_GATEWAY, "{b}");
        }
        seen.push(h + &b);
    }

    assert!(up.authorized.load(Ordering::SeqCst) >= 6, "the key was not in use");
    for (i, text) in seen.iter().enumerate() {
        assert!(!text.contains(SECRET), "response {i} leaks the key");
    }
    assert!(seen.iter().map(String::len).sum::<usize>() > 10_000);
}
