use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use tokio::sync::OnceCell;

use itemsmith_core::bank::BankStore;
use itemsmith_core::item_model::{ItemId, McqItem};
use itemsmith_core::pipeline::{Pipeline, SessionStore};
use itemsmith_core::providers::Role;
use itemsmith_core::quality::{Lexicon, Policy};
use itemsmith_core::similarity::FeatureStore;

use crate::error::ApiError;

/// Responses above this size are not kept for idempotent replay.
const MAX_REPLAY_BYTES: usize = 16 * 1024 * 1024;

type Replay = Arc<OnceCell<(StatusCode, Bytes)>>;

pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub sessions: Arc<SessionStore>,
    pub banks: Arc<BankStore>,
    pub lexicon: Lexicon,
    pub policy: Policy,
    pub features: RwLock<FeatureStore>,
    /// Provider work a request waits for before answering 202.
    pub stage_timeout: Duration,
    pub evaluator: Role,
    pub feature_extractor: Role,
    token: Option<String>,
    replays: Mutex<HashMap<String, Replay>>,
}

impl AppState {
    pub fn new(pipeline: Arc<Pipeline>, sessions: Arc<SessionStore>, banks: Arc<BankStore>) -> Self {
        AppState {
            pipeline,
            sessions,
            banks,
            lexicon: Lexicon::bundled(),
            policy: Policy::default(),
            features: RwLock::default(),
            stage_timeout: Duration::from_secs(20),
            evaluator: Role::Evaluator,
            feature_extractor: Role::FeatureExtractor,
            token: None,
            replays: Mutex::default(),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_stage_timeout(mut self, timeout: Duration) -> Self {
        self.stage_timeout = timeout;
        self
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    /// Looks an item up in the sessions first, then in the banks.
    pub fn find_item(&self, id: &ItemId) -> Result<McqItem, ApiError> {
        if let Some(item) = self.sessions.find_item(id).and_then(|s| self.sessions.get(&s)).and_then(|s| s.items.get(id).cloned()) {
            return Ok(item);
        }
        for bank in self.banks.ids() {
            if let Ok(b) = self.banks.snapshot(&bank) {
                if let Some(item) = b.items.get(id) {
                    return Ok(item.clone());
                }
            }
        }
        Err(ApiError::not_found("item", id.as_str()))
    }
}

pub async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let Some(token) = &state.token else { return next.run(req).await };
    if req.uri().path() == "/health" {
        return next.run(req).await;
    }
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(token.as_str()) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response()
    }
}

/// Mutating requests carrying an `Idempotency-Key` run once per key; later
/// requests with the same key, method and path get the first response.
pub async fn idempotency(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let key = match req.headers().get("idempotency-key").and_then(|v| v.to_str().ok()) {
        Some(k) if req.method() != Method::GET && req.method() != Method::HEAD => {
            format!("{} {} {}", req.method(), req.uri().path(), k)
        }
        _ => return next.run(req).await,
    };
    let cell = state.replays.lock().unwrap().entry(key).or_default().clone();
    let mut fresh = None;
    let (status, bytes) = cell
        .get_or_init(|| async {
            let resp = next.run(req).await;
            let (parts, body) = resp.into_parts();
            let bytes = to_bytes(body, MAX_REPLAY_BYTES).await.unwrap_or_default();
            fresh = Some(parts.headers);
            (parts.status, bytes)
        })
        .await
        .clone();
    let mut resp = Response::new(Body::from(bytes));
    *resp.status_mut() = status;
    match fresh {
        Some(headers) => *resp.headers_mut() = headers,
        None => {
            resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
            resp.headers_mut().insert("idempotent-replay", HeaderValue::from_static("true"));
        }
    }
    resp
}
