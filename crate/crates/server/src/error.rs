use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use itemsmith_core::agreement::AgreementError;
use itemsmith_core::bank::BankError;
use itemsmith_core::pipeline::{PipelineError, StoreError};
use itemsmith_core::providers::ProviderError;
use itemsmith_core::quality::QualityError;
use itemsmith_core::similarity::SimilarityError;

/// Error body: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.to_string(), message: message.into(), detail: Value::Null } }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id}"))
            .with_detail(json!({ "kind": what, "id": id }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn provider(e: &ProviderError) -> ApiError {
    let code = match e {
        ProviderError::UnconfiguredRole(_) | ProviderError::Config(_) => "provider_config",
        _ => "provider_failure",
    };
    ApiError::new(StatusCode::BAD_GATEWAY, code, e.to_string())
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        use PipelineError::*;
        let message = e.to_string();
        let (status, code) = match &e {
            Validation(_) => (StatusCode::BAD_REQUEST, "validation"),
            SelectionOutOfRange { .. } => (StatusCode::BAD_REQUEST, "selection_out_of_range"),
            SelectionNotFound(_) => (StatusCode::BAD_REQUEST, "selection_not_found"),
            AmbiguousSelection { .. } => (StatusCode::BAD_REQUEST, "selection_ambiguous"),
            SelectionRequired(_) => (StatusCode::BAD_REQUEST, "selection_required"),
            InvalidAction { .. } => (StatusCode::BAD_REQUEST, "invalid_action"),
            TargetRequired => (StatusCode::BAD_REQUEST, "target_required"),
            PrototypeNotAccepted => (StatusCode::BAD_REQUEST, "prototype_not_accepted"),
            EditUnparseable(_) => (StatusCode::BAD_REQUEST, "edit_unparseable"),
            WrongGate { .. } => (StatusCode::CONFLICT, "wrong_gate"),
            SessionClosed(_) => (StatusCode::CONFLICT, "session_closed"),
            NotUnderReview(_) => (StatusCode::CONFLICT, "not_under_review"),
            NotResumable => (StatusCode::CONFLICT, "not_resumable"),
            UnknownItem(id) => return ApiError::not_found("item", id.as_str()),
            AdjustmentBudgetExhausted { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "budget_exhausted"),
            ManualBudgetExceeded { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "budget_exceeded"),
            RevisionUnparseable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "revision_unparseable"),
            Provider(p) => return provider(p),
            Template(_) => (StatusCode::INTERNAL_SERVER_ERROR, "template"),
        };
        let detail = match &e {
            EditUnparseable(r) | RevisionUnparseable(r) => json!({ "issues": r.issues }),
            AmbiguousSelection { matches, .. } => json!({ "matches": matches }),
            ManualBudgetExceeded { used, requested, cap, .. } => {
                json!({ "used": used, "requested": requested, "cap": cap })
            }
            AdjustmentBudgetExhausted { cap, .. } => json!({ "cap": cap }),
            _ => Value::Null,
        };
        ApiError::new(status, code, message).with_detail(detail)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::NotFound(id) => ApiError::not_found("session", id.as_str()),
            StoreError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            StoreError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()),
        }
    }
}

impl From<BankError> for ApiError {
    fn from(e: BankError) -> Self {
        use BankError::*;
        let (status, code) = match &e {
            UnknownBank(id) => return ApiError::not_found("bank", id),
            UnknownSlot(c) => return ApiError::not_found("slot", c),
            DuplicateConcept(_) | IdCollision(_) | BankExists(_) => (StatusCode::CONFLICT, "conflict"),
            Infeasible { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "infeasible"),
            NotAccepted { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "not_accepted"),
            MissingEvidence(_) | NegativeEvidence(_) | EvidenceMismatch { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "evidence")
            }
            Invariant(_) | Schema(_) => (StatusCode::BAD_REQUEST, "invalid_bank"),
            EmptySeries | NoSlots | ZeroVariants | SlotWithoutSeries(_) => (StatusCode::BAD_REQUEST, "validation"),
            Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<SimilarityError> for ApiError {
    fn from(e: SimilarityError) -> Self {
        match &e {
            SimilarityError::Provider(p) => provider(p),
            SimilarityError::MissingFeatureSet { item, .. } => {
                ApiError::new(StatusCode::NOT_FOUND, "missing_features", e.to_string())
                    .with_detail(json!({ "item": item }))
            }
            SimilarityError::Template(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "template", e.to_string()),
            SimilarityError::UnparseableFeatures | SimilarityError::UnparseableJudgment(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "unparseable_response", e.to_string())
            }
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<QualityError> for ApiError {
    fn from(e: QualityError) -> Self {
        match &e {
            QualityError::Provider(p) => provider(p),
            QualityError::Unparseable => ApiError::new(StatusCode::BAD_GATEWAY, "unparseable_response", e.to_string()),
            QualityError::Template(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "template", e.to_string()),
            QualityError::MissingCoverage(m) => {
                ApiError::new(StatusCode::CONFLICT, "missing_coverage", e.to_string()).with_detail(json!({ "missing": m }))
            }
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<AgreementError> for ApiError {
    fn from(e: AgreementError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "agreement", e.to_string())
    }
}
