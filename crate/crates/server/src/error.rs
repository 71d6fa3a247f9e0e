use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};
use watson_core::freqtable::TableError;
use watson_core::ingest::IngestError;
use watson_core::knn::KnnError;
use watson_core::plots::PlotError;
use watson_core::questions::QuestionError;
use watson_core::LoadError;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_owned(),
                message: message.into(),
                detail: None,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = Some(detail);
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no {kind} with id {id:?}"))
            .with_detail(json!({ "id": id }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let detail = match &e {
            IngestError::RaggedRow { row, expected, found } => {
                Some(json!({ "row": row, "expected": expected, "found": found }))
            }
            IngestError::EncodingError { offset } => Some(json!({ "offset": offset })),
            IngestError::TooManyCategories { column, max } => Some(json!({ "column": column, "max": max })),
            _ => None,
        };
        let err = ApiError::bad_request(e.code(), e.to_string());
        match detail {
            Some(d) => err.with_detail(d),
            None => err,
        }
    }
}

impl From<TableError> for ApiError {
    fn from(e: TableError) -> Self {
        let detail = match &e {
            TableError::UnknownVariable(v) => Some(json!({ "variable": v })),
            TableError::UnknownCategory { variable, label, row } => {
                Some(json!({ "variable": variable, "label": label, "row": row }))
            }
            TableError::LastCategory(v) => Some(json!({ "variable": v })),
            _ => None,
        };
        let err = ApiError::bad_request(e.code(), e.to_string());
        match detail {
            Some(d) => err.with_detail(d),
            None => err,
        }
    }
}

impl From<LoadError> for ApiError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Ingest(e) => e.into(),
            LoadError::Table(e) => e.into(),
        }
    }
}

impl From<PlotError> for ApiError {
    fn from(e: PlotError) -> Self {
        match e {
            PlotError::Table(t) => t.into(),
            other => ApiError::bad_request(other.code(), other.to_string()),
        }
    }
}

impl From<QuestionError> for ApiError {
    fn from(e: QuestionError) -> Self {
        match e {
            QuestionError::Table(t) => t.into(),
            QuestionError::Plot(p) => p.into(),
            other => ApiError::bad_request(other.code(), other.to_string()),
        }
    }
}

impl From<KnnError> for ApiError {
    fn from(e: KnnError) -> Self {
        let status = match e {
            KnnError::NoEligibleTherapy { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        let detail = match &e {
            KnnError::SchemaMismatch { feature, .. } => Some(json!({ "feature": feature })),
            KnnError::DegenerateRange(f) => Some(json!({ "feature": f })),
            KnnError::UnknownTherapy(t) => Some(json!({ "therapy": t })),
            KnnError::NoEligibleTherapy { k_min } => Some(json!({ "k_min": k_min })),
            KnnError::BadRow { row, .. } => Some(json!({ "row": row })),
            _ => None,
        };
        let err = ApiError::new(status, e.code(), e.to_string());
        match detail {
            Some(d) => err.with_detail(d),
            None => err,
        }
    }
}
