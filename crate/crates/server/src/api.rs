//! `/api/v1` routes. Each handler performs one store operation.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use warden_core::ingest::{parse_canonical, to_canonical_json};
use warden_core::knowledge::VoteDirection;
use warden_core::triage::{Preset, TriageConfig};
use warden_core::{Confidence, Fingerprint, FpMode, SeverityRank};

use crate::journal::JournalError;
use crate::store::{Store, StoreError, TriageUpdate, WorkSession};

pub type SharedStore = Arc<Mutex<Store>>;

/// Error body: `{"error": "..."}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict(_) => StatusCode::CONFLICT,
            StoreError::Invalid(_) => StatusCode::BAD_REQUEST,
            StoreError::Journal(
                JournalError::Io(_) | JournalError::Corrupt { .. } | JournalError::CorruptSnapshot(_),
            ) => {
                tracing::error!(error = %e, "store failure");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        Self { status, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body<'a> {
            error: &'a str,
        }
        json(self.status, &Body { error: &self.message })
    }
}

fn json<T: Serialize + ?Sized>(status: StatusCode, value: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], to_canonical_json(value)).into_response()
}

/// JSON request body whose rejections are reported as 400 with a JSON error.
struct JsonBody<T>(T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        serde_json::from_slice(&bytes).map(JsonBody).map_err(|e| ApiError::bad_request(e.to_string()))
    }
}

struct QueryParams<T>(T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for QueryParams<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, ApiError> {
        Query::<T>::try_from_uri(&parts.uri)
            .map(|Query(q)| QueryParams(q))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

/// Run `f` against the store on the blocking pool; writes fsync.
async fn with_store<T, F>(store: &SharedStore, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Store) -> Result<T, StoreError> + Send + 'static,
{
    let store = store.clone();
    tokio::task::spawn_blocking(move || f(&mut store.lock().expect("store lock poisoned")))
        .await
        .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: e.to_string() })?
        .map_err(ApiError::from)
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/v1/patterns/{pattern_id}/comments", get(list_comments).post(add_comment))
        .route("/api/v1/patterns/{pattern_id}/solutions", get(list_solutions).post(add_solution))
        .route("/api/v1/solutions/{solution_id}/votes", post(vote))
        .route("/api/v1/fixtimes", post(record_fix))
        .route("/api/v1/fixtimes/{pattern_id}/estimate", get(estimate))
        .route("/api/v1/projects/{project_id}/triage", get(get_triage).put(put_triage))
        .route("/api/v1/projects/{project_id}/runs", post(add_run))
        .route("/api/v1/projects/{project_id}/view", get(view))
        .route("/api/v1/projects/{project_id}/impact", get(impact))
        .route("/api/v1/projects/{project_id}/recommendations", get(recommendations))
        .with_state(store)
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NewComment {
    text: String,
    #[serde(default)]
    author: Option<String>,
    #[serde(default)]
    fingerprint: Option<Fingerprint>,
}

async fn add_comment(
    State(store): State<SharedStore>,
    Path(pattern_id): Path<String>,
    JsonBody(body): JsonBody<NewComment>,
) -> Result<Response, ApiError> {
    let comment =
        with_store(&store, move |s| s.add_comment(&pattern_id, &body.text, body.author, body.fingerprint, Utc::now()))
            .await?;
    Ok(json(StatusCode::CREATED, &comment))
}

async fn list_comments(State(store): State<SharedStore>, Path(pattern_id): Path<String>) -> Result<Response, ApiError> {
    let comments = with_store(&store, move |s| Ok(s.comments(&pattern_id))).await?;
    Ok(json(StatusCode::OK, &comments))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NewSolution {
    text: String,
    #[serde(default)]
    code_snippet: Option<String>,
}

async fn add_solution(
    State(store): State<SharedStore>,
    Path(pattern_id): Path<String>,
    JsonBody(body): JsonBody<NewSolution>,
) -> Result<Response, ApiError> {
    let solution =
        with_store(&store, move |s| s.add_solution(&pattern_id, &body.text, body.code_snippet, Utc::now())).await?;
    Ok(json(StatusCode::CREATED, &solution))
}

async fn list_solutions(
    State(store): State<SharedStore>,
    Path(pattern_id): Path<String>,
) -> Result<Response, ApiError> {
    let solutions = with_store(&store, move |s| Ok(s.solutions(&pattern_id))).await?;
    Ok(json(StatusCode::OK, &solutions))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewVote {
    direction: String,
}

async fn vote(
    State(store): State<SharedStore>,
    Path(solution_id): Path<String>,
    JsonBody(body): JsonBody<NewVote>,
) -> Result<Response, ApiError> {
    let direction: VoteDirection = body.direction.parse().map_err(ApiError::bad_request)?;
    let solution = with_store(&store, move |s| s.vote(&solution_id, direction, Utc::now())).await?;
    Ok(json(StatusCode::OK, &solution))
}

/// Fix-time submissions are anonymous; any extra field is rejected.
#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NewFixTime {
    pattern_id: String,
    minutes: f64,
}

async fn record_fix(
    State(store): State<SharedStore>,
    JsonBody(body): JsonBody<NewFixTime>,
) -> Result<Response, ApiError> {
    let record = with_store(&store, move |s| s.record_fix(&body.pattern_id, body.minutes, Utc::now())).await?;
    Ok(json(StatusCode::CREATED, &record))
}

async fn estimate(State(store): State<SharedStore>, Path(pattern_id): Path<String>) -> Result<Response, ApiError> {
    let estimate = with_store(&store, move |s| Ok(s.estimate(&pattern_id))).await?;
    Ok(json(StatusCode::OK, &estimate))
}

async fn get_triage(State(store): State<SharedStore>, Path(project_id): Path<String>) -> Result<Response, ApiError> {
    let doc = with_store(&store, move |s| s.triage(&project_id)).await?;
    Ok(json(StatusCode::OK, &doc))
}

async fn put_triage(
    State(store): State<SharedStore>,
    Path(project_id): Path<String>,
    JsonBody(update): JsonBody<TriageUpdate>,
) -> Result<Response, ApiError> {
    let doc = with_store(&store, move |s| s.replace_triage(&project_id, &update, Utc::now())).await?;
    Ok(json(StatusCode::OK, &doc))
}

/// Body of a run upload. `report` is a `findings-v1` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunUpload {
    pub report: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_session: Option<WorkSession>,
}

async fn add_run(
    State(store): State<SharedStore>,
    Path(project_id): Path<String>,
    JsonBody(upload): JsonBody<RunUpload>,
) -> Result<Response, ApiError> {
    let bytes = serde_json::to_vec(&upload.report).expect("values always serialize");
    let run = parse_canonical(&bytes).map_err(|e| ApiError::from(StoreError::from(e)))?;
    let accepted =
        with_store(&store, move |s| s.add_run(&project_id, run, upload.metrics, upload.work_session, Utc::now()))
            .await?;
    Ok(json(StatusCode::CREATED, &accepted))
}

/// Query string of `GET .../view`. Omitted parameters take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ViewQuery {
    pub level: Option<u8>,
    pub min_confidence: Option<String>,
    pub max_rank: Option<i64>,
    pub cap: Option<usize>,
    pub seed: Option<u64>,
    pub fp_mode: Option<String>,
    pub preset: Option<String>,
}

impl ViewQuery {
    pub fn to_config(&self) -> Result<TriageConfig, String> {
        let mut config = TriageConfig::default();
        if let Some(level) = self.level {
            config.level = level;
        }
        if let Some(c) = &self.min_confidence {
            config.min_confidence = c.parse::<Confidence>()?;
        }
        if let Some(rank) = self.max_rank {
            config.max_rank = SeverityRank::new(rank).map_err(|e| e.to_string())?;
        }
        if let Some(cap) = self.cap {
            config.cap = NonZeroUsize::new(cap).ok_or("cap must be at least 1")?;
        }
        config.random_seed = self.seed;
        if let Some(mode) = &self.fp_mode {
            config.fp_mode = mode.parse::<FpMode>()?;
        }
        if let Some(preset) = &self.preset {
            config.preset = preset.parse::<Preset>()?;
        }
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    /// Inverse of [`ViewQuery::to_config`] for a custom configuration.
    pub fn from_config(config: &TriageConfig) -> Self {
        Self {
            level: Some(config.level),
            min_confidence: Some(config.min_confidence.as_str().to_ascii_lowercase()),
            max_rank: Some(config.max_rank.get() as i64),
            cap: Some(config.cap.get()),
            seed: config.random_seed,
            fp_mode: Some(match config.fp_mode {
                FpMode::Highlight => "highlight".to_owned(),
                FpMode::Dim => "dim".to_owned(),
            }),
            preset: None,
        }
    }

    pub fn to_query_string(&self) -> String {
        let mut parts = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        };
        push("level", self.level.map(|v| v.to_string()));
        push("minConfidence", self.min_confidence.clone());
        push("maxRank", self.max_rank.map(|v| v.to_string()));
        push("cap", self.cap.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("fpMode", self.fp_mode.clone());
        push("preset", self.preset.clone());
        parts.join("&")
    }
}

async fn view(
    State(store): State<SharedStore>,
    Path(project_id): Path<String>,
    QueryParams(query): QueryParams<ViewQuery>,
) -> Result<Response, ApiError> {
    let config = query.to_config().map_err(ApiError::bad_request)?;
    let view = with_store(&store, move |s| s.view(&project_id, &config)).await?;
    Ok(json(StatusCode::OK, &view))
}

async fn impact(State(store): State<SharedStore>, Path(project_id): Path<String>) -> Result<Response, ApiError> {
    let model = with_store(&store, move |s| s.impact(&project_id)).await?;
    Ok(json(StatusCode::OK, &model))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendationQuery {
    metric: String,
    direction: String,
}

async fn recommendations(
    State(store): State<SharedStore>,
    Path(project_id): Path<String>,
    QueryParams(query): QueryParams<RecommendationQuery>,
) -> Result<Response, ApiError> {
    let direction = query.direction.parse().map_err(ApiError::bad_request)?;
    let recs = with_store(&store, move |s| s.recommendations(&project_id, &query.metric, direction)).await?;
    Ok(json(StatusCode::OK, &recs))
}
