//! Routes and handlers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ildae_core::curation::{
    accept_rule, repair_report, ChangedFields, EditKind, EditRecord, EditStatus, FlagKind, RepairReport, Verdict,
    DEFAULT_FLAG_COUNT,
};
use ildae_core::io::{DecisionRecord, EditLogEntry, EditLogWriter};
use ildae_core::types::{CorrectnessMatrix, InstanceRecord, TextField};
use serde::{Deserialize, Serialize};

use crate::predictor::{PredictRequest, PredictResponse, PredictorError, PredictorHandle};
use crate::state::{CurationState, Dataset};

pub const MAX_PAGE: usize = 1000;
const RETRY_AFTER_SECS: u64 = 5;

/// Milliseconds since the Unix epoch; injectable for tests.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

struct Store {
    state: CurationState,
    writer: Option<EditLogWriter>,
}

#[derive(Clone)]
pub struct AppState {
    dataset: Arc<Dataset>,
    store: Arc<Mutex<Store>>,
    predictor: PredictorHandle,
    token: Option<String>,
    clock: Clock,
    /// Predictor correctness keyed by (instance, accepted version).
    correctness_cache: Arc<Mutex<HashMap<(String, u64), bool>>>,
}

impl AppState {
    /// In-memory state with no edit log.
    pub fn new(dataset: Dataset, predictor: PredictorHandle) -> Self {
        let state = CurationState::new(&dataset.instances);
        Self::assemble(dataset, state, None, predictor)
    }

    /// Opens (or creates) the edit log and replays it.
    pub fn with_log(dataset: Dataset, predictor: PredictorHandle, log: &std::path::Path) -> ildae_core::Result<Self> {
        let (writer, entries) = EditLogWriter::open(log)?;
        let state = CurationState::replay(&dataset.instances, &entries)?;
        Ok(Self::assemble(dataset, state, Some(writer), predictor))
    }

    fn assemble(
        dataset: Dataset,
        state: CurationState,
        writer: Option<EditLogWriter>,
        predictor: PredictorHandle,
    ) -> Self {
        Self {
            dataset: Arc::new(dataset),
            store: Arc::new(Mutex::new(Store { state, writer })),
            predictor,
            token: None,
            clock: system_clock(),
            correctness_cache: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Copy of the current curation state.
    pub fn snapshot(&self) -> CurationState {
        self.store.lock().expect("store lock").state.clone()
    }

    fn commit_locked(&self, store: &mut Store, entry: EditLogEntry) -> Result<(), ApiError> {
        let mut next = store.state.clone();
        next.apply(&entry).map_err(|e| ApiError::internal(e.to_string()))?;
        if let Some(w) = store.writer.as_mut() {
            w.append(&entry).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        store.state = next;
        Ok(())
    }
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/api/flags", get(list_flags))
        .route("/api/instances/{id}", get(get_instance))
        .route("/api/instances/{id}/edits", post(post_edit))
        .route("/api/edits/{id}/decision", post(post_decision))
        .route("/api/reports/repair", get(get_repair_report))
        .route("/api/predict", post(post_predict))
        .layer(middleware::from_fn_with_state(app.clone(), require_token))
        .with_state(app)
}

async fn require_token(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retry_after_ms: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            error,
            message: message.into(),
            rule: None,
            retry_after_ms: None,
        }
    }

    fn rule(mut self, rule: &'static str) -> Self {
        self.rule = Some(rule);
        self
    }

    fn not_found(what: &str, id: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id}"))
    }

    fn unprocessable(error: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, error, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<PredictorError> for ApiError {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::BadRequest(m) => Self::unprocessable("bad_predict_request", m),
            PredictorError::Timeout(_) => Self {
                retry_after_ms: Some(RETRY_AFTER_SECS * 1000),
                ..Self::new(
                    StatusCode::BAD_GATEWAY,
                    "predictor_timeout",
                    format!("{e}; retry the request"),
                )
            },
            PredictorError::Unavailable(_) | PredictorError::Contract(_) => Self {
                retry_after_ms: Some(RETRY_AFTER_SECS * 1000),
                ..Self::new(StatusCode::BAD_GATEWAY, "predictor_error", e.to_string())
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(&self)).into_response();
        if self.retry_after_ms.is_some() {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_SECS));
        }
        resp
    }
}

fn etag(revision: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{revision}\"")).expect("ascii etag")
}

/// Fails with 412 when an `If-Match` header names another revision.
fn check_if_match(headers: &HeaderMap, revision: u64) -> Result<(), ApiError> {
    let Some(value) = headers.get(header::IF_MATCH) else {
        return Ok(());
    };
    let text = value.to_str().unwrap_or_default().trim();
    if text == "*" {
        return Ok(());
    }
    let matches = text
        .split(',')
        .map(|t| t.trim().trim_start_matches("W/").trim_matches('"'))
        .any(|t| t == revision.to_string());
    if matches {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::PRECONDITION_FAILED,
            "revision_mismatch",
            format!("instance is at revision {revision}; reload and retry"),
        ))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlagsQuery {
    kind: FlagKind,
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FlagItem {
    pub instance_id: String,
    pub difficulty: f64,
    pub gold_label: String,
    pub text_fields: Vec<TextField>,
    pub attempts: u32,
    pub status: Option<EditStatus>,
    pub revision: u64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FlagPage {
    pub kind: FlagKind,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<FlagItem>,
}

async fn list_flags(State(app): State<AppState>, Query(q): Query<FlagsQuery>) -> Result<Json<FlagPage>, ApiError> {
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_FLAG_COUNT);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::unprocessable(
            "bad_limit",
            format!("limit must be in 1..={MAX_PAGE}"),
        ));
    }
    let ids = app.dataset.flags.ids(q.kind);
    let store = app.store.lock().expect("store lock");
    let items = ids
        .iter()
        .skip(offset)
        .take(limit)
        .map(|id| {
            let record = store.state.current(id).expect("flagged ids are in the dataset");
            FlagItem {
                instance_id: id.clone(),
                difficulty: app.dataset.difficulty.score_of(id).expect("scored"),
                gold_label: record.gold_label.clone(),
                text_fields: record.text_fields.clone(),
                attempts: store.state.attempts(id),
                status: store.state.latest_status(id),
                revision: store.state.revision(id),
            }
        })
        .collect();
    Ok(Json(FlagPage {
        kind: q.kind,
        total: ids.len(),
        offset,
        limit,
        items,
    }))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct InstanceView {
    pub instance: InstanceRecord,
    pub original: InstanceRecord,
    pub difficulty: f64,
    pub flag: Option<FlagKind>,
    pub revision: u64,
    pub attempts: u32,
    pub edits: Vec<EditRecord>,
}

async fn get_instance(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let original = app
        .dataset
        .instances
        .get(&id)
        .ok_or_else(|| ApiError::not_found("instance", &id))?;
    let store = app.store.lock().expect("store lock");
    let revision = store.state.revision(&id);
    let view = InstanceView {
        instance: store.state.current(&id).expect("known id").clone(),
        original: original.clone(),
        difficulty: app.dataset.difficulty.score_of(&id).expect("scored"),
        flag: app.dataset.flags.kind_of(&id),
        revision,
        attempts: store.state.attempts(&id),
        edits: store.state.edits_for(&id).into_iter().cloned().collect(),
    };
    Ok(([(header::ETAG, etag(revision))], Json(view)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub edit_kind: EditKind,
    #[serde(default)]
    pub text_fields: Option<Vec<TextField>>,
    #[serde(default)]
    pub gold_label: Option<String>,
    pub author: String,
    #[serde(default)]
    pub rationale: Option<String>,
}

const RULE_EMPTY: &str = "an edit must change the instance text or its gold label";
const RULE_LABEL: &str = "trivial_hardening edits must preserve the gold label";
const RULE_FLIP: &str =
    "a trivial_hardening edit is accepted only when the predictor is fooled and the gold label is unchanged";
const RULE_FIELDS: &str = "edited text must keep the instance's field names and order";
const RULE_LABEL_SET: &str = "gold labels must be one of the task's candidate labels";

async fn post_edit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<EditRequest>,
) -> Result<Response, ApiError> {
    if app.dataset.instances.get(&id).is_none() {
        return Err(ApiError::not_found("instance", &id));
    }
    if body.author.trim().is_empty() {
        return Err(ApiError::unprocessable("missing_author", "author must be non-empty"));
    }
    let (current, revision) = {
        let store = app.store.lock().expect("store lock");
        (
            store.state.current(&id).expect("known id").clone(),
            store.state.revision(&id),
        )
    };
    check_if_match(&headers, revision)?;

    if let Some(fields) = &body.text_fields {
        let names = |f: &[TextField]| f.iter().map(|t| t.name.clone()).collect::<Vec<_>>();
        if names(fields) != names(&current.text_fields) {
            return Err(
                ApiError::unprocessable("field_mismatch", "text field names differ from the instance")
                    .rule(RULE_FIELDS),
            );
        }
    }
    let changes = ChangedFields::diff(&current, body.text_fields, body.gold_label);
    if changes.is_empty() {
        return Err(ApiError::unprocessable("empty_edit", "the edit changes nothing").rule(RULE_EMPTY));
    }
    if body.edit_kind == EditKind::TrivialHardening && changes.gold_label.is_some() {
        return Err(
            ApiError::unprocessable("label_not_preserved", "hardening edits may not change the gold label")
                .rule(RULE_LABEL),
        );
    }
    if let Some(label) = &changes.gold_label {
        if !app.dataset.labels.contains(label) {
            return Err(
                ApiError::unprocessable("unknown_label", format!("label {label:?} is not a candidate label"))
                    .rule(RULE_LABEL_SET),
            );
        }
    }

    let mut edit = EditRecord {
        edit_id: 0,
        instance_id: id.clone(),
        edit_kind: body.edit_kind,
        changes,
        previous_gold_label: current.gold_label.clone(),
        author: body.author,
        timestamp_ms: (app.clock)(),
        predictor_verdict: None,
        status: EditStatus::Proposed,
        attempt: 0,
        rationale: body.rationale.filter(|r| !r.trim().is_empty()),
    };
    let edited = edit.apply(&current);
    let resp = app
        .predictor
        .predict(&PredictRequest {
            task_name: app.dataset.task_name.clone(),
            text_fields: edited.text_fields.clone(),
            candidate_labels: app.dataset.labels.clone(),
        })
        .await?;
    edit.predictor_verdict = Some(Verdict::new(
        resp.predicted_label.clone(),
        resp.probability(&resp.predicted_label),
        &edited.gold_label,
    ));

    let mut store = app.store.lock().expect("store lock");
    if store.state.revision(&id) != revision {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "concurrent_edit",
            "the instance changed while the predictor was running; reload and retry",
        ));
    }
    edit.edit_id = store.state.next_id();
    edit.attempt = store.state.attempts(&id) + 1;
    app.commit_locked(&mut store, EditLogEntry::Edit(edit.clone()))?;
    let revision = store.state.revision(&id);
    Ok((StatusCode::CREATED, [(header::ETAG, etag(revision))], Json(edit)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub status: EditStatus,
    pub author: String,
}

async fn post_decision(
    State(app): State<AppState>,
    Path(edit_id): Path<u64>,
    headers: HeaderMap,
    Json(body): Json<DecisionRequest>,
) -> Result<Response, ApiError> {
    if body.status == EditStatus::Proposed {
        return Err(ApiError::unprocessable(
            "bad_status",
            "a decision must be accepted or rejected",
        ));
    }
    if body.author.trim().is_empty() {
        return Err(ApiError::unprocessable("missing_author", "author must be non-empty"));
    }
    let mut store = app.store.lock().expect("store lock");
    let edit = store
        .state
        .edit(edit_id)
        .ok_or_else(|| ApiError::not_found("edit", edit_id))?
        .clone();
    let revision = store.state.revision(&edit.instance_id);
    if edit.status == body.status {
        return Ok(([(header::ETAG, etag(revision))], Json(edit)).into_response());
    }
    check_if_match(&headers, revision)?;
    if edit.status != EditStatus::Proposed {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "decision_final",
            format!("edit {edit_id} is already {:?}", edit.status).to_lowercase(),
        ));
    }
    if body.status == EditStatus::Accepted {
        match accept_rule(&edit) {
            Ok(true) => {}
            Ok(false) if edit.edit_kind == EditKind::TrivialHardening => {
                return Err(
                    ApiError::unprocessable("accept_rule", "the predictor was not fooled by this edit").rule(RULE_FLIP),
                );
            }
            Ok(false) => {
                return Err(ApiError::unprocessable("accept_rule", "the edit changes nothing").rule(RULE_EMPTY))
            }
            Err(e) => return Err(ApiError::unprocessable("accept_rule", e.to_string()).rule(RULE_FLIP)),
        }
    }
    let decision = DecisionRecord {
        edit_id: store.state.next_id(),
        target_edit_id: edit_id,
        status: body.status,
        author: body.author,
        timestamp_ms: (app.clock)(),
    };
    app.commit_locked(&mut store, EditLogEntry::Decision(decision))?;
    let updated = store.state.edit(edit_id).expect("decided edit").clone();
    let revision = store.state.revision(&updated.instance_id);
    Ok(([(header::ETAG, etag(revision))], Json(updated)).into_response())
}

impl AppState {
    async fn predictor_correct(&self, record: &InstanceRecord, version: u64) -> Result<bool, ApiError> {
        let key = (record.instance_id.clone(), version);
        if let Some(&hit) = self.correctness_cache.lock().expect("cache lock").get(&key) {
            return Ok(hit);
        }
        let resp = self
            .predictor
            .predict(&PredictRequest {
                task_name: self.dataset.task_name.clone(),
                text_fields: record.text_fields.clone(),
                candidate_labels: self.dataset.labels.clone(),
            })
            .await?;
        let correct = resp.predicted_label == record.gold_label;
        self.correctness_cache.lock().expect("cache lock").insert(key, correct);
        Ok(correct)
    }

    /// Predictor accuracy on each flag class, originals versus current state.
    pub async fn repair_report(&self) -> Result<RepairReport, ApiError> {
        let flags = &self.dataset.flags;
        let ids: Vec<String> = flags
            .trivial_ids
            .iter()
            .chain(&flags.erroneous_candidate_ids)
            .cloned()
            .collect();
        let current: Vec<(InstanceRecord, u64)> = {
            let store = self.store.lock().expect("store lock");
            ids.iter()
                .map(|id| {
                    (
                        store.state.current(id).expect("flagged").clone(),
                        store.state.version(id),
                    )
                })
                .collect()
        };
        let mut before = Vec::with_capacity(ids.len());
        let mut after = Vec::with_capacity(ids.len());
        for (id, (record, version)) in ids.iter().zip(&current) {
            let original = self.dataset.instances.get(id).expect("flagged");
            before.push(self.predictor_correct(original, 0).await?);
            after.push(self.predictor_correct(record, *version).await?);
        }
        let matrix = |row: Vec<bool>| {
            CorrectnessMatrix::from_rows(vec!["predictor".into()], ids.clone(), vec![row])
                .map_err(|e| ApiError::internal(e.to_string()))
        };
        repair_report(&matrix(before)?, &matrix(after)?, flags).map_err(|e| ApiError::internal(e.to_string()))
    }
}

async fn get_repair_report(State(app): State<AppState>) -> Result<Json<RepairReport>, ApiError> {
    Ok(Json(app.repair_report().await?))
}

async fn post_predict(
    State(app): State<AppState>,
    Json(req): Json<PredictRequest>,
) -> Result<Json<PredictResponse>, ApiError> {
    Ok(Json(app.predictor.predict(&req).await?))
}
