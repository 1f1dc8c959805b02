//! HTTP+JSON surface. Every error body is `{"code": ..., "message": ...}`.
//!
//! Checks run in a fixed order: authentication (401), role (403), existence
//! (404), size (413), then payload validation (422).

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartError;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use fieldlab_core::domain::{
    validate_annotation_set, validate_label_map, AnnotationSet, BoundingBox, ImageRecord, LabelMap, Task,
};
use fieldlab_core::ids::fresh_id;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::auth::MIN_CREDENTIAL_LEN;
use crate::auth::{hash_credential, is_plausible_email, new_token, token_digest, verify_credential, HashCost};
use crate::model::{
    Account, CollectionMode, CurationRecord, MediaRef, Observation, ObservationMetadata, Project, Receipt, Role,
    SignInMethod, Verdict,
};
use crate::store::{IdempotencyKey, Inserted, Store, StoreError};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<dyn Store>,
    pub media_cap_bytes: u64,
    pub hash_cost: HashCost,
}

impl AppState {
    pub fn new(store: Arc<dyn Store>, media_cap_bytes: u64) -> Self {
        Self {
            store,
            media_cap_bytes,
            hash_cost: HashCost::Standard,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn unauthenticated() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "UNAUTHENTICATED",
            "a valid bearer token is required",
        )
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "FORBIDDEN", message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "VALIDATION_FAILED", message)
    }

    fn unknown_project(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UNKNOWN_PROJECT", format!("no project {id}"))
    }

    fn unknown_observation(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "UNKNOWN_OBSERVATION",
            format!("no observation {id}"),
        )
    }

    fn too_large(cap: u64) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "PAYLOAD_TOO_LARGE",
            format!("media exceeds the {cap}-byte limit"),
        )
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::EmailTaken(_) => ApiError::new(StatusCode::CONFLICT, "EMAIL_TAKEN", e.to_string()),
            StoreError::IdempotencyConflict { .. } => {
                ApiError::new(StatusCode::CONFLICT, "IDEMPOTENCY_CONFLICT", e.to_string())
            }
            other => {
                tracing::error!(error = %other, "store failure");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "STORE_ERROR", other.to_string())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("malformed JSON body: {e}")))
}

fn authenticate(state: &AppState, headers: &HeaderMap) -> ApiResult<Account> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(ApiError::unauthenticated)?;
    state
        .store
        .account_for_token(&token_digest(token))?
        .ok_or_else(ApiError::unauthenticated)
}

fn issue_token(state: &AppState, account_id: &str) -> ApiResult<String> {
    let token = new_token();
    state.store.insert_token(&token_digest(&token), account_id)?;
    Ok(token)
}

/// Account as the API shows it: never the credential hash.
#[derive(Debug, Serialize, Deserialize)]
pub struct AccountView {
    pub account_id: String,
    pub method: SignInMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub email: Option<String>,
    pub role: Role,
}

impl From<&Account> for AccountView {
    fn from(a: &Account) -> Self {
        Self {
            account_id: a.account_id.clone(),
            method: a.method,
            email: a.email.clone(),
            role: a.role,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RegisterRequest {
    method: SignInMethod,
    #[serde(default)]
    email: Option<String>,
    #[serde(default)]
    credential: Option<String>,
    #[serde(default = "default_role")]
    role: Role,
}

fn default_role() -> Role {
    Role::Participant
}

async fn register(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: RegisterRequest = parse_json(&body)?;
    let account = match req.method {
        SignInMethod::Federated => {
            return Err(ApiError::new(
                StatusCode::NOT_IMPLEMENTED,
                "FEDERATED_NOT_SUPPORTED",
                "federated identity providers are not available on this server",
            ))
        }
        SignInMethod::Anonymous => {
            if req.email.is_some() || req.credential.is_some() {
                return Err(ApiError::invalid("anonymous accounts carry no email or credential"));
            }
            Account {
                account_id: fresh_id(),
                method: SignInMethod::Anonymous,
                email: None,
                credential_hash: None,
                role: req.role,
            }
        }
        SignInMethod::EmailPassword => {
            let email = req.email.unwrap_or_default().trim().to_owned();
            if !is_plausible_email(&email) {
                return Err(ApiError::invalid(format!("{email:?} is not a valid email address")));
            }
            let credential = req.credential.unwrap_or_default();
            if credential.chars().count() < MIN_CREDENTIAL_LEN {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "WEAK_CREDENTIAL",
                    format!("credential must be at least {MIN_CREDENTIAL_LEN} characters"),
                ));
            }
            if state.store.account_by_email(&email)?.is_some() {
                return Err(StoreError::EmailTaken(email).into());
            }
            let cost = state.hash_cost;
            let hash = tokio::task::spawn_blocking(move || hash_credential(&credential, cost))
                .await
                .expect("hashing task");
            Account {
                account_id: fresh_id(),
                method: SignInMethod::EmailPassword,
                email: Some(email),
                credential_hash: Some(hash),
                role: req.role,
            }
        }
    };
    state.store.insert_account(account.clone())?;
    let token = issue_token(&state, &account.account_id)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "account": AccountView::from(&account), "token": token })),
    ))
}

#[derive(Debug, Deserialize)]
struct TokenRequest {
    email: String,
    credential: String,
}

async fn sign_in(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: TokenRequest = parse_json(&body)?;
    let rejected = || {
        ApiError::new(
            StatusCode::UNAUTHORIZED,
            "INVALID_CREDENTIALS",
            "email or credential is wrong",
        )
    };
    let account = state.store.account_by_email(&req.email)?.ok_or_else(rejected)?;
    let phc = account.credential_hash.clone().ok_or_else(rejected)?;
    let credential = req.credential;
    let ok = tokio::task::spawn_blocking(move || verify_credential(&credential, &phc))
        .await
        .expect("verify task");
    if !ok {
        return Err(rejected());
    }
    let token = issue_token(&state, &account.account_id)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "account_id": account.account_id, "token": token })),
    ))
}

#[derive(Debug, Deserialize)]
struct ProjectRequest {
    name: String,
    label_map: LabelMap,
}

async fn create_project(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Project>)> {
    let account = authenticate(&state, &headers)?;
    if account.role != Role::Researcher {
        return Err(ApiError::forbidden("only researchers create projects"));
    }
    let req: ProjectRequest = parse_json(&body)?;
    if req.name.trim().is_empty() {
        return Err(ApiError::invalid("project name must not be empty"));
    }
    let report = validate_label_map(&req.label_map);
    if !report.ok {
        return Err(ApiError::invalid(report.first_error().unwrap_or_default()));
    }
    let project = Project {
        project_id: fresh_id(),
        owner: account.account_id,
        name: req.name.trim().to_owned(),
        label_map: req.label_map,
        dataset_refs: Vec::new(),
        model_package_refs: Vec::new(),
        bundle_refs: Vec::new(),
        created_at: Utc::now(),
    };
    state.store.insert_project(project.clone())?;
    Ok((StatusCode::CREATED, Json(project)))
}

async fn get_project(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(project_id): Path<String>,
) -> ApiResult<Json<Project>> {
    authenticate(&state, &headers)?;
    state
        .store
        .project(&project_id)?
        .map(Json)
        .ok_or_else(|| ApiError::unknown_project(&project_id))
}

fn validate_boxes(boxes: &[BoundingBox], labels: &LabelMap, width: u32, height: u32, what: &str) -> ApiResult<()> {
    for (i, b) in boxes.iter().enumerate() {
        if !b.is_well_formed() {
            return Err(ApiError::invalid(format!("{what} {i} is degenerate or not finite")));
        }
        if !b.fits_within(width, height) {
            return Err(ApiError::invalid(format!(
                "{what} {i} lies outside the {width}x{height} media"
            )));
        }
        if !labels.contains_id(b.class_id) {
            return Err(ApiError::invalid(format!(
                "{what} {i} has unknown class id {}",
                b.class_id
            )));
        }
        if b.confidence.is_some_and(|c| !(0.0..=1.0).contains(&c)) {
            return Err(ApiError::invalid(format!("{what} {i} confidence is outside [0, 1]")));
        }
    }
    Ok(())
}

fn validate_metadata(meta: &ObservationMetadata, labels: &LabelMap) -> ApiResult<()> {
    if meta.media_width == 0 || meta.media_height == 0 {
        return Err(ApiError::invalid("media dimensions must be positive"));
    }
    if let Some(geo) = meta.geo {
        if !(-90.0..=90.0).contains(&geo.lat) {
            return Err(ApiError::invalid(format!("latitude {} is outside [-90, 90]", geo.lat)));
        }
        if !(-180.0..=180.0).contains(&geo.lon) {
            return Err(ApiError::invalid(format!(
                "longitude {} is outside [-180, 180]",
                geo.lon
            )));
        }
    }
    if meta.mode == CollectionMode::MlAssisted && meta.detections.is_empty() {
        return Err(ApiError::invalid(
            "ml_assisted observations carry at least one detection",
        ));
    }
    validate_boxes(
        &meta.detections,
        labels,
        meta.media_width,
        meta.media_height,
        "detection",
    )
}

fn multipart_error(e: MultipartError, cap: u64) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::too_large(cap)
    } else {
        ApiError::invalid(format!("malformed multipart body: {}", e.body_text()))
    }
}

async fn upload_observation(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(project_id): Path<String>,
    mut multipart: Multipart,
) -> ApiResult<Response> {
    let account = authenticate(&state, &headers)?;
    let project = state
        .store
        .project(&project_id)?
        .ok_or_else(|| ApiError::unknown_project(&project_id))?;

    let cap = state.media_cap_bytes;
    let mut metadata: Option<ObservationMetadata> = None;
    let mut media: Option<Bytes> = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| multipart_error(e, cap))? {
        match field.name() {
            Some("metadata") => {
                let bytes = field.bytes().await.map_err(|e| multipart_error(e, cap))?;
                metadata = Some(parse_json(&bytes)?);
            }
            Some("media") => {
                let bytes = field.bytes().await.map_err(|e| multipart_error(e, cap))?;
                if bytes.len() as u64 > cap {
                    return Err(ApiError::too_large(cap));
                }
                media = Some(bytes);
            }
            _ => {}
        }
    }
    let meta = metadata.ok_or_else(|| ApiError::invalid("missing \"metadata\" part"))?;
    let media = media.ok_or_else(|| ApiError::invalid("missing \"media\" part"))?;
    if media.is_empty() {
        return Err(ApiError::invalid("media part is empty"));
    }
    validate_metadata(&meta, &project.label_map)?;

    let checksum = hex::encode(Sha256::digest(&media));
    let key = headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(|k| IdempotencyKey {
            submitter: account.account_id.clone(),
            project_id: project_id.clone(),
            key: k.to_owned(),
        });
    if let Some(key) = &key {
        // Fast path for retries: skip re-storing the bytes.
        if let Some(existing) = state.store.observation_for_key(key)? {
            if existing.media.checksum != checksum {
                return Err(StoreError::IdempotencyConflict { key: key.key.clone() }.into());
            }
            return Ok(receipt_response(StatusCode::OK, &existing, true));
        }
    }

    let blob = state.store.put_media(&checksum, &media)?;
    let observation = Observation {
        observation_id: fresh_id(),
        project_id,
        submitter: account.account_id,
        media: MediaRef {
            blob,
            checksum,
            size_bytes: media.len() as u64,
            width: meta.media_width,
            height: meta.media_height,
            content_type: meta.content_type,
        },
        captured_at: meta.captured_at,
        geo: meta.geo,
        detections: meta.detections,
        mode: meta.mode,
        received_at: Utc::now(),
    };
    Ok(match state.store.insert_observation(observation, key.as_ref())? {
        Inserted::New(o) => receipt_response(StatusCode::CREATED, &o, false),
        Inserted::Replayed(o) => receipt_response(StatusCode::OK, &o, true),
    })
}

fn receipt_response(status: StatusCode, observation: &Observation, replayed: bool) -> Response {
    let receipt = Receipt {
        observation_id: observation.observation_id.clone(),
        stored_checksum: observation.media.checksum.clone(),
    };
    let mut response = (status, Json(receipt)).into_response();
    if replayed {
        response
            .headers_mut()
            .insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
    }
    response
}

#[derive(Debug, Deserialize)]
struct CurationRequest {
    verdict: Verdict,
    #[serde(default)]
    corrected_boxes: Option<Vec<BoundingBox>>,
    #[serde(default)]
    feedback: Option<String>,
}

async fn curate(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(observation_id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<CurationRecord>)> {
    let account = authenticate(&state, &headers)?;
    if account.role != Role::Curator {
        return Err(ApiError::forbidden("only curators curate observations"));
    }
    let observation = state
        .store
        .observation(&observation_id)?
        .ok_or_else(|| ApiError::unknown_observation(&observation_id))?;
    let req: CurationRequest = parse_json(&body)?;
    match (req.verdict, &req.corrected_boxes) {
        (Verdict::Corrected, None) => return Err(ApiError::invalid("a corrected verdict needs corrected_boxes")),
        (Verdict::Corrected, Some(boxes)) => {
            let project = state
                .store
                .project(&observation.project_id)?
                .ok_or_else(|| ApiError::unknown_project(&observation.project_id))?;
            validate_boxes(
                boxes,
                &project.label_map,
                observation.media.width,
                observation.media.height,
                "corrected box",
            )?;
        }
        (_, Some(_)) => {
            return Err(ApiError::invalid(
                "corrected_boxes are only allowed with a corrected verdict",
            ))
        }
        (_, None) => {}
    }
    let record = CurationRecord {
        observation_id,
        curator: account.account_id,
        verdict: req.verdict,
        corrected_boxes: req.corrected_boxes,
        feedback_text: req.feedback.filter(|f| !f.trim().is_empty()),
        decided_at: Utc::now(),
    };
    state.store.insert_curation(record.clone())?;
    Ok((StatusCode::CREATED, Json(record)))
}

fn can_see(account: &Account, observation: &Observation) -> bool {
    account.role == Role::Curator || account.account_id == observation.submitter
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Feedback {
    pub observation_id: String,
    /// `pending` until a curator decides, then the active verdict.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_boxes: Option<Vec<BoundingBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_at: Option<DateTime<Utc>>,
}

async fn feedback(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(observation_id): Path<String>,
) -> ApiResult<Json<Feedback>> {
    let account = authenticate(&state, &headers)?;
    let observation = state
        .store
        .observation(&observation_id)?
        .ok_or_else(|| ApiError::unknown_observation(&observation_id))?;
    if !can_see(&account, &observation) {
        return Err(ApiError::forbidden(
            "feedback is visible to the submitter and curators only",
        ));
    }
    let record = state.store.active_curation(&observation_id)?;
    Ok(Json(match record {
        None => Feedback {
            observation_id,
            status: "pending".into(),
            feedback_text: None,
            corrected_boxes: None,
            decided_at: None,
        },
        Some(r) => Feedback {
            observation_id,
            status: serde_json::to_value(r.verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            feedback_text: r.feedback_text,
            corrected_boxes: r.corrected_boxes,
            decided_at: Some(r.decided_at),
        },
    }))
}

async fn media(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(observation_id): Path<String>,
) -> ApiResult<Response> {
    let account = authenticate(&state, &headers)?;
    let observation = state
        .store
        .observation(&observation_id)?
        .ok_or_else(|| ApiError::unknown_observation(&observation_id))?;
    if !can_see(&account, &observation) {
        return Err(ApiError::forbidden(
            "media is visible to the submitter and curators only",
        ));
    }
    let bytes = state.store.media(&observation.media.blob)?.ok_or_else(|| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "STORE_ERROR",
            "media blob is missing",
        )
    })?;
    let content_type = observation
        .media
        .content_type
        .unwrap_or_else(|| "application/octet-stream".into());
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct ExportQuery {
    /// RFC 3339; keeps observations captured at or after this instant.
    #[serde(default)]
    pub since: Option<String>,
    /// Comma-separated collection modes.
    #[serde(default)]
    pub modes: Option<String>,
}

/// Observations whose active record is accepted or corrected, as an
/// annotation set over the project's label map. Media ids are observation
/// ids.
pub fn retraining_set(
    store: &dyn Store,
    project: &Project,
    since: Option<DateTime<Utc>>,
    modes: Option<&[CollectionMode]>,
) -> Result<AnnotationSet, StoreError> {
    let mut set = AnnotationSet::empty(Task::Detection);
    set.label_map = project.label_map.clone();
    for obs in store.observations_in(&project.project_id)? {
        if since.is_some_and(|s| obs.captured_at < s) || modes.is_some_and(|m| !m.contains(&obs.mode)) {
            continue;
        }
        let boxes = match store.active_curation(&obs.observation_id)? {
            Some(r) if r.verdict == Verdict::Accepted => obs.detections.clone(),
            Some(r) if r.verdict == Verdict::Corrected => r.corrected_boxes.unwrap_or_default(),
            _ => continue,
        };
        if !boxes.is_empty() {
            set.boxes.insert(obs.observation_id.clone(), boxes);
        }
        set.images.push(ImageRecord::still(
            obs.observation_id,
            obs.media.width,
            obs.media.height,
        ));
    }
    Ok(set)
}

async fn retraining_export(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(project_id): Path<String>,
    Query(query): Query<ExportQuery>,
) -> ApiResult<Json<AnnotationSet>> {
    let account = authenticate(&state, &headers)?;
    let project = state
        .store
        .project(&project_id)?
        .ok_or_else(|| ApiError::unknown_project(&project_id))?;
    if account.role != Role::Curator && account.account_id != project.owner {
        return Err(ApiError::forbidden("export is for the project owner and curators"));
    }
    let since = query
        .since
        .as_deref()
        .filter(|s| !s.is_empty())
        .map(|s| {
            DateTime::parse_from_rfc3339(s)
                .map(|d| d.with_timezone(&Utc))
                .map_err(|e| ApiError::invalid(format!("since {s:?}: {e}")))
        })
        .transpose()?;
    let modes = query
        .modes
        .as_deref()
        .filter(|m| !m.is_empty())
        .map(|m| {
            m.split(',')
                .map(|part| {
                    CollectionMode::parse(part).ok_or_else(|| ApiError::invalid(format!("unknown mode {part:?}")))
                })
                .collect::<ApiResult<Vec<_>>>()
        })
        .transpose()?;
    let set = retraining_set(state.store.as_ref(), &project, since, modes.as_deref())?;
    let report = validate_annotation_set(&set);
    if !report.ok {
        return Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "INVALID_EXPORT",
            report.first_error().unwrap_or_default(),
        ));
    }
    Ok(Json(set))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(state: AppState) -> Router {
    // Multipart framing and the metadata part ride on top of the media cap.
    let upload_limit = usize::try_from(state.media_cap_bytes.saturating_add(1 << 20)).unwrap_or(usize::MAX);
    Router::new()
        .route("/health", get(health))
        .route("/accounts", post(register))
        .route("/tokens", post(sign_in))
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route(
            "/projects/{id}/observations",
            post(upload_observation).layer(DefaultBodyLimit::max(upload_limit)),
        )
        .route("/projects/{id}/retraining-export", get(retraining_export))
        .route("/observations/{id}/curation", post(curate))
        .route("/observations/{id}/feedback", get(feedback))
        .route("/observations/{id}/media", get(media))
        .with_state(state)
}
