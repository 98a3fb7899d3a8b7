//! JSON over HTTP for the annotation workflow.
//!
//! Annotators authenticate with the bearer token returned by `register`;
//! `/api/admin/*` routes require the admin token instead.
//!
//! | method | path | body | returns |
//! |---|---|---|---|
//! | POST | `/api/register` | `{email, domain}` | `{annotator, token}` |
//! | POST | `/api/consent` | `{data_use, cookies}` | annotator |
//! | GET | `/api/me` | | annotator |
//! | GET | `/api/tasks` | | task list |
//! | GET | `/api/instances/{id}` | | sentences, draft summary, own rating |
//! | PUT | `/api/instances/{id}/rating` | `{completeness, conciseness, traceability}` | rating record |
//! | GET | `/api/revisions` | | revision queue |
//! | PUT | `/api/instances/{id}/revision` | `{summary, citations, rationale}` | revision record |
//! | GET | `/api/instances/{id}/judgment-task` | | subclaims and citations to judge |
//! | PUT | `/api/instances/{id}/judgments` | `{verdicts: [...]}` | judgment record |
//! | GET | `/api/admin/annotators` | | all annotators |
//! | POST | `/api/admin/annotators/{id}/approve` | | annotator |
//! | POST | `/api/admin/assign` | `{seed}` | new assignments |
//! | GET | `/api/admin/ratings` | | all rating records |
//! | GET | `/api/admin/revision-selection` | | selected and skipped instances |
//! | PUT | `/api/admin/policy` | `{policy}` | policy |
//! | POST | `/api/admin/revisers` | `{instance_id, annotator_id}` | |
//! | POST | `/api/admin/judgment-tasks` | task list | `{loaded}` |
//! | GET | `/api/admin/judgments` | | judgments, judge `human` |
//! | POST | `/api/admin/export` | `{force}` | `{path, revised, pending}` |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use citesum::TraceableSummary;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;

use crate::model::{Annotator, Consent, Domain, HumanVerdict, JudgmentTask, RevisionPolicy, Scores};
use crate::service::AnnotationService;
use crate::ServiceError;

#[derive(Debug, Clone, Default)]
pub struct ApiConfig {
    pub admin_token: String,
    /// Served at `/` when set (the browser frontend's build output).
    pub static_dir: Option<PathBuf>,
    /// Where `/api/admin/export` writes the revised dataset.
    pub export_path: Option<PathBuf>,
}

struct AppState {
    service: AnnotationService,
    admin_token_sha256: [u8; 32],
    export_path: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Unauthenticated => StatusCode::UNAUTHORIZED,
            ServiceError::NotEligible(_) | ServiceError::Forbidden(_) => StatusCode::FORBIDDEN,
            ServiceError::UnknownAnnotator(_) | ServiceError::UnknownInstance(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidScore(_)
            | ServiceError::InvalidRevision(_)
            | ServiceError::InvalidVerdict(_)
            | ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Conflict(_) | ServiceError::PendingRevisions(_) | ServiceError::NoEligibleAnnotator(_) => {
                StatusCode::CONFLICT
            }
            ServiceError::Store(_) | ServiceError::Corpus(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

/// Runs a service call off the async workers; calls may block on disk.
async fn blocking<T, F>(state: &Arc<AppState>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ServiceError> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        })?
        .map_err(ApiError::from)
}

/// Runs `f` as the annotator owning the request's bearer token.
async fn as_annotator<T, F>(state: &Arc<AppState>, headers: &HeaderMap, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AnnotationService, &Annotator) -> Result<T, ServiceError> + Send + 'static,
{
    let token = bearer(headers).ok_or(ServiceError::Unauthenticated)?.to_string();
    blocking(state, move |st| {
        let me = st.service.authenticate(&token)?;
        f(&st.service, &me)
    })
    .await
    .map(Json)
}

async fn as_admin<T, F>(state: &Arc<AppState>, headers: &HeaderMap, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ServiceError> + Send + 'static,
{
    let ok = bearer(headers).is_some_and(|t| <[u8; 32]>::from(Sha256::digest(t)) == state.admin_token_sha256);
    if !ok {
        return Err(ServiceError::Unauthenticated.into());
    }
    blocking(state, f).await.map(Json)
}

#[derive(Deserialize)]
struct RegisterBody {
    email: String,
    domain: Domain,
}

#[derive(Serialize)]
struct Registered {
    annotator: Annotator,
    token: String,
}

async fn register(State(st): State<Arc<AppState>>, Json(body): Json<RegisterBody>) -> Result<Response, ApiError> {
    let (annotator, token) = blocking(&st, move |st| st.service.register(&body.email, body.domain)).await?;
    Ok((StatusCode::CREATED, Json(Registered { annotator, token })).into_response())
}

async fn consent(State(st): State<Arc<AppState>>, h: HeaderMap, Json(c): Json<Consent>) -> ApiResult<Annotator> {
    as_annotator(&st, &h, move |svc, me| svc.consent(&me.id, c)).await
}

async fn me(State(st): State<Arc<AppState>>, h: HeaderMap) -> ApiResult<Annotator> {
    as_annotator(&st, &h, |_, me| Ok(me.clone())).await
}

async fn tasks(State(st): State<Arc<AppState>>, h: HeaderMap) -> ApiResult<Vec<crate::TaskSummary>> {
    as_annotator(&st, &h, |svc, me| svc.tasks(&me.id)).await
}

async fn instance(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<crate::InstanceDetail> {
    as_annotator(&st, &h, move |svc, me| svc.instance_detail(&me.id, &id)).await
}

async fn rate(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Path(id): Path<String>,
    Json(scores): Json<Scores>,
) -> ApiResult<crate::RatingRecord> {
    as_annotator(&st, &h, move |svc, me| svc.submit_rating(&me.id, &id, scores)).await
}

async fn revision_queue(State(st): State<Arc<AppState>>, h: HeaderMap) -> ApiResult<Vec<crate::RevisionItem>> {
    as_annotator(&st, &h, |svc, me| svc.revision_queue(&me.id)).await
}

#[derive(Deserialize)]
struct RevisionBody {
    #[serde(flatten)]
    revised: TraceableSummary,
    #[serde(default)]
    rationale: String,
}

async fn revise(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<RevisionBody>,
) -> ApiResult<crate::RevisionRecord> {
    as_annotator(&st, &h, move |svc, me| {
        svc.submit_revision(&me.id, &id, body.revised, &body.rationale)
    })
    .await
}

async fn judgment_task(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<JudgmentTask> {
    as_annotator(&st, &h, move |svc, me| svc.judgment_task(&me.id, &id)).await
}

#[derive(Deserialize)]
struct JudgmentsBody {
    verdicts: Vec<HumanVerdict>,
}

async fn judge(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<JudgmentsBody>,
) -> ApiResult<crate::HumanJudgmentRecord> {
    as_annotator(&st, &h, move |svc, me| {
        svc.record_human_judgments(&me.id, &id, body.verdicts)
    })
    .await
}

async fn admin_annotators(State(st): State<Arc<AppState>>, h: HeaderMap) -> ApiResult<Vec<Annotator>> {
    as_admin(&st, &h, |st| Ok(st.service.annotators())).await
}

async fn admin_approve(State(st): State<Arc<AppState>>, h: HeaderMap, Path(id): Path<String>) -> ApiResult<Annotator> {
    as_admin(&st, &h, move |st| st.service.approve(&id)).await
}

#[derive(Deserialize)]
struct AssignBody {
    seed: u64,
}

async fn admin_assign(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Json(body): Json<AssignBody>,
) -> ApiResult<crate::Assignment> {
    as_admin(&st, &h, move |st| st.service.assign(body.seed)).await
}

async fn admin_ratings(State(st): State<Arc<AppState>>, h: HeaderMap) -> ApiResult<Vec<crate::RatingRecord>> {
    as_admin(&st, &h, |st| Ok(st.service.ratings())).await
}

async fn admin_selection(State(st): State<Arc<AppState>>, h: HeaderMap) -> ApiResult<crate::RevisionSelection> {
    as_admin(&st, &h, |st| Ok(st.service.revision_selection())).await
}

#[derive(Serialize, Deserialize)]
struct PolicyBody {
    policy: RevisionPolicy,
}

async fn admin_policy(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Json(body): Json<PolicyBody>,
) -> ApiResult<PolicyBody> {
    as_admin(&st, &h, move |st| {
        st.service.set_policy(body.policy)?;
        Ok(PolicyBody {
            policy: st.service.policy(),
        })
    })
    .await
}

#[derive(Deserialize)]
struct ReviserBody {
    instance_id: String,
    annotator_id: String,
}

async fn admin_reviser(State(st): State<Arc<AppState>>, h: HeaderMap, Json(b): Json<ReviserBody>) -> ApiResult<()> {
    as_admin(&st, &h, move |st| {
        st.service.assign_reviser(&b.instance_id, &b.annotator_id)
    })
    .await
}

async fn admin_load_tasks(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Json(tasks): Json<Vec<JudgmentTask>>,
) -> ApiResult<serde_json::Value> {
    as_admin(&st, &h, move |st| {
        Ok(json!({ "loaded": st.service.load_judgment_tasks(tasks)? }))
    })
    .await
}

async fn admin_judgments(State(st): State<Arc<AppState>>, h: HeaderMap) -> ApiResult<Vec<citesum::gateway::Judgment>> {
    as_admin(&st, &h, |st| Ok(st.service.human_judgments())).await
}

#[derive(Deserialize, Default)]
struct ExportBody {
    #[serde(default)]
    force: bool,
}

async fn admin_export(
    State(st): State<Arc<AppState>>,
    h: HeaderMap,
    Json(body): Json<ExportBody>,
) -> ApiResult<serde_json::Value> {
    as_admin(&st, &h, move |st| {
        let path = st
            .export_path
            .clone()
            .ok_or_else(|| ServiceError::Invalid("the server was started without an export path".into()))?;
        let dataset = st.service.export_revised_dataset(body.force)?;
        dataset.save(&path)?;
        Ok(json!({
            "path": path,
            "revised": st.service.revisions().len(),
            "pending": st.service.pending_revisions(),
        }))
    })
    .await
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(service: AnnotationService, config: ApiConfig) -> Router {
    let state = Arc::new(AppState {
        service,
        admin_token_sha256: Sha256::digest(config.admin_token.as_bytes()).into(),
        export_path: config.export_path,
    });
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/register", post(register))
        .route("/api/consent", post(consent))
        .route("/api/me", get(me))
        .route("/api/tasks", get(tasks))
        .route("/api/instances/{id}", get(instance))
        .route("/api/instances/{id}/rating", put(rate))
        .route("/api/revisions", get(revision_queue))
        .route("/api/instances/{id}/revision", put(revise))
        .route("/api/instances/{id}/judgment-task", get(judgment_task))
        .route("/api/instances/{id}/judgments", put(judge))
        .route("/api/admin/annotators", get(admin_annotators))
        .route("/api/admin/annotators/{id}/approve", post(admin_approve))
        .route("/api/admin/assign", post(admin_assign))
        .route("/api/admin/ratings", get(admin_ratings))
        .route("/api/admin/revision-selection", get(admin_selection))
        .route("/api/admin/policy", put(admin_policy))
        .route("/api/admin/revisers", post(admin_reviser))
        .route("/api/admin/judgment-tasks", post(admin_load_tasks))
        .route("/api/admin/judgments", get(admin_judgments))
        .route("/api/admin/export", post(admin_export))
        .with_state(state);
    match config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(service: AnnotationService, config: ApiConfig, addr: SocketAddr) -> std::io::Result<()> {
    if config.admin_token.is_empty() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "an admin token is required",
        ));
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
