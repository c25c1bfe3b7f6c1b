//! Local HTTP JSON API over a data directory.
//!
//! Reads are open; every `POST` needs `Authorization: Bearer <token>` with
//! the token the server was started with, and is refused outright when no
//! token was configured. Classification, ablation and projection run as
//! background jobs that clients poll.

mod error;
mod jobs;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use eit_core::annotation::{EarnestnessLabel, LabelStore, RubricScore};
use eit_core::classifier::{BinaryClass, NeighborEvidence};
use eit_core::embedding::{EmbeddingCache, EmbeddingProvider};
use eit_core::engagement::{flag_at_risk, AtRiskConfig};
use eit_core::features::{rule_based_sample, SamplerConfig};
use eit_core::pipeline::{self, AblateRequest, ClassifyRequest, ProjectRequest, DEFAULT_SEED};
use eit_core::store::Store;
use eit_core::{normalize_text, Corpus};

pub use error::{ApiError, ApiResult};
pub use jobs::{JobKind, JobRecord, JobStatus, JobTable};

pub const TOKEN_ENV: &str = "EIT_API_TOKEN";

pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub token: Option<String>,
    pub model_path: Option<PathBuf>,
    /// Built UI to serve under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

pub struct AppState {
    store: Mutex<Store>,
    corpus: Arc<Corpus>,
    labels: Mutex<LabelStore>,
    provider: Arc<dyn EmbeddingProvider>,
    cache: Arc<EmbeddingCache>,
    token: Option<String>,
    jobs: Mutex<JobTable>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl AppState {
    /// Opens the data directory as its single writer.
    pub fn open(config: &ServiceConfig) -> eit_core::Result<Arc<Self>> {
        let store = Store::open_writer(&config.data_dir)?;
        let provider = eit_core::embedding::select_provider(config.model_path.as_deref())?;
        Ok(Arc::new(Self {
            corpus: Arc::new(store.load_corpus()?),
            labels: Mutex::new(store.load_labels()?),
            cache: Arc::new(store.embedding_cache()),
            store: Mutex::new(store),
            provider,
            token: config.token.clone().filter(|t| !t.is_empty()),
            jobs: Mutex::new(JobTable::default()),
        }))
    }

    fn authorize(&self, headers: &HeaderMap) -> ApiResult<()> {
        let Some(expected) = &self.token else {
            return Err(ApiError::new(
                StatusCode::UNAUTHORIZED,
                format!("mutation is disabled: start the server with {TOKEN_ENV} set"),
            ));
        };
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(expected.as_str()) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token"));
        }
        Ok(())
    }
}

fn local_origin(origin: &HeaderValue) -> bool {
    let Ok(o) = origin.to_str() else { return false };
    let rest = o.strip_prefix("http://").or_else(|| o.strip_prefix("https://")).unwrap_or("");
    let host = rest.split(':').next().unwrap_or("");
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|o, _| local_origin(o)))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]);
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/questions", get(questions))
        .route("/questions/{id}/responses", get(responses))
        .route("/questions/{id}/sample", get(sample))
        .route("/labels", post(post_label))
        .route("/labels/agreement", get(agreement))
        .route("/jobs/classify", post(job_classify))
        .route("/jobs/ablate", post(job_ablate))
        .route("/jobs/project", post(job_project))
        .route("/jobs/{id}", get(job_status))
        .route("/runs", get(runs))
        .route("/runs/{id}", get(run))
        .route("/runs/{id}/classes", get(run_classes))
        .route("/atrisk", get(atrisk))
        .with_state(state);
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.layer(cors)
}

/// Serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(&config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, config.ui_dir)).await
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Serialize)]
struct QuestionSummary<'a> {
    #[serde(flatten)]
    question: &'a eit_core::Question,
    responses: usize,
    unique_responses: usize,
}

async fn questions(State(s): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let list: Vec<QuestionSummary> = s
        .corpus
        .questions()
        .map(|q| QuestionSummary {
            question: q,
            responses: s.corpus.responses_for(&q.question_id).count(),
            unique_responses: s.corpus.unique_responses(&q.question_id).map_or(0, |u| u.len()),
        })
        .collect();
    Ok(Json(serde_json::to_value(list).expect("serializable")))
}

#[derive(Deserialize)]
struct PageQuery {
    page: Option<usize>,
    per_page: Option<usize>,
}

pub const MAX_PER_PAGE: usize = 500;

/// Unique responses, most frequent first, one page at a time (1-based).
async fn responses(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<PageQuery>) -> ApiResult<Json<Value>> {
    let page = q.page.unwrap_or(1);
    let per_page = q.per_page.unwrap_or(50);
    if page == 0 {
        return Err(ApiError::field("page", "page numbers start at 1"));
    }
    if per_page == 0 || per_page > MAX_PER_PAGE {
        return Err(ApiError::field("per_page", format!("per_page must be between 1 and {MAX_PER_PAGE}")));
    }
    let all = s.corpus.unique_responses(&id)?;
    let total = all.len();
    let items: Vec<_> = all.into_iter().skip((page - 1) * per_page).take(per_page).collect();
    Ok(Json(json!({
        "question_id": id,
        "page": page,
        "per_page": per_page,
        "total": total,
        "pages": total.div_ceil(per_page),
        "items": items,
    })))
}

#[derive(Deserialize)]
struct SampleQuery {
    n: Option<usize>,
    seed: Option<u64>,
}

async fn sample(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<SampleQuery>) -> ApiResult<Json<Value>> {
    let config = SamplerConfig {
        target_n: q.n.unwrap_or(SamplerConfig::default().target_n),
        seed: q.seed.unwrap_or(DEFAULT_SEED),
        ..SamplerConfig::default()
    };
    let state = s.clone();
    let result = tokio::task::spawn_blocking(move || {
        rule_based_sample(&state.corpus, &id, &config, state.provider.as_ref(), Some(&state.cache))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(serde_json::to_value(result).expect("serializable")))
}

#[derive(Deserialize)]
struct LabelBody {
    annotator: String,
    question: String,
    text: String,
    score: Value,
}

async fn post_label(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    payload: Result<Json<LabelBody>, JsonRejection>,
) -> ApiResult<Json<EarnestnessLabel>> {
    s.authorize(&headers)?;
    let b = body(payload)?;
    let score = b
        .score
        .as_i64()
        .ok_or_else(|| ApiError::field("score", format!("score must be an integer from 1 to 5, got {}", b.score)))
        .and_then(|v| {
            RubricScore::new(v).map_err(|_| ApiError::field("score", format!("score must be an integer from 1 to 5, got {v}")))
        })?;
    if b.annotator.trim().is_empty() {
        return Err(ApiError::field("annotator", "annotator must not be empty"));
    }
    let label = EarnestnessLabel {
        annotator_id: b.annotator.trim().to_string(),
        question_id: b.question,
        normalized_text: normalize_text(&b.text),
        score,
        labeled_at: Utc::now(),
    };
    let mut labels = lock(&s.labels);
    let stored = labels.record_label(&s.corpus, label)?.clone();
    lock(&s.store).save_labels(&labels)?;
    Ok(Json(stored))
}

#[derive(Deserialize)]
struct AgreementQuery {
    question: Option<String>,
}

async fn agreement(State(s): State<Arc<AppState>>, Query(q): Query<AgreementQuery>) -> ApiResult<Json<Value>> {
    let a = lock(&s.labels).agreement(q.question.as_deref())?;
    Ok(Json(serde_json::to_value(a).expect("serializable")))
}

type JobOutcome = Result<(Option<String>, Option<Value>), String>;

fn spawn_job(s: &Arc<AppState>, kind: JobKind, question_id: &str, work: impl FnOnce(&AppState, LabelStore) -> JobOutcome + Send + 'static) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let record = lock(&s.jobs).submit(kind, question_id).ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, format!("a job is already running on question `{question_id}`"))
    })?;
    let state = s.clone();
    let job_id = record.job_id.clone();
    tokio::task::spawn_blocking(move || {
        lock(&state.jobs).start(&job_id);
        let labels = lock(&state.labels).clone();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| work(&state, labels)))
            .unwrap_or_else(|_| Err("job panicked".to_string()));
        lock(&state.jobs).finish(&job_id, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn job_classify(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    payload: Result<Json<ClassifyRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    s.authorize(&headers)?;
    let req = body(payload)?;
    s.corpus.word_cloud_question(&req.question_id)?;
    let qid = req.question_id.clone();
    spawn_job(&s, JobKind::Classify, &qid, move |state, labels| {
        let mut run = pipeline::classify(&state.corpus, &labels, &req, state.provider.as_ref(), Some(&state.cache))
            .map_err(|e| e.to_string())?;
        let id = lock(&state.store).save_run(&mut run).map_err(|e| e.to_string())?;
        Ok((Some(id), None))
    })
}

async fn job_ablate(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    payload: Result<Json<AblateRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    s.authorize(&headers)?;
    let mut req = body(payload)?;
    let qid = match &req.question_id {
        Some(q) => q.clone(),
        None => pipeline::most_labeled_question(&lock(&s.labels)).ok_or_else(|| ApiError::bad_request("no labels recorded yet"))?,
    };
    s.corpus.word_cloud_question(&qid)?;
    req.question_id = Some(qid.clone());
    spawn_job(&s, JobKind::Ablate, &qid, move |state, labels| {
        let report = pipeline::ablate(&state.corpus, &labels, &req, state.provider.as_ref(), Some(&state.cache))
            .map_err(|e| e.to_string())?;
        Ok((None, Some(serde_json::to_value(report).map_err(|e| e.to_string())?)))
    })
}

#[derive(Deserialize)]
struct ProjectBody {
    #[serde(flatten)]
    request: ProjectRequest,
    /// Colors unlabeled points by this run's classes.
    run_id: Option<String>,
}

async fn job_project(
    State(s): State<Arc<AppState>>,
    headers: HeaderMap,
    payload: Result<Json<ProjectBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    s.authorize(&headers)?;
    let b = body(payload)?;
    s.corpus.word_cloud_question(&b.request.question_id)?;
    let run = match &b.run_id {
        Some(id) => Some(lock(&s.store).load_run(id)?),
        None => None,
    };
    let qid = b.request.question_id.clone();
    spawn_job(&s, JobKind::Project, &qid, move |state, labels| {
        let points = pipeline::project(&state.corpus, &labels, &b.request, run.as_ref(), state.provider.as_ref(), Some(&state.cache))
            .map_err(|e| e.to_string())?;
        Ok((None, Some(serde_json::to_value(points).map_err(|e| e.to_string())?)))
    })
}

async fn job_status(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    lock(&s.jobs)
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))
}

#[derive(Serialize)]
struct RunSummary {
    run_id: String,
    question_id: String,
    fingerprint: String,
    started_at: chrono::DateTime<Utc>,
    unique_responses: usize,
    responses: usize,
    non_earnest_responses: usize,
}

async fn runs(State(s): State<Arc<AppState>>) -> ApiResult<Json<Vec<RunSummary>>> {
    let runs = lock(&s.store).list_runs()?;
    Ok(Json(
        runs.into_iter()
            .map(|r| RunSummary {
                non_earnest_responses: r
                    .classes
                    .iter()
                    .filter(|c| c.class == BinaryClass::NonEarnest)
                    .map(|c| c.count)
                    .sum(),
                responses: r.classes.iter().map(|c| c.count).sum(),
                unique_responses: r.classes.len(),
                run_id: r.run_id,
                question_id: r.question_id,
                fingerprint: r.fingerprint,
                started_at: r.started_at,
            })
            .collect(),
    ))
}

async fn run(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let run = lock(&s.store).load_run(&id)?;
    Ok(Json(serde_json::to_value(run).expect("serializable")))
}

#[derive(Serialize)]
struct ClassEntry {
    normalized_text: String,
    class: BinaryClass,
    count: usize,
    neighbors: Vec<NeighborEvidence>,
}

async fn run_classes(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let run = lock(&s.store).load_run(&id)?;
    let classes: Vec<ClassEntry> = run
        .classes
        .into_iter()
        .map(|c| ClassEntry {
            normalized_text: c.normalized_text,
            class: c.class,
            count: c.count,
            neighbors: c.neighbors,
        })
        .collect();
    Ok(Json(json!({ "run_id": run.run_id, "question_id": run.question_id, "classes": classes })))
}

#[derive(Deserialize)]
struct AtRiskQuery {
    threshold: Option<f64>,
    window: Option<usize>,
    min_responses: Option<usize>,
}

async fn atrisk(State(s): State<Arc<AppState>>, Query(q): Query<AtRiskQuery>) -> ApiResult<Json<Value>> {
    let d = AtRiskConfig::default();
    let config = AtRiskConfig {
        non_earnest_threshold: q.threshold.unwrap_or(d.non_earnest_threshold),
        window_lectures: q.window.unwrap_or(d.window_lectures),
        min_responses: q.min_responses.unwrap_or(d.min_responses),
    };
    let runs = lock(&s.store).list_runs()?;
    let flagged = flag_at_risk(&s.corpus, &runs, &config)?;
    Ok(Json(serde_json::to_value(flagged).expect("serializable")))
}
