//! HTTP session service for interactive (human or remote agent) episodes.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{split?, record_id?, owner?}` | `{session_id, record_id, question, description}` |
//! | GET | `/sessions/{id}/observation` | | observation view |
//! | POST | `/sessions/{id}/action` | `{index}` | observation view |
//! | POST | `/sessions/{id}/answer` | `{text}` | `{trajectory_id, trajectory, scores}` |
//! | GET | `/reports/{run_id}` | | `MetricsReport` |
//!
//! Site files are served under `/site/`, the UI bundle under `/ui/`.
//! `run_id = "sessions"` scores the service's own trajectory log; other
//! ids name `<runs_dir>/<run_id>/trajectories.jsonl` written by `eval`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use uuid::Uuid;
use webvln_core::graph::{NavGraph, WebPage};
use webvln_core::metrics::{episode_scores, metrics_report, EpisodeScores, MetricsReport, Taxonomy};
use webvln_core::sim::{Action, EpisodeRecord, EpisodeState, SimError, Simulator, Split, Trajectory};

use crate::formats::{append_jsonl, read_jsonl};
use crate::site::{lexical_normalize, resolve_asset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    #[default]
    Human,
    Agent,
}

#[derive(Debug)]
pub struct Session {
    pub session_id: Uuid,
    pub record: EpisodeRecord,
    pub state: EpisodeState,
    pub owner: Owner,
    pub created_at: u64,
    last_used: Instant,
    answered: bool,
}

/// Shared service state. Graph, records and taxonomy are read-only; each
/// session sits behind its own lock.
pub struct AppState {
    pub graph: NavGraph,
    pub records: BTreeMap<String, EpisodeRecord>,
    pub taxonomy: Taxonomy,
    pub site_root: PathBuf,
    pub max_steps: usize,
    pub token: Option<String>,
    pub idle_timeout: Duration,
    pub log_path: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<Uuid, Arc<tokio::sync::Mutex<Session>>>>,
    picks: AtomicU64,
}

impl AppState {
    pub fn new(graph: NavGraph, records: Vec<EpisodeRecord>, taxonomy: Taxonomy, site_root: PathBuf) -> Self {
        AppState {
            graph,
            records: records.into_iter().map(|r| (r.record_id.clone(), r)).collect(),
            taxonomy,
            site_root,
            max_steps: webvln_core::sim::DEFAULT_MAX_STEPS,
            token: None,
            idle_timeout: Duration::from_secs(1800),
            log_path: None,
            runs_dir: None,
            ui_dir: None,
            sessions: Mutex::new(HashMap::new()),
            picks: AtomicU64::new(0),
        }
    }

    fn sim(&self) -> Simulator<'_> {
        Simulator::with_max_steps(&self.graph, self.max_steps)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map lock").len()
    }

    /// Drops sessions idle for longer than the timeout; returns how many.
    pub fn sweep(&self) -> usize {
        let mut map = self.sessions.lock().expect("session map lock");
        let before = map.len();
        map.retain(|_, s| match s.try_lock() {
            Ok(s) => s.last_used.elapsed() < self.idle_timeout,
            Err(_) => true,
        });
        before - map.len()
    }

    /// Waits for and holds a session's lock, as a request handler would.
    pub async fn lock_session(&self, id: Uuid) -> Option<tokio::sync::OwnedMutexGuard<Session>> {
        let s = self.sessions.lock().expect("session map lock").get(&id).cloned()?;
        Some(s.lock_owned().await)
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
        let id = Uuid::parse_str(id).map_err(|_| ApiError::not_found("unknown session"))?;
        self.sessions.lock().expect("session map lock").get(&id).cloned().ok_or_else(|| ApiError::not_found("unknown session"))
    }

    fn image_url(&self, page: &WebPage, src: &str) -> Option<String> {
        let page_dir = self.site_root.join(&page.source_path);
        let path = resolve_asset(&self.site_root, page_dir.parent()?, src)?;
        site_url(path.strip_prefix(lexical_normalize(&self.site_root)).ok()?)
    }

    /// Observation payload for a session's current state.
    pub fn view(&self, session: &Session) -> Result<ObservationView, ApiError> {
        let page = self.graph.require(session.state.current_page.as_str()).map_err(|e| ApiError::internal(e.to_string()))?;
        let candidates = if session.state.done {
            Vec::new()
        } else {
            let obs = self.sim().observe(&session.state).map_err(ApiError::from)?;
            obs.candidates
                .iter()
                .enumerate()
                .map(|(index, c)| match c {
                    Action::Click(b) => CandidateView {
                        index,
                        stop: false,
                        description: b.description.clone(),
                        label: b.label(),
                        image_url: b.image_ref.as_deref().and_then(|src| self.image_url(page, src)),
                    },
                    Action::Stop => CandidateView { index, stop: true, description: None, label: "stop".into(), image_url: None },
                })
                .collect()
        };
        Ok(ObservationView {
            session_id: session.session_id.to_string(),
            page_id: page.page_id.to_string(),
            screenshot_url: site_url(Path::new(&page.screenshot_ref)).unwrap_or_default(),
            candidates,
            step: session.state.t,
            done: session.state.done,
            forced_stop: session.state.forced_stop,
        })
    }
}

fn site_url(rel: &Path) -> Option<String> {
    let parts: Vec<&str> = rel.components().map(|c| c.as_os_str().to_str()).collect::<Option<_>>()?;
    Some(format!("/site/{}", parts.join("/")))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub index: usize,
    pub stop: bool,
    pub description: Option<String>,
    pub label: String,
    pub image_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationView {
    pub session_id: String,
    pub page_id: String,
    pub screenshot_url: String,
    pub candidates: Vec<CandidateView>,
    pub step: usize,
    pub done: bool,
    pub forced_stop: bool,
}

#[derive(Debug, Default, Deserialize)]
pub struct CreateSession {
    pub split: Option<Split>,
    pub record_id: Option<String>,
    #[serde(default)]
    pub owner: Owner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub record_id: String,
    pub question: String,
    pub description: String,
}

#[derive(Debug, Deserialize)]
pub struct ActionBody {
    pub index: usize,
}

#[derive(Debug, Deserialize)]
pub struct AnswerBody {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerReply {
    pub trajectory_id: String,
    pub trajectory: Trajectory,
    pub scores: EpisodeScores,
}

/// One line of the service trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub trajectory_id: String,
    pub session_id: String,
    pub owner: Owner,
    pub created_at: u64,
    pub finished_at: u64,
    pub trajectory: Trajectory,
}

/// JSON error with a status code.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, body: json!({ "error": message.into() }) }
    }
    fn not_found(m: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, m)
    }
    fn conflict(m: &str) -> Self {
        Self::new(StatusCode::CONFLICT, m)
    }
    fn bad_request(m: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, m)
    }
    fn internal(m: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, m)
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidActionIndex { index, count } => ApiError {
                status: StatusCode::BAD_REQUEST,
                body: json!({ "error": e.to_string(), "index": index, "candidate_count": count }),
            },
            SimError::EpisodeFinished => Self::conflict("episode already finished"),
            SimError::EpisodeNotFinished => Self::conflict("episode not finished; stop before answering"),
            SimError::RecordGraphMismatch { .. } => Self::bad_request(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Shared = Arc<AppState>;

async fn create_session(State(app): State<Shared>, body: Option<Json<CreateSession>>) -> Result<Json<SessionCreated>, ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let record = match &req.record_id {
        Some(id) => app.records.get(id).ok_or_else(|| ApiError::not_found("unknown record"))?.clone(),
        None => {
            let pool: Vec<&EpisodeRecord> = app.records.values().filter(|r| req.split.is_none_or(|s| r.split == Some(s))).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(app.picks.fetch_add(1, Ordering::Relaxed));
            (*pool.choose(&mut rng).ok_or_else(|| ApiError::not_found("no records for that split"))?).clone()
        }
    };
    let state = app.sim().reset(&record)?;
    let session = Session {
        session_id: Uuid::new_v4(),
        state,
        owner: req.owner,
        created_at: unix_now(),
        last_used: Instant::now(),
        answered: false,
        record,
    };
    let reply = SessionCreated {
        session_id: session.session_id.to_string(),
        record_id: session.record.record_id.clone(),
        question: session.record.question.clone(),
        description: session.record.description.clone(),
    };
    app.sessions.lock().expect("session map lock").insert(session.session_id, Arc::new(tokio::sync::Mutex::new(session)));
    Ok(Json(reply))
}

/// Locks a session for one request; a concurrent request gets 409.
fn claim(app: &AppState, id: &str) -> Result<tokio::sync::OwnedMutexGuard<Session>, ApiError> {
    let s = app.session(id)?;
    let mut guard = s.try_lock_owned().map_err(|_| ApiError::conflict("session busy"))?;
    if guard.last_used.elapsed() >= app.idle_timeout {
        drop(guard);
        app.sweep();
        return Err(ApiError::not_found("unknown session"));
    }
    guard.last_used = Instant::now();
    Ok(guard)
}

async fn observation(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<ObservationView>, ApiError> {
    let s = claim(&app, &id)?;
    Ok(Json(app.view(&s)?))
}

async fn action(State(app): State<Shared>, UrlPath(id): UrlPath<String>, Json(body): Json<ActionBody>) -> Result<Json<ObservationView>, ApiError> {
    let mut s = claim(&app, &id)?;
    if s.state.done {
        return Err(ApiError::conflict("episode already finished"));
    }
    s.state = app.sim().step(s.state.clone(), body.index)?;
    Ok(Json(app.view(&s)?))
}

async fn answer(State(app): State<Shared>, UrlPath(id): UrlPath<String>, Json(body): Json<AnswerBody>) -> Result<Json<AnswerReply>, ApiError> {
    let mut s = claim(&app, &id)?;
    if s.answered {
        return Err(ApiError::conflict("episode already answered"));
    }
    let trajectory = app.sim().finish_with_answer(&s.state, body.text)?;
    let scores = episode_scores(&trajectory, &s.record, &app.graph, &app.taxonomy).map_err(|e| ApiError::internal(e.to_string()))?;
    let entry = LogEntry {
        trajectory_id: Uuid::new_v4().to_string(),
        session_id: s.session_id.to_string(),
        owner: s.owner,
        created_at: s.created_at,
        finished_at: unix_now(),
        trajectory: trajectory.clone(),
    };
    if let Some(p) = &app.log_path {
        append_jsonl(p, &entry).map_err(|e| ApiError::internal(format!("writing trajectory log: {e}")))?;
    }
    s.answered = true;
    Ok(Json(AnswerReply { trajectory_id: entry.trajectory_id, trajectory, scores }))
}

/// Scores a trajectory log against the loaded records.
pub fn report_from_trajectories(app: &AppState, trajectories: &[Trajectory]) -> Result<MetricsReport, ApiError> {
    metrics_report(trajectories, &app.records, &app.graph, &app.taxonomy).map_err(|e| ApiError::internal(e.to_string()))
}

async fn report(State(app): State<Shared>, UrlPath(run_id): UrlPath<String>) -> Result<Json<MetricsReport>, ApiError> {
    let trajectories: Vec<Trajectory> = if run_id == "sessions" {
        let Some(p) = app.log_path.as_ref().filter(|p| p.exists()) else {
            return Err(ApiError::not_found("no session log"));
        };
        let entries: Vec<LogEntry> = read_jsonl(p).map_err(|e| ApiError::internal(e.to_string()))?;
        entries.into_iter().map(|e| e.trajectory).collect()
    } else {
        if run_id.is_empty() || !run_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(ApiError::bad_request("invalid run id"));
        }
        let path = app.runs_dir.as_ref().map(|d| d.join(&run_id).join("trajectories.jsonl")).filter(|p| p.exists());
        let path = path.ok_or_else(|| ApiError::not_found("unknown run"))?;
        read_jsonl(&path).map_err(|e| ApiError::internal(e.to_string()))?
    };
    Ok(Json(report_from_trajectories(&app, &trajectories)?))
}

async fn require_token(State(app): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(app: Shared) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/observation", get(observation))
        .route("/sessions/{id}/action", post(action))
        .route("/sessions/{id}/answer", post(answer))
        .route("/reports/{run_id}", get(report))
        .route_layer(middleware::from_fn_with_state(app.clone(), require_token));
    let mut r = api.nest_service("/site", ServeDir::new(&app.site_root));
    if let Some(ui) = &app.ui_dir {
        r = r.nest_service("/ui", ServeDir::new(ui));
    }
    r.with_state(app)
}

/// Serves until the process is stopped, sweeping idle sessions.
pub async fn serve(app: Shared, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    let sweeper = app.clone();
    tokio::spawn(async move {
        let period = (sweeper.idle_timeout / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.sweep();
        }
    });
    axum::serve(listener, router(app)).await?;
    Ok(())
}
