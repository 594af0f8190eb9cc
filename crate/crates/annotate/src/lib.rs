//! HTTP service for human evaluation of multiple-choice instances.
//!
//! An annotator opens a session over a seeded sample of one split, is served
//! one instance at a time (article and options, never the gold index), and
//! answers with a choice plus an Easy/Medium/Hard difficulty label. Sessions
//! and answers go to an append-only JSONL log that is replayed on startup.
//!
//! | Method | Path | Body |
//! |---|---|---|
//! | POST | `/api/session` | `{split, n, seed}` |
//! | GET | `/api/session/{id}/next` | |
//! | POST | `/api/session/{id}/answer` | `{instance_id, choice, difficulty, elapsed_ms?}` |
//! | GET | `/api/session/{id}/review` | (only once the session is complete) |
//! | GET | `/api/stats?session={id}` | |

pub mod store;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mcgen_core::evalharness::{difficulty_table, render_difficulty_table, Difficulty};
use mcgen_core::mccreate::{McInstance, Split};
use mcgen_core::seed::Seeds;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

pub use store::{AnnotationRecord, LogEvent, RecordLog, SessionRecord};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("record log: {0}")]
    Log(String),
    #[error(transparent)]
    Core(#[from] mcgen_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Error body `{"error": code, "message": ...}` with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug)]
struct Session {
    record: SessionRecord,
    answers: Vec<AnnotationRecord>,
    served_at: Option<Instant>,
}

impl Session {
    fn complete(&self) -> bool {
        self.answers.len() == self.record.instance_ids.len()
    }
}

#[derive(Debug)]
pub struct AppState {
    instances: HashMap<String, McInstance>,
    by_split: BTreeMap<Split, Vec<String>>,
    sessions: Mutex<BTreeMap<String, Arc<tokio::sync::Mutex<Session>>>>,
    log: RecordLog,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl AppState {
    /// Indexes `instances` and restores sessions and answers from `log_path`.
    pub fn new(instances: Vec<McInstance>, log_path: impl AsRef<Path>) -> Result<Self> {
        let mut by_split: BTreeMap<Split, Vec<String>> = BTreeMap::new();
        let mut index = HashMap::new();
        for inst in instances {
            by_split.entry(inst.split).or_default().push(inst.id.clone());
            if index.insert(inst.id.clone(), inst).is_some() {
                return Err(Error::Log("duplicate instance id in dataset".into()));
            }
        }
        let (log, events) = RecordLog::open(log_path)?;
        let mut sessions: BTreeMap<String, Session> = BTreeMap::new();
        for ev in events {
            match ev {
                LogEvent::Session(r) => {
                    if let Some(id) = r.instance_ids.iter().find(|id| !index.contains_key(*id)) {
                        return Err(Error::Log(format!("session {} references unknown instance {id}", r.session_id)));
                    }
                    sessions.insert(
                        r.session_id.clone(),
                        Session {
                            record: r,
                            answers: Vec::new(),
                            served_at: None,
                        },
                    );
                }
                LogEvent::Answer(a) => {
                    let s = sessions
                        .get_mut(&a.session_id)
                        .ok_or_else(|| Error::Log(format!("answer for unknown session {}", a.session_id)))?;
                    s.answers.push(a);
                }
            }
        }
        Ok(AppState {
            instances: index,
            by_split,
            sessions: Mutex::new(sessions.into_iter().map(|(k, v)| (k, Arc::new(tokio::sync::Mutex::new(v)))).collect()),
            log,
        })
    }

    fn session(&self, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<Session>>> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`")))
    }

    /// Seeded sample of `n` ids from `split`, without replacement.
    pub fn sample(&self, split: Split, n: usize, seed: u64) -> ApiResult<Vec<String>> {
        let pool = self.by_split.get(&split).map(Vec::as_slice).unwrap_or_default();
        if n == 0 {
            return Err(ApiError::bad("invalid_request", "n must be at least 1"));
        }
        if n > pool.len() {
            return Err(ApiError::bad(
                "sample_too_large",
                format!("n = {n} exceeds the {} instances of split {split}", pool.len()),
            ));
        }
        let mut ids = pool.to_vec();
        ids.shuffle(&mut Seeds::new(seed).rng("annotate-sample"));
        ids.truncate(n);
        Ok(ids)
    }
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    split: String,
    n: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize)]
pub struct InstanceView<'a> {
    pub id: &'a str,
    pub article: &'a str,
    pub options: &'a [String],
}

#[derive(Debug, Deserialize)]
struct Answer {
    instance_id: Option<String>,
    choice: Option<usize>,
    difficulty: Option<String>,
    elapsed_ms: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct StatsQuery {
    session: Option<String>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad("invalid_request", e.to_string()))
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_json(&body)?;
    let split: Split = req
        .split
        .parse()
        .map_err(|_| ApiError::bad("unknown_split", format!("unknown split `{}`", req.split)))?;
    let ids = st.sample(split, req.n, req.seed)?;
    let mut map = st.sessions.lock().expect("session map poisoned");
    let session_id = format!("s{:04}", map.len() + 1);
    let record = SessionRecord {
        session_id: session_id.clone(),
        split,
        n: req.n,
        seed: req.seed,
        instance_ids: ids,
        created_ms: now_ms(),
    };
    st.log.append(&LogEvent::Session(record.clone()))?;
    map.insert(
        session_id.clone(),
        Arc::new(tokio::sync::Mutex::new(Session {
            record,
            answers: Vec::new(),
            served_at: None,
        })),
    );
    let body = json!({ "session_id": session_id, "split": split, "n": req.n, "seed": req.seed });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn next_instance(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let sess = st.session(&id)?;
    let mut s = sess.lock().await;
    let total = s.record.instance_ids.len();
    if s.complete() {
        return Ok(Json(json!({ "done": true, "answered": total, "total": total })).into_response());
    }
    let pos = s.answers.len();
    let inst = &st.instances[&s.record.instance_ids[pos]];
    s.served_at.get_or_insert_with(Instant::now);
    let view = InstanceView {
        id: &inst.id,
        article: &inst.article,
        options: &inst.options,
    };
    Ok(Json(json!({ "done": false, "position": pos, "total": total, "instance": view })).into_response())
}

async fn submit_answer(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: Answer = parse_json(&body)?;
    let sess = st.session(&id)?;
    let mut s = sess.lock().await;
    let instance_id = req
        .instance_id
        .ok_or_else(|| ApiError::bad("invalid_request", "instance_id is required"))?;
    let difficulty: Difficulty = req
        .difficulty
        .ok_or_else(|| ApiError::bad("missing_difficulty", "difficulty is required"))?
        .parse()
        .map_err(|_| ApiError::bad("invalid_difficulty", "difficulty must be easy, medium or hard"))?;
    let choice = req.choice.ok_or_else(|| ApiError::bad("invalid_choice", "choice is required"))?;
    if s.answers.iter().any(|a| a.instance_id == instance_id) {
        return Err(ApiError::new(StatusCode::CONFLICT, "duplicate", format!("{instance_id} already answered")));
    }
    if s.complete() {
        return Err(ApiError::new(StatusCode::CONFLICT, "session_complete", "all instances answered"));
    }
    let current = &s.record.instance_ids[s.answers.len()];
    if *current != instance_id {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "out_of_order",
            format!("current instance is {current}, got {instance_id}"),
        ));
    }
    let n_options = st.instances[current].options.len();
    if choice >= n_options {
        return Err(ApiError::bad("invalid_choice", format!("choice must be below {n_options}")));
    }
    let elapsed_ms = req
        .elapsed_ms
        .unwrap_or_else(|| s.served_at.map_or(0, |t| t.elapsed().as_millis() as u64));
    let rec = AnnotationRecord {
        session_id: id,
        instance_id,
        chosen_index: choice,
        difficulty,
        elapsed_ms,
        timestamp_ms: now_ms(),
    };
    st.log.append(&LogEvent::Answer(rec.clone()))?;
    s.answers.push(rec);
    s.served_at = None;
    let total = s.record.instance_ids.len();
    Ok(Json(json!({ "accepted": true, "answered": s.answers.len(), "remaining": total - s.answers.len() })).into_response())
}

async fn review(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let sess = st.session(&id)?;
    let s = sess.lock().await;
    if !s.complete() {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "not_complete", "review opens after the last answer"));
    }
    let items: Vec<_> = s
        .answers
        .iter()
        .map(|a| {
            let gold = st.instances[&a.instance_id].gold_index;
            json!({
                "instance_id": a.instance_id,
                "chosen_index": a.chosen_index,
                "gold_index": gold,
                "correct": a.chosen_index == gold,
                "difficulty": a.difficulty,
            })
        })
        .collect();
    Ok(Json(json!({ "session_id": id, "items": items })).into_response())
}

/// Per-difficulty share and accuracy over `records`, plus Overall.
pub fn stats_of(instances: &HashMap<String, McInstance>, records: &[AnnotationRecord]) -> ApiResult<serde_json::Value> {
    let judged: Vec<(bool, Difficulty)> = records
        .iter()
        .map(|r| (instances[&r.instance_id].gold_index == r.chosen_index, r.difficulty))
        .collect();
    let rows = difficulty_table(&judged)
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "no_records", "no answers recorded yet"))?;
    let correct = judged.iter().filter(|j| j.0).count();
    let table: Vec<_> = rows
        .iter()
        .map(|(d, r)| json!({ "difficulty": d.to_string(), "n": r.n, "share": r.share, "accuracy": r.accuracy }))
        .collect();
    Ok(json!({
        "records": judged.len(),
        "rows": table,
        "overall": { "n": judged.len(), "correct": correct, "accuracy": correct as f64 / judged.len() as f64 },
        "table": render_difficulty_table(&rows),
    }))
}

async fn stats(State(st): State<Arc<AppState>>, Query(q): Query<StatsQuery>) -> ApiResult<Response> {
    let sessions: Vec<_> = match &q.session {
        Some(id) => vec![st.session(id)?],
        None => st.sessions.lock().expect("session map poisoned").values().cloned().collect(),
    };
    let mut records = Vec::new();
    for s in sessions {
        records.extend(s.lock().await.answers.iter().cloned());
    }
    let mut body = stats_of(&st.instances, &records)?;
    body["session"] = json!(q.session);
    Ok(Json(body).into_response())
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/next", get(next_instance))
        .route("/api/session/{id}/answer", post(submit_answer))
        .route("/api/session/{id}/review", get(review))
        .route("/api/stats", get(stats))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process ends. Returns the bound address
/// through `on_bind` before accepting connections.
pub async fn serve(
    state: Arc<AppState>,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
    on_bind: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bind(listener.local_addr()?);
    axum::serve(listener, router(state, static_dir.as_deref())).await
}
