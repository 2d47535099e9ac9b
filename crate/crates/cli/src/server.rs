//! Live session service.
//!
//! One simulation behind a mutex, advanced by a paced clock task. Observers
//! poll `/api/snapshot` or follow `/api/stream`; operators post instructions
//! to `/api/instructions`, which queue them for the next step boundary.

use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use mrta_core::executor::{write_trace, Ack, Simulation, Snapshot, Status};
use mrta_core::scenario::{Instruction, Scenario};
use mrta_core::translator::translate;
use mrta_core::Error;
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;
use tokio::sync::watch;

use crate::output::write_run;

#[derive(Debug, Clone, PartialEq)]
pub enum Translator {
    /// Built-in rule-based phrases.
    Rules,
    /// External program: reads the sentence on stdin, prints instruction JSON.
    Command(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub pace: Duration,
    /// Keep waiting for instructions after all tasks are delivered.
    pub live: bool,
    pub start_paused: bool,
    pub translator: Translator,
    /// Trace and metrics are written here when the run finishes.
    pub out: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            pace: Duration::from_millis(200),
            live: true,
            start_paused: false,
            translator: Translator::Rules,
            out: None,
        }
    }
}

struct Session {
    sim: Simulation,
    paused: bool,
    saved: bool,
}

#[derive(Clone)]
pub struct AppState {
    session: Arc<Mutex<Session>>,
    snapshots: watch::Sender<Arc<String>>,
    scenario: Arc<Scenario>,
    config: Arc<ServeConfig>,
}

impl AppState {
    pub fn new(scenario: Scenario, sim: Simulation, config: ServeConfig) -> Self {
        let mut sim = sim;
        sim.set_live(config.live);
        let first = Arc::new(snapshot_json(&sim.snapshot(false)));
        let (snapshots, _) = watch::channel(first);
        Self {
            session: Arc::new(Mutex::new(Session {
                sim,
                paused: config.start_paused,
                saved: false,
            })),
            snapshots,
            scenario: Arc::new(scenario),
            config: Arc::new(config),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn publish(&self, s: &Session) {
        self.snapshots.send_replace(Arc::new(snapshot_json(&s.sim.snapshot(false))));
    }

    /// One clock tick. Returns false once the run has finished.
    pub fn tick(&self) -> bool {
        let mut s = self.lock();
        if !s.paused && !s.sim.is_finished() {
            if let Err(e) = s.sim.step_once() {
                error!("step failed: {e}; pausing");
                s.paused = true;
            }
            self.publish(&s);
        }
        if s.sim.is_finished() {
            self.save(&mut s);
            return false;
        }
        true
    }

    fn save(&self, s: &mut Session) {
        if s.saved {
            return;
        }
        s.saved = true;
        if let Some(dir) = &self.config.out {
            match write_run(dir, &self.scenario, s.sim.events(), &s.sim.metrics()) {
                Ok(()) => info!("run written to {}", dir.display()),
                Err(e) => error!("writing run output: {e:#}"),
            }
        }
    }

    /// Writes outputs for an unfinished run, on shutdown.
    pub fn save_now(&self) {
        let mut s = self.lock();
        self.save(&mut s);
    }
}

fn snapshot_json(s: &Snapshot) -> String {
    serde_json::to_string(s).expect("snapshot serializes")
}

/// Advances the session every `pace` until it finishes.
pub async fn run_clock(state: AppState) {
    let mut ticker = tokio::time::interval(state.config.pace);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        ticker.tick().await;
        if !state.tick() {
            info!("run finished");
            break;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorBody,
}

struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self(
            status,
            ErrorBody {
                kind: kind.into(),
                message: message.into(),
                problems: Vec::new(),
            },
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Validation(problems) => Self(
                StatusCode::UNPROCESSABLE_ENTITY,
                ErrorBody {
                    kind: "validation".into(),
                    message,
                    problems,
                },
            ),
            Error::Parse(_) => Self::new(StatusCode::BAD_REQUEST, "parse", message),
            Error::Domain(_) => Self::new(StatusCode::CONFLICT, "domain", message),
            Error::Config(_) | Error::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorResponse { error: self.1 })).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
struct SnapshotQuery {
    #[serde(default)]
    roadmap: bool,
}

async fn get_snapshot(State(st): State<AppState>, Query(q): Query<SnapshotQuery>) -> Json<Snapshot> {
    Json(st.lock().sim.snapshot(q.roadmap))
}

async fn stream(State(st): State<AppState>) -> Sse<impl futures::Stream<Item = Result<SseEvent, Infallible>>> {
    let mut rx = st.snapshots.subscribe();
    rx.mark_changed();
    let events = futures::stream::unfold(rx, |mut rx| async move {
        rx.changed().await.ok()?;
        let data = rx.borrow_and_update().clone();
        Some((Ok(SseEvent::default().event("snapshot").data(data.as_str())), rx))
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

fn parse_instruction(body: &[u8]) -> Result<Instruction, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "schema", e.to_string()))
}

fn submit(st: &AppState, instruction: Instruction) -> Result<Ack, ApiError> {
    let mut s = st.lock();
    let ack = s.sim.submit(instruction)?;
    st.publish(&s);
    Ok(ack)
}

async fn post_instruction(State(st): State<AppState>, body: Bytes) -> ApiResult<Ack> {
    let instruction = parse_instruction(&body)?;
    Ok(Json(submit(&st, instruction)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateRequest {
    pub text: String,
    /// Also submit the translated instruction.
    #[serde(default)]
    pub submit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub instruction: Instruction,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ack: Option<Ack>,
}

async fn run_translator(translator: &Translator, text: &str) -> Result<Instruction, ApiError> {
    match translator {
        Translator::Rules => Ok(translate(text)?),
        Translator::Command(argv) => {
            let (prog, args) = argv
                .split_first()
                .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "translator", "empty translator command"))?;
            let fail = |e: std::io::Error| ApiError::new(StatusCode::BAD_GATEWAY, "translator", e.to_string());
            let mut child = tokio::process::Command::new(prog)
                .args(args)
                .stdin(std::process::Stdio::piped())
                .stdout(std::process::Stdio::piped())
                .spawn()
                .map_err(fail)?;
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin.write_all(text.as_bytes()).await.map_err(fail)?;
            drop(stdin);
            let out = child.wait_with_output().await.map_err(fail)?;
            if !out.status.success() {
                return Err(ApiError::new(
                    StatusCode::BAD_GATEWAY,
                    "translator",
                    format!("translator exited with {}", out.status),
                ));
            }
            parse_instruction(&out.stdout)
        }
    }
}

async fn post_translate(State(st): State<AppState>, body: Bytes) -> ApiResult<TranslateResponse> {
    let req: TranslateRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "schema", e.to_string()))?;
    let instruction = run_translator(&st.config.translator, &req.text).await?;
    let ack = if req.submit {
        Some(submit(&st, instruction.clone())?)
    } else {
        None
    };
    Ok(Json(TranslateResponse { instruction, ack }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub step: u64,
    pub paused: bool,
    pub status: Status,
    pub pending_instructions: usize,
}

fn control_state(s: &Session) -> ControlState {
    ControlState {
        step: s.sim.current_step(),
        paused: s.paused,
        status: s.sim.status().clone(),
        pending_instructions: s.sim.pending_instructions(),
    }
}

async fn get_control(State(st): State<AppState>) -> Json<ControlState> {
    Json(control_state(&st.lock()))
}

async fn pause(State(st): State<AppState>) -> Json<ControlState> {
    let mut s = st.lock();
    s.paused = true;
    Json(control_state(&s))
}

async fn resume(State(st): State<AppState>) -> Json<ControlState> {
    let mut s = st.lock();
    s.paused = false;
    Json(control_state(&s))
}

/// Single step while paused.
async fn step(State(st): State<AppState>) -> ApiResult<ControlState> {
    let mut s = st.lock();
    if !s.paused {
        return Err(ApiError::new(StatusCode::CONFLICT, "control", "pause the session before stepping"));
    }
    s.sim.step_once()?;
    st.publish(&s);
    if s.sim.is_finished() {
        st.save(&mut s);
    }
    Ok(Json(control_state(&s)))
}

async fn get_trace(State(st): State<AppState>) -> Response {
    let mut buf = Vec::new();
    if let Err(e) = write_trace(st.lock().sim.events(), &mut buf) {
        return ApiError::from(e).into_response();
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], buf).into_response()
}

async fn get_metrics(State(st): State<AppState>) -> Json<mrta_core::executor::Metrics> {
    Json(st.lock().sim.metrics())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/snapshot", get(get_snapshot))
        .route("/api/stream", get(stream))
        .route("/api/instructions", post(post_instruction))
        .route("/api/translate", post(post_translate))
        .route("/api/control", get(get_control))
        .route("/api/control/pause", post(pause))
        .route("/api/control/resume", post(resume))
        .route("/api/control/step", post(step))
        .route("/api/trace", get(get_trace))
        .route("/api/metrics", get(get_metrics))
        .with_state(state)
}
