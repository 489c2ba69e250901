//! HTTP front end for the merge session and the suggestion model.
//!
//! One session per process. Every mutation is validated, appended to the
//! action log and synced before the new state is published and the request
//! acknowledged. On startup the log is replayed; a log that does not replay
//! cleanly stops the service from starting.
//!
//! Endpoints:
//!
//! | method | path                   | body / result                                   |
//! |--------|------------------------|-------------------------------------------------|
//! | GET    | `/api/session/next`    | current centroid, classes, cursor token         |
//! | POST   | `/api/session/action`  | `{cursor, action}` → new cursor, 409 when stale |
//! | GET    | `/api/classes/export`  | catalog document                                |
//! | POST   | `/api/suggest`         | `{turns, threshold}` → suggestion               |
//! | GET    | `/`                    | UI bundle                                       |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::{ServeDir, ServeFile};

use replyclass_core::classifier::SoftmaxModel;
use replyclass_core::clustering::ClusterExport;
use replyclass_core::corpus::Turn;
use replyclass_core::responseclasses::{read_action_log, ActionKind, ActionLog, Catalog, MergeAction, MergeSession};
use replyclass_core::selective::{suggest, SuggestionResult};
use replyclass_core::{Error, Result};

pub struct ServiceConfig {
    pub export: ClusterExport,
    pub top_n: usize,
    pub action_log: PathBuf,
    /// Trained model and the catalog it was trained on, for `/api/suggest`.
    pub model: Option<(SoftmaxModel, Catalog)>,
    /// Directory holding the built UI; a placeholder page is served without it.
    pub ui_dir: Option<PathBuf>,
    pub actor: String,
}

struct Writer {
    log: ActionLog,
}

pub struct ServiceState {
    /// Taken for the whole validate → append → publish sequence.
    writer: Mutex<Writer>,
    /// Published snapshot; readers never wait on a write in progress.
    session: RwLock<Arc<MergeSession>>,
    model: Option<(SoftmaxModel, Catalog)>,
    ui_dir: Option<PathBuf>,
    actor: String,
}

impl ServiceState {
    /// Replays the action log (if any) onto a fresh session and opens the log
    /// for appending.
    pub fn open(cfg: ServiceConfig) -> Result<Self> {
        if let Some((model, catalog)) = &cfg.model {
            model.check_catalog(catalog)?;
        }
        let actions = read_action_log(&cfg.action_log)?;
        let session = MergeSession::replay(&cfg.export, cfg.top_n, &actions).map_err(|e| {
            Error::InvalidAction(format!("action log {} does not replay: {e}", cfg.action_log.display()))
        })?;
        log::info!(
            "session restored: {} actions, cursor {}/{}",
            actions.len(),
            session.cursor(),
            session.queue().len()
        );
        let log = ActionLog::open(&cfg.action_log)?;
        Ok(ServiceState {
            writer: Mutex::new(Writer { log }),
            session: RwLock::new(Arc::new(session)),
            model: cfg.model,
            ui_dir: cfg.ui_dir,
            actor: cfg.actor,
        })
    }

    pub fn snapshot(&self) -> Arc<MergeSession> {
        self.session.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Applies one action if `cursor` matches the current token.
    pub fn mutate(&self, cursor: u64, body: ActionBody) -> std::result::Result<Arc<MergeSession>, MutationError> {
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.snapshot();
        let token = cursor_token(&current);
        if cursor != token {
            return Err(MutationError::Stale { current: token });
        }
        let cluster_id = current.next_centroid().map(|v| v.cluster.id);
        let need_cluster = || cluster_id.ok_or_else(|| MutationError::Invalid("session is complete".into()));
        let kind = match body {
            ActionBody::Assign { class_id } => ActionKind::Assign {
                cluster_id: need_cluster()?,
                class_id,
            },
            ActionBody::Create { name, exemplar } => ActionKind::Create {
                cluster_id: need_cluster()?,
                name,
                exemplar,
            },
            ActionBody::Skip => ActionKind::Skip {
                cluster_id: need_cluster()?,
            },
            ActionBody::Undo => ActionKind::Undo,
        };
        let action = MergeAction::new(kind, self.actor.clone());
        let mut next = (*current).clone();
        next.apply(action.clone()).map_err(|e| MutationError::Invalid(e.to_string()))?;
        writer.log.append(&action).map_err(|e| MutationError::Storage(e.to_string()))?;
        let next = Arc::new(next);
        *self.session.write().unwrap_or_else(|e| e.into_inner()) = next.clone();
        Ok(next)
    }
}

/// The optimistic-concurrency token: number of log entries so far.
pub fn cursor_token(s: &MergeSession) -> u64 {
    s.log().len() as u64
}

#[derive(Debug)]
pub enum MutationError {
    Stale { current: u64 },
    Invalid(String),
    Storage(String),
}

/// The action part of `POST /api/session/action`. The target cluster is
/// always the current one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionBody {
    Assign {
        class_id: u32,
    },
    Create {
        name: String,
        #[serde(default)]
        exemplar: Option<String>,
    },
    Skip,
    Undo,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionRequest {
    pub cursor: u64,
    pub action: ActionBody,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionResponse {
    pub cursor: u64,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberView {
    pub id: u32,
    pub text: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub id: u32,
    pub centroid_text: String,
    pub centroid_variant: String,
    pub total_count: u64,
    pub members: Vec<MemberView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassView {
    pub id: u32,
    pub name: String,
    pub exemplar: String,
    pub clusters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextResponse {
    pub complete: bool,
    pub cursor: u64,
    /// Index of the current cluster in the queue.
    pub position: usize,
    pub queue_length: usize,
    pub can_undo: bool,
    pub cluster: Option<ClusterView>,
    pub classes: Vec<ClassView>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub turns: Vec<Turn>,
    pub threshold: f64,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    cursor: Option<u64>,
}

fn error(status: StatusCode, msg: impl Into<String>, cursor: Option<u64>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: msg.into(),
            cursor,
        }),
    )
        .into_response()
}

pub fn next_view(s: &MergeSession) -> NextResponse {
    let view = s.next_centroid();
    NextResponse {
        complete: s.is_complete(),
        cursor: cursor_token(s),
        position: s.cursor(),
        queue_length: s.queue().len(),
        can_undo: s.can_undo(),
        cluster: view.map(|v| ClusterView {
            id: v.cluster.id,
            centroid_text: v.cluster.centroid_text.clone(),
            centroid_variant: v.cluster.centroid_variant.clone(),
            total_count: v.cluster.total_count,
            members: v
                .cluster
                .members
                .iter()
                .map(|m| MemberView {
                    id: m.id,
                    text: m.text.clone(),
                    count: m.count,
                })
                .collect(),
        }),
        classes: s
            .classes()
            .iter()
            .map(|c| ClassView {
                id: c.id,
                name: c.name.clone(),
                exemplar: c.exemplar_text.clone(),
                clusters: c.member_cluster_ids.len(),
            })
            .collect(),
    }
}

type Shared = Arc<ServiceState>;

async fn get_next(State(st): State<Shared>) -> Json<NextResponse> {
    Json(next_view(&st.snapshot()))
}

async fn post_action(State(st): State<Shared>, Json(req): Json<ActionRequest>) -> Response {
    // the writer does blocking file I/O
    let result = tokio::task::spawn_blocking(move || st.mutate(req.cursor, req.action)).await;
    match result {
        Ok(Ok(s)) => Json(ActionResponse {
            cursor: cursor_token(&s),
            complete: s.is_complete(),
        })
        .into_response(),
        Ok(Err(MutationError::Stale { current })) => {
            error(StatusCode::CONFLICT, "stale cursor token", Some(current))
        }
        Ok(Err(MutationError::Invalid(m))) => error(StatusCode::UNPROCESSABLE_ENTITY, m, None),
        Ok(Err(MutationError::Storage(m))) => error(StatusCode::INTERNAL_SERVER_ERROR, m, None),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

async fn export_classes(State(st): State<Shared>) -> Response {
    match Catalog::new(st.snapshot().classes().to_vec()) {
        Ok(c) => Json(c.to_file(None)).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

async fn post_suggest(State(st): State<Shared>, Json(req): Json<SuggestRequest>) -> Response {
    let Some((model, catalog)) = &st.model else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no model loaded", None);
    };
    if req.turns.is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "at least one turn is required", None);
    }
    match suggest(model, catalog, &req.turns, req.threshold) {
        Ok(r) => Json::<SuggestionResult>(r).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), None),
    }
}

const PLACEHOLDER_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>replyclass</title></head>
<body>
<h1>replyclass merge service</h1>
<p>No UI bundle configured. API:</p>
<ul>
<li>GET /api/session/next</li>
<li>POST /api/session/action</li>
<li>GET /api/classes/export</li>
<li>POST /api/suggest</li>
</ul>
</body></html>
";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/api/session/next", get(get_next))
        .route("/api/session/action", post(post_action))
        .route("/api/classes/export", get(export_classes))
        .route("/api/suggest", post(post_suggest));
    let ui = state.ui_dir.clone();
    let api = api.with_state(state);
    match ui {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).not_found_service(ServeFile::new(index)))
        }
        None => api.route("/", get(placeholder)),
    }
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: ServiceState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
