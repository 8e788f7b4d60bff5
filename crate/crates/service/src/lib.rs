//! HTTP catalog and WebSocket practice sessions over a shared, read-only model.
//!
//! Recognition happens in [`signum_core::session::Session`]; this layer only
//! moves JSON between the socket and the session, plus persists recorded
//! signs to the user-signs file.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use signum_core::hand::{load_database, save_database, Category, HandError, Handedness, SignDatabase, SignGesture};
use signum_core::session::{RecordRequest, ServerMessage, Session, SessionMode, SessionSpec};
use signum_core::stream::{EngineConfig, SignModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSummary {
    pub id: String,
    pub label: String,
    pub category: Category,
    pub handedness: Handedness,
    pub arity: usize,
}

impl From<&SignGesture> for SignSummary {
    fn from(s: &SignGesture) -> Self {
        SignSummary {
            id: s.id.clone(),
            label: s.label.clone(),
            category: s.category,
            handedness: s.handedness,
            arity: s.arity(),
        }
    }
}

/// The user-signs file. Every write goes through the one mutex, so recorded
/// signs are appended one at a time and the file is always a whole database.
#[derive(Debug)]
pub struct UserStore {
    path: PathBuf,
    db: Mutex<SignDatabase>,
}

impl UserStore {
    /// Opens `path`, starting an empty database if it does not exist yet.
    pub fn open(path: impl Into<PathBuf>, fallback: SignDatabase) -> Result<UserStore, HandError> {
        let path = path.into();
        let db = if path.exists() { load_database(&path)? } else { fallback };
        Ok(UserStore {
            path,
            db: Mutex::new(db),
        })
    }

    pub async fn snapshot(&self) -> SignDatabase {
        self.db.lock().await.clone()
    }

    pub async fn append(&self, sign: SignGesture) -> Result<(), HandError> {
        let mut db = self.db.lock().await;
        let next = db.with_sign(sign)?;
        let path = self.path.clone();
        let to_write = next.clone();
        tokio::task::spawn_blocking(move || save_database(&to_write, path))
            .await
            .map_err(|e| HandError::MalformedRecord(e.to_string()))??;
        *db = next;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub model: Arc<SignModel>,
    pub engine: EngineConfig,
    pub users: Option<Arc<UserStore>>,
}

impl AppState {
    pub fn new(model: SignModel) -> Self {
        AppState {
            model: Arc::new(model),
            engine: EngineConfig::default(),
            users: None,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/signs", get(list_signs))
        .route("/signs/{id}", get(get_sign))
        .route("/session", get(open_session))
        .with_state(state)
}

async fn list_signs(State(state): State<AppState>) -> Json<Vec<SignSummary>> {
    let mut out: Vec<SignSummary> = state.model.db.signs.iter().map(SignSummary::from).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out)
}

async fn get_sign(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    match state.model.db.get(&id) {
        Some(sign) => Json(sign.clone()).into_response(),
        None => (
            StatusCode::NOT_FOUND,
            Json(ServerMessage::error("unknown_sign", format!("no sign '{id}'"))),
        )
            .into_response(),
    }
}

#[derive(Debug, Deserialize)]
pub struct SessionQuery {
    pub mode: SessionMode,
    pub target: Option<String>,
    // Record mode
    pub id: Option<String>,
    pub label: Option<String>,
    pub category: Option<Category>,
}

impl SessionQuery {
    fn spec(self) -> SessionSpec {
        let record = match (self.id, self.label, self.category) {
            (Some(id), Some(label), Some(category)) => Some(RecordRequest { id, label, category }),
            _ => None,
        };
        SessionSpec {
            mode: self.mode,
            target: self.target,
            record,
        }
    }
}

async fn open_session(
    State(state): State<AppState>,
    Query(query): Query<SessionQuery>,
    ws: WebSocketUpgrade,
) -> Response {
    let spec = query.spec();
    ws.on_upgrade(move |socket| run_session(socket, state, spec))
}

async fn send(socket: &mut WebSocket, msgs: &[ServerMessage]) -> bool {
    for m in msgs {
        let text = serde_json::to_string(m).expect("server messages serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return false;
        }
    }
    true
}

/// Session setup errors are reported on the socket before closing it, so
/// browser clients see the reason.
async fn run_session(mut socket: WebSocket, state: AppState, spec: SessionSpec) {
    if let Err(msg) = check_record_target(&state, &spec) {
        send(&mut socket, &[msg]).await;
        let _ = socket.send(Message::Close(None)).await;
        return;
    }
    let mut session = match Session::new(state.model.clone(), state.engine, spec) {
        Ok(s) => s,
        Err(e) => {
            send(&mut socket, &[ServerMessage::error(e.code(), &e)]).await;
            let _ = socket.send(Message::Close(None)).await;
            return;
        }
    };
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            Message::Binary(_) => {
                if !send(&mut socket, &[ServerMessage::error("protocol_error", "binary messages are not supported")]).await {
                    break;
                }
                continue;
            }
            _ => continue,
        };
        let mut out = session.handle_text(text.as_str());
        if let Some(sign) = session.take_recorded() {
            out.push(persist(&state, sign).await);
        }
        if !send(&mut socket, &out).await {
            break;
        }
    }
}

fn check_record_target(state: &AppState, spec: &SessionSpec) -> Result<(), ServerMessage> {
    if spec.mode != SessionMode::Record {
        return Ok(());
    }
    if state.users.is_none() {
        return Err(ServerMessage::error("bad_request", "recording is disabled: no user-signs file configured"));
    }
    match &spec.record {
        Some(r) if state.model.db.get(&r.id).is_some() => Err(ServerMessage::error(
            "record_failed",
            format!("'{}' is a shipped sign id", r.id),
        )),
        _ => Ok(()),
    }
}

async fn persist(state: &AppState, sign: SignGesture) -> ServerMessage {
    let Some(users) = &state.users else {
        return ServerMessage::error("record_failed", "no user-signs file configured");
    };
    let id = sign.id.clone();
    match users.append(sign).await {
        Ok(()) => {
            tracing::info!(%id, "recorded user sign");
            ServerMessage::Recorded { id }
        }
        Err(e) => ServerMessage::error("record_failed", e),
    }
}

/// Serves until the listener fails or ctrl-c arrives.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
