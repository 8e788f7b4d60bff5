//! Practice-session protocol, independent of transport.
//!
//! A session owns one [`StreamEngine`] and turns client messages into server
//! messages. The WebSocket server and the offline `recognize` command both
//! drive this type, so their outputs are identical by construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand::{capture_sign_pose, Category, HandFrame, SignGesture};
use crate::stream::{
    perform_action, EngineConfig, Feedback, PracticeMode, RecognitionEvent, SignModel, StreamEngine, StreamError,
    TickOutput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    Record,
    Learn,
    Test,
}

/// What Record mode stores once the client ends the take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRequest {
    pub id: String,
    pub label: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub mode: SessionMode,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub record: Option<RecordRequest>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("unknown target sign '{0}'")]
    UnknownTarget(String),
    #[error("{0:?} mode needs a target sign")]
    MissingTarget(SessionMode),
    #[error("record mode needs id, label and category")]
    MissingRecordInfo,
    #[error(transparent)]
    Stream(#[from] StreamError),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownTarget(_) => "unknown_target",
            SessionError::MissingTarget(_) | SessionError::MissingRecordInfo => "bad_request",
            SessionError::Stream(_) => "invalid_config",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Frame(HandFrame),
    /// End of take: flushes the engine (and, in Record mode, stores the sign).
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Confidence { per_gesture: BTreeMap<String, f64> },
    Keypose { timestamp: f64, start: f64, end: f64 },
    Event(RecognitionEvent),
    Feedback(Feedback),
    Recorded { id: String },
    Error { code: String, message: String },
}

impl ServerMessage {
    pub fn error(code: &str, message: impl ToString) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug)]
pub struct Session {
    spec: SessionSpec,
    engine: StreamEngine,
    frames: Vec<HandFrame>,
    recorded: Option<SignGesture>,
    last_feedback: Option<Feedback>,
}

impl Session {
    pub fn new(model: Arc<SignModel>, cfg: EngineConfig, spec: SessionSpec) -> Result<Session, SessionError> {
        match spec.mode {
            SessionMode::Learn | SessionMode::Test => {
                let target = spec.target.as_deref().ok_or(SessionError::MissingTarget(spec.mode))?;
                if model.db.get(target).is_none() {
                    return Err(SessionError::UnknownTarget(target.to_string()));
                }
            }
            SessionMode::Record if spec.record.is_none() => return Err(SessionError::MissingRecordInfo),
            SessionMode::Record => {}
        }
        Ok(Session {
            engine: StreamEngine::new(model, cfg)?,
            spec,
            frames: Vec::new(),
            recorded: None,
            last_feedback: None,
        })
    }

    pub fn mode(&self) -> SessionMode {
        self.spec.mode
    }

    pub fn last_feedback(&self) -> Option<&Feedback> {
        self.last_feedback.as_ref()
    }

    /// Record mode: the sign captured by the last `end`, if any.
    pub fn take_recorded(&mut self) -> Option<SignGesture> {
        self.recorded.take()
    }

    /// Handles one raw text message. Malformed input yields an error message
    /// and leaves the session state untouched.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![ServerMessage::error("protocol_error", e)],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Frame(frame) => {
                if let Err(e) = frame.validate() {
                    return vec![ServerMessage::error("protocol_error", e)];
                }
                let kept = (self.spec.mode == SessionMode::Record).then(|| frame.clone());
                match self.engine.push_frame(frame) {
                    Ok(out) => {
                        self.frames.extend(kept);
                        self.render(out)
                    }
                    Err(e) => vec![ServerMessage::error("protocol_error", e)],
                }
            }
            ClientMessage::End => {
                let mut msgs = match self.engine.finish() {
                    Ok(out) => self.render(out),
                    Err(e) => vec![ServerMessage::error("protocol_error", e)],
                };
                if self.spec.mode == SessionMode::Record {
                    msgs.extend(self.capture());
                }
                msgs
            }
        }
    }

    fn capture(&mut self) -> Option<ServerMessage> {
        let req = self.spec.record.as_ref()?;
        let frames = std::mem::take(&mut self.frames);
        let built = capture_sign_pose(frames, req.category, &self.engine.config().dwell)
            .and_then(|poses| SignGesture::from_poses(&req.id, &req.label, req.category, poses));
        match built {
            Ok(sign) => {
                self.recorded = Some(sign);
                None
            }
            Err(e) => Some(ServerMessage::error("record_failed", e)),
        }
    }

    fn render(&mut self, out: TickOutput) -> Vec<ServerMessage> {
        let mut msgs = Vec::new();
        if let Some(per_gesture) = out.per_gesture {
            msgs.push(ServerMessage::Confidence { per_gesture });
        }
        if let Some(k) = out.keypose {
            msgs.push(ServerMessage::Keypose {
                timestamp: k.timestamp(),
                start: k.start,
                end: k.end,
            });
        }
        let practice = match self.spec.mode {
            SessionMode::Learn => Some(PracticeMode::Learn),
            SessionMode::Test => Some(PracticeMode::Test),
            SessionMode::Record => None,
        };
        for ev in out.events {
            let Some(mode) = practice else { continue };
            let target = self.spec.target.as_deref().unwrap_or_default();
            let fb = perform_action(&ev, mode, target, self.engine.model(), &self.engine.config().matching);
            msgs.push(ServerMessage::Event(ev));
            match fb {
                Ok(fb) => {
                    self.last_feedback = Some(fb.clone());
                    msgs.push(ServerMessage::Feedback(fb));
                }
                Err(e) => msgs.push(ServerMessage::error("unknown_target", e)),
            }
        }
        msgs
    }
}

/// Offline replay: every frame, then `end`.
pub fn replay(
    model: Arc<SignModel>,
    cfg: EngineConfig,
    spec: SessionSpec,
    frames: impl IntoIterator<Item = HandFrame>,
) -> Result<Vec<ServerMessage>, SessionError> {
    let mut s = Session::new(model, cfg, spec)?;
    let mut out: Vec<ServerMessage> = frames.into_iter().flat_map(|f| s.handle(ClientMessage::Frame(f))).collect();
    out.extend(s.handle(ClientMessage::End));
    Ok(out)
}
