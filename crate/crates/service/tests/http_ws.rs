use std::net::SocketAddr;
use std::sync::Arc;

use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use signum::{router, AppState, SignSummary, UserStore};
use signum_core::dtree::{DecisionTree, Sample, TreeParams};
use signum_core::features::{sign_features, FeatureConfig, MAX_FLAT_LEN};
use signum_core::hand::{load_database, Category, HandFrame, SignDatabase, SignGesture};
use signum_core::session::{replay, ServerMessage, SessionMode, SessionSpec};
use signum_core::stream::{EngineConfig, SignModel};
use signum_core::synth::{generate_corpus, script_stream, GeneratorConfig, StreamTiming};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn model() -> SignModel {
    let corpus = generate_corpus(&GeneratorConfig::default()).unwrap();
    let fc = FeatureConfig::default();
    let samples: Vec<Sample> = corpus
        .db
        .signs
        .iter()
        .map(|s| Sample::new(sign_features(s, &fc).unwrap().padded(MAX_FLAT_LEN).unwrap(), s.id.clone()))
        .collect();
    let tree = DecisionTree::fit(&samples, &TreeParams::unlimited()).unwrap();
    SignModel { db: corpus.db, tree }
}

async fn start(state: AppState) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    addr
}

async fn connect(addr: SocketAddr, query: &str) -> Ws {
    connect_async(format!("ws://{addr}/session?{query}")).await.unwrap().0
}

fn frame_text(f: &HandFrame) -> String {
    let mut v = serde_json::to_value(f).unwrap();
    v["type"] = "frame".into();
    v.to_string()
}

async fn send_frames(ws: &mut Ws, frames: &[HandFrame]) {
    for f in frames {
        ws.send(Message::text(frame_text(f))).await.unwrap();
    }
}

/// Sends `end`, then a deliberately malformed message whose protocol error
/// marks the end of the replies, and returns everything before it.
async fn finish(ws: &mut Ws) -> Vec<ServerMessage> {
    ws.send(Message::text(r#"{"type":"end"}"#)).await.unwrap();
    ws.send(Message::text(r#"{"type":"sentinel"}"#)).await.unwrap();
    let mut out = Vec::new();
    while let Some(msg) = ws.next().await {
        let Message::Text(t) = msg.unwrap() else { continue };
        let m: ServerMessage = serde_json::from_str(&t).unwrap();
        if matches!(&m, ServerMessage::Error { code, message } if code == "protocol_error" && message.contains("sentinel")) {
            return out;
        }
        out.push(m);
    }
    panic!("socket closed before the sentinel reply");
}

async fn next_message(ws: &mut Ws) -> Option<ServerMessage> {
    while let Some(msg) = ws.next().await {
        match msg.ok()? {
            Message::Text(t) => return Some(serde_json::from_str(&t).unwrap()),
            Message::Close(_) => return None,
            _ => continue,
        }
    }
    None
}

fn feedbacks(msgs: &[ServerMessage]) -> Vec<&signum_core::stream::Feedback> {
    msgs.iter()
        .filter_map(|m| match m {
            ServerMessage::Feedback(fb) => Some(fb),
            _ => None,
        })
        .collect()
}

fn practice(mode: SessionMode, target: &str) -> SessionSpec {
    SessionSpec {
        mode,
        target: Some(target.into()),
        record: None,
    }
}

fn sign(model: &SignModel, category: Category) -> SignGesture {
    model.db.signs.iter().find(|s| s.category == category).unwrap().clone()
}

#[tokio::test]
async fn catalog_is_sorted_and_templates_match() {
    let model = model();
    let db = model.db.clone();
    let addr = start(AppState::new(model)).await;
    let client = reqwest::Client::new();

    let list: Vec<SignSummary> = client.get(format!("http://{addr}/signs")).send().await.unwrap().json().await.unwrap();
    assert_eq!(list.len(), 50);
    assert!(list.windows(2).all(|w| w[0].id < w[1].id));
    let again: Vec<SignSummary> = client.get(format!("http://{addr}/signs")).send().await.unwrap().json().await.unwrap();
    assert_eq!(list, again);

    for entry in list.iter().step_by(7) {
        let got: SignGesture = client
            .get(format!("http://{addr}/signs/{}", entry.id))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(&got, db.get(&entry.id).unwrap());
        assert_eq!(got.arity(), entry.arity);
    }
    let missing = client.get(format!("http://{addr}/signs/nope")).send().await.unwrap();
    assert_eq!(missing.status(), 404);
}

#[tokio::test]
async fn empty_catalog() {
    let model = model();
    let state = AppState::new(SignModel {
        db: SignDatabase::new(model.db.language),
        tree: model.tree,
    });
    let addr = start(state).await;
    let list: Vec<SignSummary> = reqwest::get(format!("http://{addr}/signs")).await.unwrap().json().await.unwrap();
    assert!(list.is_empty());
}

#[tokio::test]
async fn socket_output_equals_offline_replay() {
    let model = model();
    let shared = Arc::new(model.clone());
    let addr = start(AppState::new(model)).await;
    for category in Category::ALL {
        let target = sign(&shared, category);
        let frames = script_stream(&target, &StreamTiming::default(), 0.0).frames;
        for mode in [SessionMode::Learn, SessionMode::Test] {
            let spec = practice(mode, &target.id);
            let offline = replay(shared.clone(), EngineConfig::default(), spec, frames.clone()).unwrap();
            let mode = serde_json::to_value(mode).unwrap();
            let mut ws = connect(addr, &format!("mode={}&target={}", mode.as_str().unwrap(), target.id)).await;
            send_frames(&mut ws, &frames).await;
            let online = finish(&mut ws).await;
            assert_eq!(
                serde_json::to_string(&online).unwrap(),
                serde_json::to_string(&offline).unwrap(),
                "{}",
                target.id
            );
            assert_eq!(feedbacks(&online).len(), 1);
        }
    }
}

#[tokio::test]
async fn test_mode_passes_and_malformed_frames_are_survivable() {
    let model = model();
    let target = sign(&model, Category::Sentence);
    let addr = start(AppState::new(model)).await;
    let mut ws = connect(addr, &format!("mode=test&target={}", target.id)).await;

    ws.send(Message::text("not json")).await.unwrap();
    assert!(matches!(next_message(&mut ws).await, Some(ServerMessage::Error { code, .. }) if code == "protocol_error"));
    ws.send(Message::text(r#"{"type":"frame","side":"right"}"#)).await.unwrap();
    assert!(matches!(next_message(&mut ws).await, Some(ServerMessage::Error { code, .. }) if code == "protocol_error"));

    send_frames(&mut ws, &script_stream(&target, &StreamTiming::default(), 0.0).frames).await;
    let out = finish(&mut ws).await;
    let fb = feedbacks(&out);
    assert_eq!(fb.len(), 1);
    assert_eq!(fb[0].pass, Some(true));
    assert_eq!(fb[0].recognized, target.id);
}

#[tokio::test]
async fn learn_mode_zero_deviation() {
    let model = model();
    let target = sign(&model, Category::Word);
    let addr = start(AppState::new(model)).await;
    let mut ws = connect(addr, &format!("mode=learn&target={}", target.id)).await;
    send_frames(&mut ws, &script_stream(&target, &StreamTiming::default(), 0.0).frames).await;
    let out = finish(&mut ws).await;
    let fb = feedbacks(&out);
    assert_eq!(fb.len(), 1);
    assert_eq!(fb[0].score, Some(1.0));
    assert_eq!(fb[0].confidence, 1.0);
    let dev = fb[0].deviation.as_ref().unwrap();
    assert_eq!(dev.len(), 47);
    assert!(dev.iter().all(|d| d.abs() < 1e-12), "{dev:?}");
}

#[tokio::test]
async fn unknown_target_is_reported() {
    let addr = start(AppState::new(model())).await;
    let mut ws = connect(addr, "mode=learn&target=nope").await;
    assert!(matches!(next_message(&mut ws).await, Some(ServerMessage::Error { code, .. }) if code == "unknown_target"));
    assert!(next_message(&mut ws).await.is_none());
}

#[tokio::test]
async fn sessions_are_isolated() {
    let model = model();
    let shared = Arc::new(model.clone());
    let addr = start(AppState::new(model)).await;
    let a = sign(&shared, Category::Sentence);
    let b = sign(&shared, Category::Word);
    let fa = script_stream(&a, &StreamTiming::default(), 0.0).frames;
    let fb = script_stream(&b, &StreamTiming::default(), 0.0).frames;
    let mut wa = connect(addr, &format!("mode=test&target={}", a.id)).await;
    let mut wb = connect(addr, &format!("mode=test&target={}", b.id)).await;
    for i in 0..fa.len().max(fb.len()) {
        if let Some(f) = fa.get(i) {
            wa.send(Message::text(frame_text(f))).await.unwrap();
        }
        if let Some(f) = fb.get(i) {
            wb.send(Message::text(frame_text(f))).await.unwrap();
        }
    }
    let (oa, ob) = tokio::join!(finish(&mut wa), finish(&mut wb));
    let ra = replay(shared.clone(), EngineConfig::default(), practice(SessionMode::Test, &a.id), fa).unwrap();
    let rb = replay(shared, EngineConfig::default(), practice(SessionMode::Test, &b.id), fb).unwrap();
    assert_eq!(oa, ra);
    assert_eq!(ob, rb);
    assert_eq!(feedbacks(&oa)[0].pass, Some(true));
    assert_eq!(feedbacks(&ob)[0].pass, Some(true));
}

#[tokio::test]
async fn record_mode_appends_to_user_file() {
    let model = model();
    let shipped = sign(&model, Category::Word);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("user-signs.json");
    let users = UserStore::open(&path, SignDatabase::new(model.db.language)).unwrap();
    let state = AppState {
        users: Some(Arc::new(users)),
        ..AppState::new(model)
    };
    let addr = start(state).await;
    let frames = script_stream(&shipped, &StreamTiming::default(), 0.0).frames;

    let mut ws = connect(addr, "mode=record&id=my-hello&label=Hello&category=word").await;
    send_frames(&mut ws, &frames).await;
    let out = finish(&mut ws).await;
    assert!(out.contains(&ServerMessage::Recorded { id: "my-hello".into() }), "{out:?}");
    let saved = load_database(&path).unwrap();
    assert_eq!(saved.signs.len(), 1);
    let rec = &saved.signs[0];
    assert_eq!((rec.label.as_str(), rec.category, rec.arity()), ("Hello", Category::Word, 2));
    assert!((rec.translations[0] - shipped.translations[0]).norm() < 1e-9);

    // same id again: rejected, file unchanged
    let mut ws = connect(addr, "mode=record&id=my-hello&label=Again&category=word").await;
    send_frames(&mut ws, &frames).await;
    let out = finish(&mut ws).await;
    assert!(matches!(out.last(), Some(ServerMessage::Error { code, .. }) if code == "record_failed"));
    assert_eq!(load_database(&path).unwrap(), saved);

    // too few keyposes for a sentence
    let mut ws = connect(addr, "mode=record&id=short&label=Short&category=sentence").await;
    send_frames(&mut ws, &frames).await;
    let out = finish(&mut ws).await;
    assert!(matches!(out.last(), Some(ServerMessage::Error { code, .. }) if code == "record_failed"));

    let mut ws = connect(addr, &format!("mode=record&id={}&label=X&category=word", shipped.id)).await;
    assert!(matches!(next_message(&mut ws).await, Some(ServerMessage::Error { code, .. }) if code == "record_failed"));
}

#[tokio::test]
async fn record_mode_needs_a_user_file_and_details() {
    let addr = start(AppState::new(model())).await;
    let mut ws = connect(addr, "mode=record&id=a&label=A&category=alphabet").await;
    assert!(matches!(next_message(&mut ws).await, Some(ServerMessage::Error { code, .. }) if code == "bad_request"));
    let mut ws = connect(addr, "mode=test").await;
    assert!(matches!(next_message(&mut ws).await, Some(ServerMessage::Error { code, .. }) if code == "bad_request"));
}
