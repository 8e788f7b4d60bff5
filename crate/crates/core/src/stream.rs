//! Real-time recognition over a frame stream.
//!
//! Frames sharing a timestamp form one tick. A tick is "still" when the
//! primary hand's pose features moved by at most `stability_epsilon` (L∞)
//! since the previous tick; each maximal still run lasting at least
//! `dwell_min` yields one keypose, taken at the run's temporal midpoint.
//! Keyposes are buffered (at most three) and matched against the sign
//! database with a trained tree.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtree::DecisionTree;
use crate::features::{
    extract_gesture_features, extract_pose_features_with, pad, sign_features, FeatureConfig, POSE_FEATURES,
};
use crate::hand::{compute_translations, HandFrame, PoseSnapshot, SignDatabase};

/// Longest sign, in keyposes.
pub const MAX_BUFFERED: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("timestamp {next} does not follow {prev}")]
    NonMonotonicTimestamps { prev: f64, next: f64 },
    #[error("unknown target sign '{0}'")]
    UnknownTarget(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellConfig {
    pub frame_rate: f64,
    /// Max per-tick L∞ change of the normalized pose features that still counts as holding.
    pub stability_epsilon: f64,
    /// Minimum hold duration, seconds.
    pub dwell_min: f64,
    /// Max gap between the end of one hold and the start of the next, seconds.
    pub sequence_timeout: f64,
}

impl Default for DwellConfig {
    fn default() -> Self {
        Self {
            frame_rate: 60.0,
            stability_epsilon: 0.02,
            dwell_min: 0.30,
            sequence_timeout: 2.0,
        }
    }
}

impl DwellConfig {
    pub fn validate(&self) -> Result<(), StreamError> {
        let all_positive = [self.frame_rate, self.stability_epsilon, self.dwell_min, self.sequence_timeout]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(StreamError::InvalidConfig(format!("non-positive value in {self:?}")));
        }
        if self.dwell_min < 2.0 / self.frame_rate {
            return Err(StreamError::InvalidConfig(format!(
                "dwell_min {} shorter than two frames at {} Hz",
                self.dwell_min, self.frame_rate
            )));
        }
        Ok(())
    }
}

/// A detected hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypose {
    /// The midpoint tick of the hold.
    pub pose: PoseSnapshot,
    pub start: f64,
    pub end: f64,
}

impl Keypose {
    pub fn timestamp(&self) -> f64 {
        self.pose.timestamp()
    }
}

fn primary_features(hands: &[HandFrame]) -> Option<[f64; POSE_FEATURES]> {
    let pose = PoseSnapshot::new(hands.to_vec(), 0);
    let hand = pose.primary_hand()?;
    extract_pose_features_with(hand, &FeatureConfig::default())
        .ok()
        .map(|f| f.values)
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Incremental dwell detector.
#[derive(Debug, Clone)]
pub struct KeyposeDetector {
    cfg: DwellConfig,
    last_t: Option<f64>,
    last_features: Option<[f64; POSE_FEATURES]>,
    run: Vec<PoseSnapshot>,
}

impl KeyposeDetector {
    pub fn new(cfg: DwellConfig) -> Self {
        Self {
            cfg,
            last_t: None,
            last_features: None,
            run: Vec::new(),
        }
    }

    /// Start time of the hold in progress, if any.
    pub fn run_start(&self) -> Option<f64> {
        self.run.first().map(PoseSnapshot::timestamp)
    }

    /// Feeds one tick (all hands observed at one instant).
    pub fn push(&mut self, hands: Vec<HandFrame>) -> Result<Option<Keypose>, StreamError> {
        let Some(t) = hands.first().map(|h| h.timestamp) else {
            return Ok(None);
        };
        if let Some(prev) = self.last_t {
            if !(t > prev) {
                return Err(StreamError::NonMonotonicTimestamps { prev, next: t });
            }
        }
        self.last_t = Some(t);

        let features = primary_features(&hands);
        let still = match (&self.last_features, &features) {
            (Some(a), Some(b)) => linf(a, b) <= self.cfg.stability_epsilon,
            _ => false,
        };
        self.last_features = features;

        let snapshot = PoseSnapshot::new(hands, 0);
        if still {
            self.run.push(snapshot);
            Ok(None)
        } else {
            let done = self.close_run();
            if features.is_some() {
                self.run.push(snapshot);
            }
            Ok(done)
        }
    }

    /// Ends the stream, emitting a hold still in progress.
    pub fn flush(&mut self) -> Option<Keypose> {
        self.last_features = None;
        self.close_run()
    }

    fn close_run(&mut self) -> Option<Keypose> {
        let run = std::mem::take(&mut self.run);
        let start = run.first()?.timestamp();
        let end = run.last()?.timestamp();
        // tolerate rounding in frame timestamps
        (end - start + 1e-9 >= self.cfg.dwell_min).then(|| Keypose {
            pose: run[(run.len() - 1) / 2].clone(),
            start,
            end,
        })
    }
}

/// Groups consecutive frames with equal timestamps and distinct sides into ticks.
pub fn group_ticks(frames: impl IntoIterator<Item = HandFrame>) -> Vec<Vec<HandFrame>> {
    let mut ticks: Vec<Vec<HandFrame>> = Vec::new();
    for f in frames {
        match ticks.last_mut() {
            Some(tick) if tick[0].timestamp == f.timestamp && tick.iter().all(|h| h.side != f.side) => tick.push(f),
            _ => ticks.push(vec![f]),
        }
    }
    ticks
}

/// Runs the dwell detector over a whole recorded stream.
pub fn detect_keyposes(
    ticks: impl IntoIterator<Item = Vec<HandFrame>>,
    cfg: &DwellConfig,
) -> Result<Vec<PoseSnapshot>, StreamError> {
    cfg.validate()?;
    let mut det = KeyposeDetector::new(*cfg);
    let mut out = Vec::new();
    for tick in ticks {
        out.extend(det.push(tick)?.map(|k| k.pose));
    }
    out.extend(det.flush().map(|k| k.pose));
    Ok(out)
}

/// The trained classifier and the templates it was trained on.
#[derive(Debug, Clone)]
pub struct SignModel {
    pub db: SignDatabase,
    pub tree: DecisionTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Minimum leaf confidence for accepting a recognition.
    pub acceptance_threshold: f64,
    /// Minimum cosine between observed and template translation, per transition.
    pub translation_threshold: f64,
    pub features: FeatureConfig,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            acceptance_threshold: 0.6,
            translation_threshold: 0.7,
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EngineConfig {
    pub dwell: DwellConfig,
    pub matching: MatchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionEvent {
    pub sign_id: String,
    pub confidence: f64,
    pub keypose_timestamps: Vec<f64>,
    /// Cosine similarity of observed vs template translation per transition.
    pub translation_match: Vec<f64>,
    /// Flat gesture features of the matched keyposes (unpadded).
    pub features: Vec<f64>,
}

/// Classifies buffered keyposes as one sign and applies the arity,
/// confidence and translation-direction checks.
pub fn match_sequence(keyposes: &[PoseSnapshot], model: &SignModel, cfg: &MatchConfig) -> Option<RecognitionEvent> {
    if keyposes.is_empty() || keyposes.len() > MAX_BUFFERED {
        return None;
    }
    let translations = compute_translations(keyposes);
    let gf = extract_gesture_features(keyposes, &translations, &cfg.features).ok()?;
    let x = gf.padded(model.tree.n_features)?;
    let p = model.tree.predict(&x).ok()?;
    let sign = model.db.get(&p.label)?;
    if sign.arity() != keyposes.len() || p.confidence < cfg.acceptance_threshold {
        return None;
    }
    let translation_match: Vec<f64> = translations
        .iter()
        .zip(&sign.translations)
        .map(|(obs, tmpl)| obs.cosine(*tmpl))
        .collect();
    if translation_match.iter().any(|&c| c < cfg.translation_threshold) {
        return None;
    }
    Some(RecognitionEvent {
        sign_id: p.label,
        confidence: p.confidence,
        keypose_timestamps: keyposes.iter().map(PoseSnapshot::timestamp).collect(),
        translation_match,
        features: gf.flat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PracticeMode {
    Learn,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub mode: PracticeMode,
    pub target: String,
    pub recognized: String,
    pub confidence: f64,
    /// Learn mode: confidence when the target was recognized, else 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Learn mode: current minus target template features, over the target's layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<Vec<f64>>,
    /// Test mode verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

/// Grades a recognition against the practice target.
pub fn perform_action(
    event: &RecognitionEvent,
    mode: PracticeMode,
    target: &str,
    model: &SignModel,
    cfg: &MatchConfig,
) -> Result<Feedback, StreamError> {
    let sign = model
        .db
        .get(target)
        .ok_or_else(|| StreamError::UnknownTarget(target.to_string()))?;
    let hit = event.sign_id == target;
    let mut fb = Feedback {
        mode,
        target: target.to_string(),
        recognized: event.sign_id.clone(),
        confidence: event.confidence,
        score: None,
        deviation: None,
        pass: None,
    };
    match mode {
        PracticeMode::Learn => {
            let template = sign_features(sign, &cfg.features)
                .map_err(|e| StreamError::InvalidConfig(format!("target template: {e}")))?
                .flat;
            let mut current = event.features.clone();
            current.resize(template.len(), 0.0);
            fb.score = Some(if hit { event.confidence } else { 0.0 });
            fb.deviation = Some(current.iter().zip(&template).map(|(c, t)| c - t).collect());
        }
        PracticeMode::Test => {
            fb.pass = Some(hit && event.confidence >= cfg.acceptance_threshold);
        }
    }
    Ok(fb)
}

/// Per-tick engine output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickOutput {
    /// Live single-pose classification of the current tick.
    pub per_gesture: Option<BTreeMap<String, f64>>,
    pub keypose: Option<Keypose>,
    pub events: Vec<RecognitionEvent>,
}

/// Streaming recognizer: dwell detection, keypose buffer and greedy matching.
///
/// A full buffer (three keyposes) is matched immediately, longest prefix
/// first, keeping any unmatched tail. When no further hold starts within
/// `sequence_timeout` the whole buffer is resolved 3→2→1; keyposes that
/// match nothing are discarded.
#[derive(Debug, Clone)]
pub struct StreamEngine {
    model: Arc<SignModel>,
    cfg: EngineConfig,
    detector: KeyposeDetector,
    buffer: Vec<Keypose>,
    pending: Vec<HandFrame>,
}

impl StreamEngine {
    pub fn new(model: Arc<SignModel>, cfg: EngineConfig) -> Result<Self, StreamError> {
        cfg.dwell.validate()?;
        Ok(Self {
            model,
            detector: KeyposeDetector::new(cfg.dwell),
            cfg,
            buffer: Vec::new(),
            pending: Vec::new(),
        })
    }

    pub fn model(&self) -> &SignModel {
        &self.model
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Feeds one frame. Frames are grouped into ticks by timestamp, so a
    /// single-hand tick is processed when the next frame arrives (or on `finish`).
    pub fn push_frame(&mut self, frame: HandFrame) -> Result<TickOutput, StreamError> {
        let joins = self
            .pending
            .first()
            .is_some_and(|p| p.timestamp == frame.timestamp && self.pending.iter().all(|h| h.side != frame.side));
        if joins {
            self.pending.push(frame);
            if self.pending.len() == 2 {
                let tick = std::mem::take(&mut self.pending);
                return self.push_tick(tick);
            }
            return Ok(TickOutput::default());
        }
        if let Some(prev) = self.pending.first().map(|h| h.timestamp).or(self.detector.last_t) {
            if !(frame.timestamp > prev) {
                return Err(StreamError::NonMonotonicTimestamps {
                    prev,
                    next: frame.timestamp,
                });
            }
        }
        let tick = std::mem::replace(&mut self.pending, vec![frame]);
        if tick.is_empty() {
            Ok(TickOutput::default())
        } else {
            self.push_tick(tick)
        }
    }

    pub fn push_tick(&mut self, tick: Vec<HandFrame>) -> Result<TickOutput, StreamError> {
        let Some(now) = tick.first().map(|h| h.timestamp) else {
            return Ok(TickOutput::default());
        };
        let per_gesture = self.live_confidence(&tick);
        let keypose = self.detector.push(tick)?;
        let mut events = Vec::new();
        if let Some(k) = &keypose {
            self.accept_keypose(k.clone(), &mut events);
        }
        self.check_timeout(now, &mut events);
        Ok(TickOutput {
            per_gesture,
            keypose,
            events,
        })
    }

    /// Ends the stream: emits a hold in progress and resolves the buffer.
    pub fn finish(&mut self) -> Result<TickOutput, StreamError> {
        let mut out = match std::mem::take(&mut self.pending) {
            tick if tick.is_empty() => TickOutput::default(),
            tick => self.push_tick(tick)?,
        };
        if let Some(k) = self.detector.flush() {
            self.accept_keypose(k.clone(), &mut out.events);
            out.keypose = Some(k);
        }
        self.resolve_all(&mut out.events);
        Ok(out)
    }

    fn live_confidence(&self, tick: &[HandFrame]) -> Option<BTreeMap<String, f64>> {
        let pose = PoseSnapshot::new(tick.to_vec(), 0);
        let gf = extract_gesture_features(&[pose], &[], &self.cfg.matching.features).ok()?;
        let x = pad(&gf.flat, self.model.tree.n_features)?;
        self.model.tree.predict(&x).ok().map(|p| p.per_gesture)
    }

    fn accept_keypose(&mut self, k: Keypose, events: &mut Vec<RecognitionEvent>) {
        if let Some(last) = self.buffer.last() {
            if k.start - last.end > self.cfg.dwell.sequence_timeout {
                self.resolve_all(events);
            }
        }
        self.buffer.push(k);
        if self.buffer.len() == MAX_BUFFERED {
            self.resolve_prefix(events);
        }
    }

    fn check_timeout(&mut self, now: f64, events: &mut Vec<RecognitionEvent>) {
        let Some(last_end) = self.buffer.last().map(|k| k.end) else {
            return;
        };
        let deadline = last_end + self.cfg.dwell.sequence_timeout;
        let hold_in_time = self.detector.run_start().is_some_and(|s| s <= deadline);
        if now > deadline && !hold_in_time {
            self.resolve_all(events);
        }
    }

    fn try_match(&self, n: usize) -> Option<RecognitionEvent> {
        let poses: Vec<PoseSnapshot> = self.buffer[..n].iter().map(|k| k.pose.clone()).collect();
        match_sequence(&poses, &self.model, &self.cfg.matching)
    }

    /// Longest matching prefix; otherwise drops the oldest keypose.
    fn resolve_prefix(&mut self, events: &mut Vec<RecognitionEvent>) {
        for n in (1..=self.buffer.len()).rev() {
            if let Some(ev) = self.try_match(n) {
                events.push(ev);
                self.buffer.drain(..n);
                return;
            }
        }
        self.buffer.remove(0);
    }

    fn resolve_all(&mut self, events: &mut Vec<RecognitionEvent>) {
        while !self.buffer.is_empty() {
            self.resolve_prefix(events);
        }
    }
}

#[derive(Debug, Error)]
pub enum StreamIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads a JSON Lines frame stream; blank lines are skipped.
pub fn read_frames_jsonl(reader: impl BufRead) -> Result<Vec<HandFrame>, StreamIoError> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(serde_json::from_str(&line).map_err(|source| StreamIoError::Parse { line: i + 1, source })?);
    }
    Ok(frames)
}

pub fn write_frames_jsonl<'a>(
    mut w: impl Write,
    frames: impl IntoIterator<Item = &'a HandFrame>,
) -> Result<(), StreamIoError> {
    for f in frames {
        serde_json::to_writer(&mut w, f).map_err(|source| StreamIoError::Parse { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
