//! Hand skeleton data model, sign templates and the JSON gesture file format.
//!
//! A hand is a wrist plus five uniform four-joint finger chains (21 joints).
//! Signs hold one to three keyposes and the centroid displacement between
//! consecutive keyposes.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::stream::{self, DwellConfig, StreamError};

/// Gesture file schema version written and accepted by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// Joints per hand: wrist + 5 fingers × 4.
pub const JOINTS_PER_HAND: usize = 21;

#[derive(Debug, Error)]
pub enum HandError {
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("stream too short: {required} keyposes required, {found} detected")]
    StreamTooShort { required: usize, found: usize },
    #[error("hand set changed during capture")]
    InconsistentHandedness,
    #[error(transparent)]
    Stream(#[from] StreamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Pinky => "pinky",
        }
    }
}

/// Position of a joint along a finger chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Joint {
    Base = 0,
    Proximal = 1,
    Intermediate = 2,
    Tip = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Ordered joints of one finger: base, proximal, intermediate, tip.
///
/// For the thumb, "intermediate" is the distal (IP) joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerChain {
    pub finger: Finger,
    pub joints: [Vec3; 4],
}

impl FingerChain {
    pub fn joint(&self, j: Joint) -> Vec3 {
        self.joints[j as usize]
    }

    pub fn base(&self) -> Vec3 {
        self.joints[0]
    }

    pub fn tip(&self) -> Vec3 {
        self.joints[3]
    }
}

/// One tracked hand at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HandWire", into = "HandWire")]
pub struct HandFrame {
    /// Seconds on a monotonic clock. Zero for stored templates.
    pub timestamp: f64,
    pub side: Side,
    pub wrist: Vec3,
    /// Indexed by `Finger::index()`.
    pub fingers: [FingerChain; 5],
}

impl HandFrame {
    pub fn finger(&self, f: Finger) -> &FingerChain {
        &self.fingers[f.index()]
    }

    /// All 21 joints, wrist first, then each finger base→tip.
    pub fn joints(&self) -> impl Iterator<Item = Vec3> + '_ {
        std::iter::once(self.wrist).chain(self.fingers.iter().flat_map(|c| c.joints))
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.joints().fold(Vec3::ZERO, |acc, p| acc + p);
        sum / JOINTS_PER_HAND as f64
    }

    /// Applies `f` to every joint position.
    pub fn map_joints(&self, mut f: impl FnMut(Vec3) -> Vec3) -> HandFrame {
        let mut out = self.clone();
        out.wrist = f(out.wrist);
        for chain in out.fingers.iter_mut() {
            for p in chain.joints.iter_mut() {
                *p = f(*p);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.timestamp.is_finite() {
            return Err("non-finite timestamp".into());
        }
        if self.joints().any(|p| !p.is_finite()) {
            return Err(format!("{:?} hand has a non-finite joint", self.side));
        }
        for (i, chain) in self.fingers.iter().enumerate() {
            if chain.finger != Finger::ALL[i] {
                return Err(format!("finger slot {i} holds {:?}", chain.finger));
            }
            if chain.joints.windows(2).any(|w| !(w[0].distance(w[1]) > 0.0)) {
                return Err(format!("{} has coincident consecutive joints", chain.finger.name()));
            }
        }
        if !(self.wrist.distance(self.finger(Finger::Middle).base()) > 0.0) {
            return Err("zero palm length".into());
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ChainWire {
    base: Vec3,
    proximal: Vec3,
    intermediate: Vec3,
    tip: Vec3,
}

#[derive(Serialize, Deserialize)]
struct FingersWire {
    thumb: ChainWire,
    index: ChainWire,
    middle: ChainWire,
    ring: ChainWire,
    pinky: ChainWire,
}

#[derive(Serialize, Deserialize)]
struct HandWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    side: Side,
    wrist: Vec3,
    fingers: FingersWire,
}

// Template hands inside a gesture file omit a zero timestamp.
fn serialize_template_hands<S: serde::Serializer>(hands: &[HandFrame], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(hands.iter().map(|h| {
        let mut w = HandWire::from(h.clone());
        if h.timestamp == 0.0 {
            w.t = None;
        }
        w
    }))
}

impl TryFrom<HandWire> for HandFrame {
    type Error = String;

    fn try_from(w: HandWire) -> Result<Self, String> {
        let chain = |finger: Finger, c: ChainWire| FingerChain {
            finger,
            joints: [c.base, c.proximal, c.intermediate, c.tip],
        };
        let f = w.fingers;
        let hand = HandFrame {
            timestamp: w.t.unwrap_or(0.0),
            side: w.side,
            wrist: w.wrist,
            fingers: [
                chain(Finger::Thumb, f.thumb),
                chain(Finger::Index, f.index),
                chain(Finger::Middle, f.middle),
                chain(Finger::Ring, f.ring),
                chain(Finger::Pinky, f.pinky),
            ],
        };
        hand.validate()?;
        Ok(hand)
    }
}

impl From<HandFrame> for HandWire {
    fn from(h: HandFrame) -> Self {
        let wire = |c: &FingerChain| ChainWire {
            base: c.joints[0],
            proximal: c.joints[1],
            intermediate: c.joints[2],
            tip: c.joints[3],
        };
        let f = &h.fingers;
        HandWire {
            t: Some(h.timestamp),
            side: h.side,
            wrist: h.wrist,
            fingers: FingersWire {
                thumb: wire(&f[0]),
                index: wire(&f[1]),
                middle: wire(&f[2]),
                ring: wire(&f[3]),
                pinky: wire(&f[4]),
            },
        }
    }
}

/// One held keypose: one or two hands (distinct sides).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSnapshot {
    #[serde(serialize_with = "serialize_template_hands")]
    pub hands: Vec<HandFrame>,
    /// Ordinal within the owning gesture; implied by position in the file.
    #[serde(skip)]
    pub pose_index: usize,
}

impl PoseSnapshot {
    pub fn new(hands: Vec<HandFrame>, pose_index: usize) -> Self {
        Self { hands, pose_index }
    }

    pub fn hand(&self, side: Side) -> Option<&HandFrame> {
        self.hands.iter().find(|h| h.side == side)
    }

    /// The right hand when present, otherwise the only hand.
    pub fn primary_hand(&self) -> Option<&HandFrame> {
        self.hand(Side::Right).or_else(|| self.hands.first())
    }

    /// Sorted set of sides present.
    pub fn sides(&self) -> Vec<Side> {
        let mut s: Vec<Side> = self.hands.iter().map(|h| h.side).collect();
        s.sort();
        s
    }

    pub fn timestamp(&self) -> f64 {
        self.hands.first().map_or(0.0, |h| h.timestamp)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hands.is_empty() || self.hands.len() > 2 {
            return Err(format!("pose holds {} hands (expected 1 or 2)", self.hands.len()));
        }
        if self.hands.len() == 2 && self.hands[0].side == self.hands[1].side {
            return Err("pose holds two hands of the same side".into());
        }
        self.hands.iter().try_for_each(HandFrame::validate)
    }

    /// Applies `f` to every joint of every hand.
    pub fn map_joints(&self, mut f: impl FnMut(Vec3) -> Vec3) -> PoseSnapshot {
        PoseSnapshot {
            hands: self.hands.iter().map(|h| h.map_joints(&mut f)).collect(),
            pose_index: self.pose_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Alphabet,
    Word,
    Sentence,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Alphabet, Category::Word, Category::Sentence];

    /// Number of keyposes a sign of this category carries.
    pub fn arity(self) -> usize {
        match self {
            Category::Alphabet => 1,
            Category::Word => 2,
            Category::Sentence => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
    Both,
}

impl Handedness {
    fn sides(self) -> &'static [Side] {
        match self {
            Handedness::Left => &[Side::Left],
            Handedness::Right => &[Side::Right],
            Handedness::Both => &[Side::Left, Side::Right],
        }
    }

    pub fn from_sides(sides: &[Side]) -> Option<Handedness> {
        match sides {
            [Side::Left] => Some(Handedness::Left),
            [Side::Right] => Some(Handedness::Right),
            [Side::Left, Side::Right] => Some(Handedness::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SignGestureWire")]
pub struct SignGesture {
    pub id: String,
    pub label: String,
    pub category: Category,
    pub handedness: Handedness,
    pub poses: Vec<PoseSnapshot>,
    /// Primary-hand centroid displacement between consecutive poses (meters).
    pub translations: Vec<Vec3>,
}

#[derive(Deserialize)]
struct SignGestureWire {
    id: String,
    label: String,
    category: Category,
    handedness: Handedness,
    poses: Vec<PoseSnapshot>,
    translations: Vec<Vec3>,
}

impl From<SignGestureWire> for SignGesture {
    fn from(w: SignGestureWire) -> Self {
        let mut poses = w.poses;
        for (i, p) in poses.iter_mut().enumerate() {
            p.pose_index = i;
        }
        SignGesture {
            id: w.id,
            label: w.label,
            category: w.category,
            handedness: w.handedness,
            poses,
            translations: w.translations,
        }
    }
}

impl SignGesture {
    /// Builds a sign from captured keyposes, computing translations and
    /// checking the category arity.
    pub fn from_poses(
        id: impl Into<String>,
        label: impl Into<String>,
        category: Category,
        mut poses: Vec<PoseSnapshot>,
    ) -> Result<SignGesture, HandError> {
        if poses.len() != category.arity() {
            return Err(HandError::MalformedRecord(format!(
                "{category:?} sign needs {} poses, got {}",
                category.arity(),
                poses.len()
            )));
        }
        for (i, p) in poses.iter_mut().enumerate() {
            p.pose_index = i;
        }
        let handedness = poses
            .first()
            .and_then(|p| Handedness::from_sides(&p.sides()))
            .ok_or_else(|| HandError::MalformedRecord("pose without a valid hand set".into()))?;
        let sign = SignGesture {
            id: id.into(),
            label: label.into(),
            category,
            handedness,
            translations: compute_translations(&poses),
            poses,
        };
        sign.validate().map_err(HandError::MalformedRecord)?;
        Ok(sign)
    }

    pub fn arity(&self) -> usize {
        self.poses.len()
    }

    /// Structural invariants checked on load. Category arity is not enforced
    /// here so that files with mixed-arity signs still parse.
    pub fn validate(&self) -> Result<(), String> {
        let ctx = |m: String| format!("sign '{}': {m}", self.id);
        if self.id.is_empty() {
            return Err("sign with empty id".into());
        }
        if self.label.is_empty() {
            return Err(ctx("empty label".into()));
        }
        if !(1..=3).contains(&self.poses.len()) {
            return Err(ctx(format!("{} poses (expected 1 to 3)", self.poses.len())));
        }
        if self.translations.len() + 1 != self.poses.len() {
            return Err(ctx(format!(
                "{} translations for {} poses",
                self.translations.len(),
                self.poses.len()
            )));
        }
        if self.translations.iter().any(|t| !t.is_finite()) {
            return Err(ctx("non-finite translation".into()));
        }
        for (i, pose) in self.poses.iter().enumerate() {
            pose.validate().map_err(|m| ctx(format!("pose {i}: {m}")))?;
            if pose.pose_index != i {
                return Err(ctx(format!("pose {i} carries index {}", pose.pose_index)));
            }
            if pose.sides() != self.handedness.sides() {
                return Err(ctx(format!(
                    "pose {i} hands {:?} inconsistent with handedness {:?}",
                    pose.sides(),
                    self.handedness
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "LSE")]
    Lse,
    #[serde(rename = "LIS")]
    Lis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignDatabase {
    pub version: u32,
    pub language: Language,
    pub signs: Vec<SignGesture>,
}

impl SignDatabase {
    pub fn new(language: Language) -> Self {
        Self {
            version: SCHEMA_VERSION,
            language,
            signs: Vec::new(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&SignGesture> {
        self.signs.iter().find(|s| s.id == id)
    }

    /// Returns a new database with `sign` appended.
    pub fn with_sign(&self, sign: SignGesture) -> Result<SignDatabase, HandError> {
        let mut db = self.clone();
        db.signs.push(sign);
        db.validate().map_err(HandError::MalformedRecord)?;
        Ok(db)
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for s in &self.signs {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(format!("duplicate sign id '{}'", s.id));
            }
        }
        Ok(())
    }
}

/// Centroid displacement of the primary hand between consecutive poses.
pub fn compute_translations(poses: &[PoseSnapshot]) -> Vec<Vec3> {
    poses
        .windows(2)
        .map(|w| {
            let c = |p: &PoseSnapshot| p.primary_hand().map_or(Vec3::ZERO, HandFrame::centroid);
            c(&w[1]) - c(&w[0])
        })
        .collect()
}

pub fn save_database(db: &SignDatabase, path: impl AsRef<Path>) -> Result<(), HandError> {
    db.validate().map_err(HandError::MalformedRecord)?;
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, db).map_err(|e| HandError::MalformedRecord(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_database(path: impl AsRef<Path>) -> Result<SignDatabase, HandError> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| HandError::MalformedRecord(e.to_string()))?;
    parse_database(value)
}

/// Validates and converts an already-parsed gesture document.
pub fn parse_database(value: serde_json::Value) -> Result<SignDatabase, HandError> {
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| HandError::MalformedRecord("missing integer 'version'".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(HandError::SchemaVersionMismatch {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let db: SignDatabase =
        serde_json::from_value(value).map_err(|e| HandError::MalformedRecord(e.to_string()))?;
    db.validate().map_err(HandError::MalformedRecord)?;
    Ok(db)
}

/// Segments a live capture into the keyposes a sign of `category` needs.
///
/// Keyposes are taken at dwell points in temporal order; extra dwells beyond
/// the category arity are ignored.
pub fn capture_sign_pose(
    frames: impl IntoIterator<Item = HandFrame>,
    category: Category,
    cfg: &DwellConfig,
) -> Result<Vec<PoseSnapshot>, HandError> {
    let ticks = stream::group_ticks(frames);
    let mut expected: Option<Vec<Side>> = None;
    for tick in &ticks {
        let mut sides: Vec<Side> = tick.iter().map(|h| h.side).collect();
        sides.sort();
        match &expected {
            None => expected = Some(sides),
            Some(e) if *e != sides => return Err(HandError::InconsistentHandedness),
            Some(_) => {}
        }
    }
    let required = category.arity();
    let mut poses = stream::detect_keyposes(ticks, cfg)?;
    if poses.len() < required {
        return Err(HandError::StreamTooShort {
            required,
            found: poses.len(),
        });
    }
    poses.truncate(required);
    for (i, p) in poses.iter_mut().enumerate() {
        p.pose_index = i;
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{canonical_hand, HandParams};

    fn hand() -> HandFrame {
        canonical_hand(&HandParams::open(), Side::Right, 0.09).unwrap()
    }

    fn pose(h: HandFrame) -> PoseSnapshot {
        PoseSnapshot::new(vec![h], 0)
    }

    #[test]
    fn single_pose_has_no_translation() {
        assert!(compute_translations(&[pose(hand())]).is_empty());
    }

    #[test]
    fn rigid_shift_moves_centroid_identically() {
        let a = hand();
        let b = a.map_joints(|p| p + Vec3::new(0.1, 0.0, 0.0));
        let t = compute_translations(&[pose(a), pose(b)]);
        assert_eq!(t.len(), 1);
        assert!(t[0].distance(Vec3::new(0.1, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn both_handed_translation_follows_right_hand() {
        let r = hand();
        let mut l = hand().map_joints(|p| Vec3::new(-p.x, p.y, p.z));
        l.side = Side::Left;
        let p0 = PoseSnapshot::new(vec![l.clone(), r.clone()], 0);
        let p1 = PoseSnapshot::new(
            vec![l, r.map_joints(|p| p + Vec3::new(0.0, 0.2, 0.0))],
            1,
        );
        let t = compute_translations(&[p0, p1]);
        assert!(t[0].distance(Vec3::new(0.0, 0.2, 0.0)) < 1e-12);
    }

    #[test]
    fn hand_json_field_names() {
        let v = serde_json::to_value(hand()).unwrap();
        assert_eq!(v["side"], "right");
        assert_eq!(v["t"], 0.0);
        let in_pose = serde_json::to_value(pose(hand())).unwrap();
        assert!(in_pose["hands"][0].get("t").is_none());
        for f in ["thumb", "index", "middle", "ring", "pinky"] {
            for j in ["base", "proximal", "intermediate", "tip"] {
                assert_eq!(v["fingers"][f][j].as_array().unwrap().len(), 3);
            }
        }
        let mut timed = hand();
        timed.timestamp = 1.5;
        assert_eq!(serde_json::to_value(pose(timed)).unwrap()["hands"][0]["t"], 1.5);
    }

    #[test]
    fn missing_joint_is_rejected() {
        let mut v = serde_json::to_value(hand()).unwrap();
        v["fingers"]["ring"].as_object_mut().unwrap().remove("tip");
        assert!(serde_json::from_value::<HandFrame>(v).is_err());
    }

    #[test]
    fn coincident_joints_are_rejected() {
        let mut h = hand();
        h.fingers[1].joints[2] = h.fingers[1].joints[1];
        assert!(h.validate().is_err());
    }

    #[test]
    fn from_poses_enforces_category_arity() {
        let err = SignGesture::from_poses("x", "X", Category::Word, vec![pose(hand())]);
        assert!(matches!(err, Err(HandError::MalformedRecord(_))));
        let ok = SignGesture::from_poses("x", "X", Category::Alphabet, vec![pose(hand())]).unwrap();
        assert_eq!(ok.handedness, Handedness::Right);
        assert!(ok.translations.is_empty());
    }

    #[test]
    fn handedness_mismatch_is_invalid() {
        let mut s = SignGesture::from_poses("x", "X", Category::Alphabet, vec![pose(hand())]).unwrap();
        s.handedness = Handedness::Left;
        assert!(s.validate().is_err());
        s.handedness = Handedness::Both;
        assert!(s.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let s = SignGesture::from_poses("x", "X", Category::Alphabet, vec![pose(hand())]).unwrap();
        let db = SignDatabase::new(Language::Lse).with_sign(s.clone()).unwrap();
        assert!(db.with_sign(s).is_err());
    }

    #[test]
    fn version_mismatch() {
        let v = serde_json::json!({"version": 2, "language": "LSE", "signs": []});
        assert!(matches!(
            parse_database(v),
            Err(HandError::SchemaVersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_failure() {
        assert!(matches!(
            load_database("/nonexistent/signs.json"),
            Err(HandError::IoFailure(_))
        ));
    }
}
