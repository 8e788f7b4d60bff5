//! Distance features per hand pose and the flat per-gesture feature vector.
//!
//! Pose feature layout (all distances divided by palm length):
//!
//! | index    | feature                                            |
//! |----------|----------------------------------------------------|
//! | 0..=4    | tip–base per finger (thumb, index, middle, ring, pinky) |
//! | 5..=14   | tip–tip for the 10 finger pairs, (T,I), (T,M), … (R,P) |
//! | 15..=19  | tip–proximal per finger                            |
//! | 20       | wrist–middle tip (hand extent)                     |
//! | 21       | thumb tip–pinky base (hand spread)                 |
//!
//! The flat gesture vector is `[pose₀, t₀, pose₁, t₁, pose₂]` where `tᵢ` is the
//! translation between poses divided by the first pose's palm length.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::hand::{Finger, HandFrame, Joint, PoseSnapshot, Side, SignGesture};

pub const POSE_FEATURES: usize = 22;

/// Palm lengths below this (meters) are degenerate.
pub const MIN_PALM_LENGTH: f64 = 1e-6;

/// Flat length of the longest (three-pose, single-hand) gesture.
pub const MAX_FLAT_LEN: usize = 72;

pub const FEATURE_NAMES: [&str; POSE_FEATURES] = [
    "tipbase_thumb",
    "tipbase_index",
    "tipbase_middle",
    "tipbase_ring",
    "tipbase_pinky",
    "tiptip_t_i",
    "tiptip_t_m",
    "tiptip_t_r",
    "tiptip_t_p",
    "tiptip_i_m",
    "tiptip_i_r",
    "tiptip_i_p",
    "tiptip_m_r",
    "tiptip_m_p",
    "tiptip_r_p",
    "tipprox_thumb",
    "tipprox_index",
    "tipprox_middle",
    "tipprox_ring",
    "tipprox_pinky",
    "extent",
    "spread",
];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("degenerate hand: palm length {0:e} m")]
    DegenerateHand(f64),
    #[error("{poses} poses need {} translations, got {translations}", poses.saturating_sub(1))]
    ArityMismatch { poses: usize, translations: usize },
    #[error("pose {0} has no hand")]
    MissingHand(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Divide distances by palm length. Off only for ablation runs.
    pub normalize: bool,
    /// Append the secondary hand's 22 features plus the inter-wrist distance
    /// to every two-handed pose block.
    pub two_hand: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            two_hand: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFeatures {
    pub values: [f64; POSE_FEATURES],
    pub hand_side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureFeatures {
    pub pose_features: Vec<PoseFeatures>,
    pub translation_features: Vec<Vec3>,
    pub flat: Vec<f64>,
}

impl GestureFeatures {
    pub fn arity(&self) -> usize {
        self.pose_features.len()
    }

    /// Flat vector zero-padded to `width`, or `None` if it does not fit.
    pub fn padded(&self, width: usize) -> Option<Vec<f64>> {
        pad(&self.flat, width)
    }
}

/// Zero-pads a flat vector to `width`. Real pose blocks are strictly
/// positive, so padding stays distinguishable from a missing pose.
pub fn pad(flat: &[f64], width: usize) -> Option<Vec<f64>> {
    (flat.len() <= width).then(|| {
        let mut v = flat.to_vec();
        v.resize(width, 0.0);
        v
    })
}

/// Flat length for a single-hand gesture of `arity` poses.
pub fn flat_len(arity: usize) -> usize {
    POSE_FEATURES * arity + 3 * arity.saturating_sub(1)
}

/// Wrist to middle-finger base, in meters.
pub fn palm_length(hand: &HandFrame) -> Result<f64, FeatureError> {
    let d = hand.wrist.distance(hand.finger(Finger::Middle).base());
    if d.is_finite() && d >= MIN_PALM_LENGTH {
        Ok(d)
    } else {
        Err(FeatureError::DegenerateHand(d))
    }
}

/// The 22 distances of one hand, divided by palm length.
pub fn extract_pose_features(hand: &HandFrame) -> Result<PoseFeatures, FeatureError> {
    extract_pose_features_with(hand, &FeatureConfig::default())
}

pub fn extract_pose_features_with(
    hand: &HandFrame,
    cfg: &FeatureConfig,
) -> Result<PoseFeatures, FeatureError> {
    let palm = palm_length(hand)?;
    let scale = if cfg.normalize { 1.0 / palm } else { 1.0 };
    let tip = |f: Finger| hand.finger(f).tip();
    let mut values = [0.0; POSE_FEATURES];
    let mut k = 0;
    let mut push = |d: f64| {
        values[k] = d * scale;
        k += 1;
    };

    for f in Finger::ALL {
        push(tip(f).distance(hand.finger(f).base()));
    }
    for (i, a) in Finger::ALL.iter().enumerate() {
        for b in &Finger::ALL[i + 1..] {
            push(tip(*a).distance(tip(*b)));
        }
    }
    for f in Finger::ALL {
        push(tip(f).distance(hand.finger(f).joint(Joint::Proximal)));
    }
    push(hand.wrist.distance(tip(Finger::Middle)));
    push(tip(Finger::Thumb).distance(hand.finger(Finger::Pinky).base()));

    Ok(PoseFeatures {
        values,
        hand_side: hand.side,
    })
}

/// Flat feature vector for a captured pose list and its translations.
pub fn extract_gesture_features(
    poses: &[PoseSnapshot],
    translations: &[Vec3],
    cfg: &FeatureConfig,
) -> Result<GestureFeatures, FeatureError> {
    if poses.is_empty() || poses.len() > 3 || translations.len() + 1 != poses.len() {
        return Err(FeatureError::ArityMismatch {
            poses: poses.len(),
            translations: translations.len(),
        });
    }

    let primary = |i: usize| poses[i].primary_hand().ok_or(FeatureError::MissingHand(i));
    let first_palm = palm_length(primary(0)?)?;
    let motion_scale = if cfg.normalize { 1.0 / first_palm } else { 1.0 };

    let mut pose_features = Vec::with_capacity(poses.len());
    let mut translation_features = Vec::with_capacity(translations.len());
    let mut flat = Vec::with_capacity(flat_len(poses.len()));

    for (i, pose) in poses.iter().enumerate() {
        if i > 0 {
            let t = translations[i - 1] * motion_scale;
            flat.extend_from_slice(&t.to_array());
            translation_features.push(t);
        }
        let main = primary(i)?;
        let pf = extract_pose_features_with(main, cfg)?;
        flat.extend_from_slice(&pf.values);
        if cfg.two_hand {
            if let Some(other) = pose.hands.iter().find(|h| h.side != main.side) {
                let of = extract_pose_features_with(other, cfg)?;
                flat.extend_from_slice(&of.values);
                let scale = if cfg.normalize { 1.0 / palm_length(main)? } else { 1.0 };
                flat.push(main.wrist.distance(other.wrist) * scale);
            }
        }
        pose_features.push(pf);
    }

    Ok(GestureFeatures {
        pose_features,
        translation_features,
        flat,
    })
}

pub fn sign_features(sign: &SignGesture, cfg: &FeatureConfig) -> Result<GestureFeatures, FeatureError> {
    extract_gesture_features(&sign.poses, &sign.translations, cfg)
}

/// Writes labelled pose features as CSV with the canonical column names.
pub fn write_features_csv<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = (&'a str, &'a PoseFeatures)>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label", "side"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (label, pf) in rows {
        let side = match pf.hand_side {
            Side::Left => "left",
            Side::Right => "right",
        };
        let mut rec = vec![label.to_string(), side.to_string()];
        rec.extend(pf.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
