//! Seeded synthetic sign corpus: parametric hands, jittered signer instances
//! and scripted frame streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    extract_gesture_features, extract_pose_features, FeatureConfig, GestureFeatures, MAX_FLAT_LEN,
};
use crate::geometry::{Rotation, Vec3};
use crate::hand::{
    compute_translations, Category, Finger, FingerChain, HandFrame, Handedness, Language,
    PoseSnapshot, Side, SignDatabase, SignGesture, JOINTS_PER_HAND, SCHEMA_VERSION,
};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("could not place {category:?} sign {index}: no candidate {separation_factor}× the noise apart after {attempts} draws")]
    CollisionUnresolvable {
        category: Category,
        index: usize,
        separation_factor: f64,
        attempts: usize,
    },
}

/// Largest abduction offset accepted by [`canonical_hand`], radians.
pub const MAX_SPREAD: f64 = 0.6;

/// Reference palm length the segment table below is expressed against.
const REFERENCE_PALM: f64 = 0.09;

// Base joint (x, y) in units of palm length, right hand, palm in the x-y plane.
const BASE_XY: [(f64, f64); 5] = [
    (0.24, 0.26),
    (0.24, 0.96),
    (0.0, 1.0),
    (-0.22, 0.95),
    (-0.42, 0.86),
];

// Neutral finger direction, radians from +y towards the thumb side.
const NEUTRAL_ANGLE: [f64; 5] = [0.75, 0.08, 0.0, -0.08, -0.18];

// Phalanx lengths (m) at the reference palm length.
const SEGMENTS: [[f64; 3]; 5] = [
    [0.040, 0.032, 0.026],
    [0.040, 0.024, 0.020],
    [0.044, 0.028, 0.022],
    [0.041, 0.027, 0.021],
    [0.032, 0.020, 0.018],
];

// Flexion at each joint for curl = 1, degrees.
const FULL_FLEX_DEG: [f64; 3] = [80.0, 100.0, 70.0];

/// Pose parameters of one hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandParams {
    /// Per-finger curl fraction in `[0, 1]`; 0 is straight.
    pub curl: [f64; 5],
    /// Per-finger abduction offset from the neutral fan, radians.
    pub spread: [f64; 5],
}

impl HandParams {
    pub const DEFAULT_SPREAD: [f64; 5] = [0.0; 5];

    pub fn open() -> Self {
        Self {
            curl: [0.0; 5],
            spread: Self::DEFAULT_SPREAD,
        }
    }

    pub fn fist() -> Self {
        Self {
            curl: [1.0; 5],
            spread: Self::DEFAULT_SPREAD,
        }
    }
}

/// Sum of phalanx lengths of `finger` for a hand of the given palm length.
pub fn finger_length(finger: Finger, palm_length: f64) -> f64 {
    SEGMENTS[finger.index()].iter().sum::<f64>() * palm_length / REFERENCE_PALM
}

/// Deterministic 21-joint hand with the wrist at the origin and the middle
/// finger base at `(0, palm_length, 0)`.
///
/// Fingers fan in the x-y plane and curl towards +z. Left hands mirror x.
pub fn canonical_hand(params: &HandParams, side: Side, palm_length: f64) -> Result<HandFrame, SynthError> {
    if !(palm_length.is_finite() && palm_length > 0.0) {
        return Err(SynthError::ParameterOutOfRange(format!("palm length {palm_length}")));
    }
    for (i, (&c, &s)) in params.curl.iter().zip(&params.spread).enumerate() {
        if !(0.0..=1.0).contains(&c) {
            return Err(SynthError::ParameterOutOfRange(format!("curl[{i}] = {c}")));
        }
        if !(-MAX_SPREAD..=MAX_SPREAD).contains(&s) {
            return Err(SynthError::ParameterOutOfRange(format!("spread[{i}] = {s}")));
        }
    }

    let scale = palm_length / REFERENCE_PALM;
    let mirror = match side {
        Side::Right => 1.0,
        Side::Left => -1.0,
    };
    let palm_normal = Vec3::new(0.0, 0.0, 1.0);

    let fingers = Finger::ALL.map(|finger| {
        let i = finger.index();
        let (bx, by) = BASE_XY[i];
        let base = Vec3::new(bx * palm_length, by * palm_length, 0.0);
        let theta = NEUTRAL_ANGLE[i] + params.spread[i];
        let dir = Vec3::new(theta.sin(), theta.cos(), 0.0);
        let bend = if finger == Finger::Thumb {
            // thumb folds across the palm
            let n = Vec3::new(-0.8, 0.0, 0.6);
            (n - dir * n.dot(dir)).normalized().unwrap_or(palm_normal)
        } else {
            palm_normal
        };
        let mut joints = [base; 4];
        let mut phi = 0.0;
        for k in 0..3 {
            phi += (FULL_FLEX_DEG[k] * params.curl[i]).to_radians();
            let step = (dir * phi.cos() + bend * phi.sin()) * (SEGMENTS[i][k] * scale);
            joints[k + 1] = joints[k] + step;
        }
        FingerChain {
            finger,
            joints: joints.map(|p| Vec3::new(mirror * p.x, p.y, p.z)),
        }
    });

    Ok(HandFrame {
        timestamp: 0.0,
        side,
        wrist: Vec3::ZERO,
        fingers,
    })
}

/// Expected RMS L2 perturbation of a hand's normalized pose features under
/// i.i.d. per-joint Gaussian jitter, to first order. Each raw distance picks
/// up the projected difference of two independent jitters (variance 2σ²),
/// and so does the palm length it is divided by, which scales feature `f`
/// by a further `f·δP/P`.
pub fn expected_feature_noise(jitter_sigma: f64, palm_length: f64, features: &[f64]) -> f64 {
    let per_unit: f64 = features.iter().map(|f| 1.0 + f * f).sum();
    jitter_sigma / palm_length * (2.0 * per_unit).sqrt()
}

/// [`expected_feature_noise`] over a whole gesture: every pose block plus the
/// translations, whose centroid differences carry variance 2σ²/21 per axis.
pub fn expected_gesture_noise(jitter_sigma: f64, palm_length: f64, g: &GestureFeatures) -> f64 {
    let r = jitter_sigma / palm_length;
    let poses: f64 = g
        .pose_features
        .iter()
        .map(|p| expected_feature_noise(jitter_sigma, palm_length, &p.values).powi(2))
        .sum();
    let centroid_var = 3.0 * 2.0 / JOINTS_PER_HAND as f64;
    let moves: f64 = g
        .translation_features
        .iter()
        .map(|t| r * r * (centroid_var + 2.0 * t.dot(*t)))
        .sum();
    (poses + moves).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamTiming {
    pub frame_rate: f64,
    /// Hold duration per keypose, seconds.
    pub plateau: f64,
    /// Duration of the interpolated move between keyposes, seconds.
    pub transition: f64,
}

impl Default for StreamTiming {
    fn default() -> Self {
        Self {
            frame_rate: 60.0,
            plateau: 0.5,
            transition: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub language: Language,
    pub alphabet_signs: usize,
    pub word_signs: usize,
    pub sentence_signs: usize,
    pub instances_per_sign: usize,
    /// Per-joint Gaussian jitter of each signer instance, meters.
    pub jitter_sigma: f64,
    pub palm_length: f64,
    /// Upper bound of the random per-instance rotation, degrees.
    pub max_rotation_deg: f64,
    /// Half-width of the random per-instance placement box, meters.
    pub max_shift: f64,
    /// Jitter the canonical lattice is spaced against, meters. Kept apart
    /// from `jitter_sigma` so sweeping the noise leaves the classes unchanged.
    pub separation_sigma: f64,
    /// Distinct handshapes, and distinct gestures, must be this many expected
    /// noise radii apart.
    pub separation_factor: f64,
    /// Minimum L∞ feature change between consecutive keyposes of one sign.
    pub min_transition: f64,
    /// Scripted keypose-to-keypose centroid offset range, meters.
    pub offset_range: (f64, f64),
    /// Probability that a word/sentence keypose reuses an existing handshape.
    pub handshape_reuse: f64,
    /// Reused handshapes come from the first this-many of the inventory, the
    /// language's common shapes (0 = any).
    pub common_handshapes: usize,
    /// Per-instance relative jitter of each movement's length.
    pub movement_scale_jitter: f64,
    /// Per-instance bound on each movement's direction change, degrees.
    pub movement_angle_deg: f64,
    /// Upper bound of the fraction by which a keypose's handshape drifts toward
    /// its neighbour's in multi-pose signs.
    pub coarticulation: f64,
    pub timing: StreamTiming,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            language: Language::Lse,
            alphabet_signs: 26,
            word_signs: 14,
            sentence_signs: 10,
            instances_per_sign: 10,
            jitter_sigma: 0.005,
            palm_length: 0.09,
            max_rotation_deg: 15.0,
            max_shift: 0.05,
            separation_sigma: 0.005,
            separation_factor: 3.0,
            min_transition: 0.6,
            offset_range: (0.08, 0.2),
            handshape_reuse: 1.0,
            common_handshapes: 0,
            movement_scale_jitter: 0.25,
            movement_angle_deg: 20.0,
            coarticulation: 0.4,
            timing: StreamTiming::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn count(&self, category: Category) -> usize {
        match category {
            Category::Alphabet => self.alphabet_signs,
            Category::Word => self.word_signs,
            Category::Sentence => self.sentence_signs,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::ParameterOutOfRange(m));
        for c in Category::ALL {
            if self.count(c) == 0 {
                return bad(format!("{c:?} sign count must be ≥ 1"));
            }
        }
        if self.instances_per_sign == 0 {
            return bad("instances_per_sign must be ≥ 1".into());
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad(format!("jitter_sigma {}", self.jitter_sigma));
        }
        if !(self.palm_length > 0.0 && self.palm_length.is_finite()) {
            return bad(format!("palm_length {}", self.palm_length));
        }
        let (lo, hi) = self.offset_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("offset_range {:?}", self.offset_range));
        }
        if !(self.separation_sigma >= 0.0 && self.separation_factor >= 0.0) {
            return bad(format!("separation {}× at σ = {}", self.separation_factor, self.separation_sigma));
        }
        if !(0.0..=1.0).contains(&self.handshape_reuse) {
            return bad(format!("handshape_reuse {}", self.handshape_reuse));
        }
        if !(0.0..1.0).contains(&self.movement_scale_jitter) || !(0.0..=180.0).contains(&self.movement_angle_deg) {
            return bad(format!(
                "movement jitter {} / {}°",
                self.movement_scale_jitter, self.movement_angle_deg
            ));
        }
        if !(0.0..=0.5).contains(&self.coarticulation) {
            return bad(format!("coarticulation {}", self.coarticulation));
        }
        let t = &self.timing;
        if !(t.frame_rate > 0.0 && t.plateau > 0.0 && t.transition > 0.0) {
            return bad(format!("timing {t:?}"));
        }
        Ok(())
    }
}

/// Canonical templates plus labelled signer instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub db: SignDatabase,
    /// Jittered copies of each template; `id` holds the class label.
    pub instances: Vec<SignGesture>,
    /// Parameters each template keypose was built from, parallel to `db.signs`.
    pub params: Vec<Vec<HandParams>>,
}

const CURL_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const SPREAD_LEVELS: [f64; 3] = [-0.3, 0.0, 0.3];
const MAX_DRAWS: usize = 20_000;
const MAX_SIGN_DRAWS: usize = 1_000;

fn sign_id(lang: Language, category: Category, n: usize) -> (String, String) {
    let prefix = match lang {
        Language::Lse => "lse",
        Language::Lis => "lis",
    };
    match category {
        Category::Alphabet if n < 26 => {
            let letter = (b'a' + n as u8) as char;
            (format!("{prefix}-alpha-{letter}"), letter.to_ascii_uppercase().to_string())
        }
        Category::Alphabet => (format!("{prefix}-alpha-{n:02}"), format!("A{n}")),
        Category::Word => (format!("{prefix}-word-{n:02}"), format!("Word {}", n + 1)),
        Category::Sentence => (format!("{prefix}-sent-{n:02}"), format!("Sentence {}", n + 1)),
    }
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// splitmix64 finalizer; derives independent per-instance seeds.
fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Anchor of the first keypose's centroid, roughly chest height in front of the signer.
const ANCHOR: Vec3 = Vec3::new(0.0, 1.2, 0.35);

/// Places a hand so its centroid sits at `at`.
fn centred_at(hand: &HandFrame, at: Vec3) -> HandFrame {
    let shift = at - hand.centroid();
    hand.map_joints(|p| p + shift)
}

#[derive(Clone)]
struct Handshape {
    params: HandParams,
    hand: HandFrame,
    features: Vec<f64>,
    /// Expected feature noise at the reference jitter.
    noise: f64,
}

impl Handshape {
    fn clears(&self, features: &[f64], noise: f64, factor: f64) -> bool {
        l2(&self.features, features) >= factor * self.noise.max(noise)
    }
}

fn draw_handshape(
    inventory: &[Handshape],
    cfg: &GeneratorConfig,
    rng: &mut impl Rng,
    ok: impl Fn(&[f64], f64) -> bool,
) -> Result<Option<Handshape>, SynthError> {
    for _ in 0..MAX_DRAWS {
        let params = HandParams {
            curl: std::array::from_fn(|_| CURL_LEVELS[rng.random_range(0..CURL_LEVELS.len())]),
            spread: std::array::from_fn(|_| SPREAD_LEVELS[rng.random_range(0..SPREAD_LEVELS.len())]),
        };
        let hand = canonical_hand(&params, Side::Right, cfg.palm_length)?;
        let features = extract_pose_features(&hand)
            .map_err(|e| SynthError::ParameterOutOfRange(e.to_string()))?
            .values
            .to_vec();
        let noise = expected_feature_noise(cfg.separation_sigma, cfg.palm_length, &features);
        let f = cfg.separation_factor;
        if ok(&features, noise) && inventory.iter().all(|h| h.clears(&features, noise, f)) {
            return Ok(Some(Handshape {
                params,
                hand,
                features,
                noise,
            }));
        }
    }
    Ok(None)
}

/// Canonical templates come first: every handshape is drawn from the curl /
/// spread lattice and kept `separation_factor` expected noise radii from all
/// earlier ones. Word and sentence keyposes may instead reuse an earlier
/// handshape, as real signs share a small handshape inventory; the whole
/// gesture (poses plus movement) must still clear every other sign by
/// `separation_factor` gesture noise radii.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Corpus, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut inventory: Vec<Handshape> = Vec::new();
    let mut flats: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut db = SignDatabase {
        version: SCHEMA_VERSION,
        language: cfg.language,
        signs: Vec::new(),
    };
    let mut all_params = Vec::new();
    let features = FeatureConfig::default();

    for category in Category::ALL {
        for n in 0..cfg.count(category) {
            let (id, label) = sign_id(cfg.language, category, n);
            let unresolvable = SynthError::CollisionUnresolvable {
                category,
                index: n,
                separation_factor: cfg.separation_factor,
                attempts: MAX_DRAWS,
            };
            let mut accepted = None;
            for _ in 0..MAX_SIGN_DRAWS {
                let mut shapes: Vec<(Handshape, bool)> = Vec::new();
                for _ in 0..category.arity() {
                    let prev = shapes.last().map(|(h, _)| h.features.clone());
                    let moving = |f: &[f64]| prev.as_ref().is_none_or(|q| linf(q, f) >= cfg.min_transition);
                    let reuse = category != Category::Alphabet && rng.random_bool(cfg.handshape_reuse);
                    let pool = match cfg.common_handshapes {
                        0 => &inventory[..],
                        k => &inventory[..k.min(inventory.len())],
                    };
                    let candidates: Vec<&Handshape> = pool.iter().filter(|h| moving(&h.features)).collect();
                    let shape = if reuse && !candidates.is_empty() {
                        candidates[rng.random_range(0..candidates.len())].clone()
                    } else {
                        // fresh shapes must also avoid the ones just drawn for this sign
                        let taken: Vec<&Handshape> =
                            shapes.iter().filter(|(_, fresh)| *fresh).map(|(h, _)| h).collect();
                        let ok = |f: &[f64], noise: f64| {
                            moving(f) && taken.iter().all(|h| h.clears(f, noise, cfg.separation_factor))
                        };
                        match draw_handshape(&inventory, cfg, &mut rng, ok)? {
                            Some(h) => h,
                            None => return Err(unresolvable),
                        }
                    };
                    shapes.push((shape, !reuse || candidates.is_empty()));
                }

                let mut at = ANCHOR;
                let mut poses = Vec::new();
                for (k, (shape, _)) in shapes.iter().enumerate() {
                    if k > 0 {
                        let (lo, hi) = cfg.offset_range;
                        at += random_unit(&mut rng) * rng.random_range(lo..=hi);
                    }
                    poses.push(PoseSnapshot::new(vec![centred_at(&shape.hand, at)], k));
                }
                let translations = compute_translations(&poses);
                let gf = extract_gesture_features(&poses, &translations, &features)
                    .map_err(|e| SynthError::ParameterOutOfRange(e.to_string()))?;
                let noise = expected_gesture_noise(cfg.separation_sigma, cfg.palm_length, &gf);
                let flat = gf.padded(MAX_FLAT_LEN).expect("arity ≤ 3");
                let clear = |(q, qn): &(Vec<f64>, f64)| l2(q, &flat) >= cfg.separation_factor * qn.max(noise);
                if flats.iter().all(clear) {
                    accepted = Some((shapes, poses, translations, (flat, noise)));
                    break;
                }
            }
            let (shapes, poses, translations, flat) = accepted.ok_or(unresolvable)?;
            flats.push(flat);
            all_params.push(shapes.iter().map(|(h, _)| h.params).collect());
            for (h, fresh) in shapes {
                if fresh {
                    inventory.push(h);
                }
            }
            db.signs.push(SignGesture {
                id,
                label,
                category,
                handedness: Handedness::Right,
                translations,
                poses,
            });
        }
    }

    let instances = db
        .signs
        .iter()
        .enumerate()
        .flat_map(|(s, sign)| (0..cfg.instances_per_sign).map(move |i| (s, i, sign)))
        .map(|(s, i, sign)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, s as u64 + 1, i as u64 + 1));
            make_instance(sign, cfg, &mut rng)
        })
        .collect();

    Ok(Corpus {
        db,
        instances,
        params: all_params,
    })
}

/// One signer's rendition: random rigid placement plus per-joint jitter.
pub fn make_instance(sign: &SignGesture, cfg: &GeneratorConfig, rng: &mut impl Rng) -> SignGesture {
    let axis = random_unit(rng);
    let angle = rng.random_range(0.0..=cfg.max_rotation_deg.to_radians());
    let rot = Rotation::from_axis_angle(axis, angle);
    let shift = Vec3::new(
        rng.random_range(-cfg.max_shift..=cfg.max_shift),
        rng.random_range(-cfg.max_shift..=cfg.max_shift),
        rng.random_range(-cfg.max_shift..=cfg.max_shift),
    );
    let pivot = sign.poses[0].primary_hand().map_or(Vec3::ZERO, HandFrame::centroid);
    let noise = (cfg.jitter_sigma > 0.0).then(|| Normal::new(0.0, cfg.jitter_sigma).expect("finite sigma"));

    // each movement is stretched and bent a little, then the later keyposes follow
    let mut displacement = Vec3::ZERO;
    let mut offsets = vec![Vec3::ZERO];
    for t in &sign.translations {
        let scale = 1.0 + rng.random_range(-cfg.movement_scale_jitter..=cfg.movement_scale_jitter);
        let bend = Rotation::from_axis_angle(
            random_unit(rng),
            rng.random_range(0.0..=cfg.movement_angle_deg.to_radians()),
        );
        displacement += bend.apply(*t) * scale - *t;
        offsets.push(displacement);
    }

    // handshapes blend toward the next keypose (the last one toward the previous)
    let n = sign.poses.len();
    let shaped: Vec<PoseSnapshot> = (0..n)
        .map(|k| {
            let pose = &sign.poses[k];
            if n < 2 {
                return pose.clone();
            }
            let other = &sign.poses[if k + 1 < n { k + 1 } else { k - 1 }];
            let u = rng.random_range(0.0..=cfg.coarticulation);
            blend_shape(pose, other, u)
        })
        .collect();

    let poses: Vec<PoseSnapshot> = shaped
        .iter()
        .zip(&offsets)
        .map(|(pose, &offset)| {
            pose.map_joints(|p| {
                let mut q = pivot + rot.apply(p + offset - pivot) + shift;
                if let Some(n) = &noise {
                    q += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
                }
                q
            })
        })
        .collect();

    SignGesture {
        id: sign.id.clone(),
        label: sign.label.clone(),
        category: sign.category,
        handedness: sign.handedness,
        translations: compute_translations(&poses),
        poses,
    }
}

/// Moves `a`'s handshape a fraction `u` toward `b`'s, keeping `a`'s centroid.
fn blend_shape(a: &PoseSnapshot, b: &PoseSnapshot, u: f64) -> PoseSnapshot {
    let mut out = a.clone();
    for (ha, hb) in out.hands.iter_mut().zip(&b.hands) {
        let (ca, cb) = (ha.centroid(), hb.centroid());
        let target: Vec<Vec3> = hb.joints().map(|p| p - cb + ca).collect();
        let mut i = 0;
        *ha = ha.map_joints(|p| {
            let q = p.lerp(target[i], u);
            i += 1;
            q
        });
    }
    out
}

/// A frame stream replaying a sign plus the ground-truth hold intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedStream {
    /// Flattened frames; two-handed signs emit two frames per tick.
    pub frames: Vec<HandFrame>,
    /// Inclusive tick ranges during which each keypose is held.
    pub plateaus: Vec<(usize, usize)>,
    pub ticks: usize,
}

/// Holds each keypose for `timing.plateau` and moves linearly between them.
pub fn script_stream(sign: &SignGesture, timing: &StreamTiming, start_time: f64) -> ScriptedStream {
    let hold = ((timing.plateau * timing.frame_rate).round() as usize).max(1);
    let moving = ((timing.transition * timing.frame_rate).round() as usize).max(1);
    let mut ticks: Vec<PoseSnapshot> = Vec::new();
    let mut plateaus = Vec::new();

    for (k, pose) in sign.poses.iter().enumerate() {
        if k > 0 {
            let prev = &sign.poses[k - 1];
            for j in 1..=moving {
                let s = j as f64 / (moving + 1) as f64;
                ticks.push(lerp_pose(prev, pose, s));
            }
        }
        let start = ticks.len();
        ticks.extend(std::iter::repeat_n(pose.clone(), hold));
        plateaus.push((start, ticks.len() - 1));
    }

    let frames = ticks
        .iter()
        .enumerate()
        .flat_map(|(i, pose)| {
            let t = start_time + i as f64 / timing.frame_rate;
            pose.hands.iter().map(move |h| HandFrame {
                timestamp: t,
                ..h.clone()
            })
        })
        .collect();

    ScriptedStream {
        frames,
        plateaus,
        ticks: ticks.len(),
    }
}

fn lerp_pose(a: &PoseSnapshot, b: &PoseSnapshot, s: f64) -> PoseSnapshot {
    let hands = a
        .hands
        .iter()
        .map(|ha| {
            let hb = b.hand(ha.side).unwrap_or(ha);
            let mut out = ha.clone();
            out.wrist = ha.wrist.lerp(hb.wrist, s);
            for (ca, (co, cb)) in ha.fingers.iter().zip(out.fingers.iter_mut().zip(&hb.fingers)) {
                for k in 0..4 {
                    co.joints[k] = ca.joints[k].lerp(cb.joints[k], s);
                }
            }
            out
        })
        .collect();
    PoseSnapshot::new(hands, a.pose_index)
}
