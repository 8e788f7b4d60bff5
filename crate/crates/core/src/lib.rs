//! Hardware-free sign-language recognition: hand skeletons, distance
//! features, a from-scratch decision tree, keypose streaming, a synthetic
//! corpus and the evaluation harness.

pub mod dtree;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod hand;
pub mod session;
pub mod stream;
pub mod synth;

pub use dtree::{DecisionTree, Prediction, Sample, TreeParams};
pub use features::{FeatureConfig, GestureFeatures, PoseFeatures};
pub use geometry::Vec3;
pub use hand::{Category, HandFrame, PoseSnapshot, Side, SignDatabase, SignGesture};
pub use stream::{EngineConfig, RecognitionEvent, SignModel, StreamEngine};
