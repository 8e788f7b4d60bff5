//! Decision-tree classifier over continuous features.
//!
//! Splits are binary thresholds on one feature (`x[f] <= threshold` goes
//! left), chosen by maximum information gain with entropy as the impurity.
//! Candidate thresholds are midpoints between consecutive distinct values.
//! Training is deterministic: gain ties go to the lowest feature index, then
//! the lowest threshold; leaf ties go to the lexicographically smallest label.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gains closer than this are treated as equal.
pub const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("entropy of an empty set")]
    EmptySet,
    #[error("children hold {children} samples but the parent holds {parent}")]
    PartitionMismatch { parent: usize, children: usize },
    #[error("no training samples")]
    NoSamples,
    #[error("sample {index} has {found} features, expected {expected}")]
    InconsistentDimensions { index: usize, expected: usize, found: usize },
    #[error("feature vector has {found} values, the tree was trained on {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("gesture '{0}' is not a class of this tree")]
    UnknownGesture(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::Entropy,
            max_depth: Some(12),
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn unlimited() -> Self {
        Self {
            max_depth: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let bad = |m: String| Err(TreeError::InvalidParams(m));
        if self.max_depth == Some(0) {
            return bad("max_depth must be positive".into());
        }
        if self.min_samples_split < 2 {
            return bad(format!("min_samples_split {} < 2", self.min_samples_split));
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be ≥ 1".into());
        }
        if self.min_samples_leaf > self.min_samples_split {
            return bad(format!(
                "min_samples_leaf {} exceeds min_samples_split {}",
                self.min_samples_leaf, self.min_samples_split
            ));
        }
        Ok(())
    }
}

/// One labelled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: String,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            features,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: BTreeMap<String, usize>,
        prediction: String,
        depth: usize,
    },
}

impl TreeNode {
    fn max_depth(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => left.max_depth().max(right.max_depth()),
            TreeNode::Leaf { depth, .. } => *depth,
        }
    }

    fn leaves<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        match self {
            TreeNode::Internal { left, right, .. } => {
                left.leaves(out);
                right.leaves(out);
            }
            leaf => out.push(leaf),
        }
    }
}

/// Class distribution at the reached leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
    /// Every class of the tree; classes absent from the leaf map to 0.
    pub per_gesture: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub params: TreeParams,
    pub n_features: usize,
    /// Sorted class labels.
    pub classes: Vec<String>,
    pub root: TreeNode,
}

/// Shannon entropy in bits of a class-count distribution.
pub fn entropy<I: IntoIterator<Item = usize>>(counts: I) -> Result<f64, TreeError> {
    let counts: Vec<usize> = counts.into_iter().collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(TreeError::EmptySet);
    }
    Ok(entropy_of(&counts, total))
}

fn entropy_of(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    // a pure set sums to -0.0
    h.max(0.0)
}

/// `H(parent) − Σ (nₖ/n)·H(childₖ)`. Empty children contribute nothing.
pub fn information_gain<C: AsRef<[usize]>>(parent: &[usize], children: &[C]) -> Result<f64, TreeError> {
    let n: usize = parent.iter().sum();
    let child_total: usize = children.iter().map(|c| c.as_ref().iter().sum::<usize>()).sum();
    if child_total != n {
        return Err(TreeError::PartitionMismatch {
            parent: n,
            children: child_total,
        });
    }
    if n == 0 {
        return Err(TreeError::EmptySet);
    }
    Ok(gain_of(parent, n, children.iter().map(AsRef::as_ref)))
}

fn gain_of<'a>(parent: &[usize], n: usize, children: impl Iterator<Item = &'a [usize]>) -> f64 {
    let weighted: f64 = children
        .map(|c| {
            let nk: usize = c.iter().sum();
            if nk == 0 {
                0.0
            } else {
                nk as f64 / n as f64 * entropy_of(c, nk)
            }
        })
        .sum();
    entropy_of(parent, n) - weighted
}

/// Best admissible split: `(feature_index, threshold, gain)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature_index: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    // adjacent floats: keep `hi` on the right-hand side
    if m < hi {
        m
    } else {
        lo
    }
}

struct Trainer<'a> {
    rows: Vec<&'a [f64]>,
    y: Vec<usize>,
    classes: &'a [String],
    params: TreeParams,
    n_features: usize,
}

impl Trainer<'_> {
    /// Class counts over `idx`, compacted to the classes present.
    fn local_classes(&self, idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let present: BTreeSet<usize> = idx.iter().map(|&i| self.y[i]).collect();
        let map: Vec<usize> = present.into_iter().collect();
        let mut counts = vec![0; map.len()];
        for &i in idx {
            counts[map.binary_search(&self.y[i]).unwrap()] += 1;
        }
        (map, counts)
    }

    fn best_split(&self, idx: &[usize]) -> Option<Split> {
        let n = idx.len();
        let (map, parent) = self.local_classes(idx);
        if parent.len() < 2 {
            return None;
        }
        let local: Vec<usize> = idx.iter().map(|&i| map.binary_search(&self.y[i]).unwrap()).collect();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Split> = None;
        let mut order: Vec<usize> = (0..n).collect();

        for f in 0..self.n_features {
            order.sort_by(|&a, &b| self.rows[idx[a]][f].total_cmp(&self.rows[idx[b]][f]));
            let mut left = vec![0usize; parent.len()];
            let mut right = parent.clone();
            for pos in 0..n - 1 {
                let k = local[order[pos]];
                left[k] += 1;
                right[k] -= 1;
                let lo = self.rows[idx[order[pos]]][f];
                let hi = self.rows[idx[order[pos + 1]]][f];
                if !(lo < hi) {
                    continue;
                }
                let nl = pos + 1;
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let gain = gain_of(&parent, n, [left.as_slice(), right.as_slice()].into_iter());
                if best.is_none_or(|b| gain > b.gain + GAIN_TOLERANCE) {
                    best = Some(Split {
                        feature_index: f,
                        threshold: midpoint(lo, hi),
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > GAIN_TOLERANCE)
    }

    fn leaf(&self, idx: &[usize], depth: usize) -> TreeNode {
        let mut counts = vec![0usize; self.classes.len()];
        for &i in idx {
            counts[self.y[i]] += 1;
        }
        // first maximum in sorted class order = smallest label
        let best = counts
            .iter()
            .enumerate()
            .fold(0, |b, (k, &c)| if c > counts[b] { k } else { b });
        TreeNode::Leaf {
            class_counts: counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(k, &c)| (self.classes[k].clone(), c))
                .collect(),
            prediction: self.classes[best].clone(),
            depth,
        }
    }

    fn grow(&self, idx: &[usize], depth: usize) -> TreeNode {
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        let at_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || at_limit || idx.len() < self.params.min_samples_split {
            return self.leaf(idx, depth);
        }
        let Some(split) = self.best_split(idx) else {
            return self.leaf(idx, depth);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][split.feature_index] <= split.threshold);
        TreeNode::Internal {
            feature_index: split.feature_index,
            threshold: split.threshold,
            left: Box::new(self.grow(&l, depth + 1)),
            right: Box::new(self.grow(&r, depth + 1)),
        }
    }
}

fn check_dims(samples: &[Sample]) -> Result<usize, TreeError> {
    let first = samples.first().ok_or(TreeError::NoSamples)?;
    let d = first.features.len();
    for (index, s) in samples.iter().enumerate() {
        if s.features.len() != d {
            return Err(TreeError::InconsistentDimensions {
                index,
                expected: d,
                found: s.features.len(),
            });
        }
    }
    Ok(d)
}

fn sorted_classes(samples: &[Sample]) -> Vec<String> {
    let set: BTreeSet<&str> = samples.iter().map(|s| s.label.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Best split of the whole sample set under `params`' leaf-size rule, or
/// `None` when no admissible threshold has positive gain.
pub fn best_split(samples: &[Sample], params: &TreeParams) -> Result<Option<Split>, TreeError> {
    let n_features = check_dims(samples)?;
    let classes = sorted_classes(samples);
    let trainer = Trainer {
        rows: samples.iter().map(|s| s.features.as_slice()).collect(),
        y: samples
            .iter()
            .map(|s| classes.binary_search(&s.label).unwrap())
            .collect(),
        classes: &classes,
        params: *params,
        n_features,
    };
    let idx: Vec<usize> = (0..samples.len()).collect();
    Ok(trainer.best_split(&idx))
}

impl DecisionTree {
    pub fn fit(samples: &[Sample], params: &TreeParams) -> Result<DecisionTree, TreeError> {
        params.validate()?;
        let n_features = check_dims(samples)?;
        let classes = sorted_classes(samples);
        let trainer = Trainer {
            rows: samples.iter().map(|s| s.features.as_slice()).collect(),
            y: samples
                .iter()
                .map(|s| classes.binary_search(&s.label).unwrap())
                .collect(),
            classes: &classes,
            params: *params,
            n_features,
        };
        let idx: Vec<usize> = (0..samples.len()).collect();
        let root = trainer.grow(&idx, 0);
        Ok(DecisionTree {
            params: *params,
            n_features,
            classes,
            root,
        })
    }

    fn reach(&self, x: &[f64]) -> Result<&TreeNode, TreeError> {
        if x.len() != self.n_features {
            return Err(TreeError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut node = &self.root;
        while let TreeNode::Internal {
            feature_index,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*feature_index] <= *threshold { left } else { right };
        }
        Ok(node)
    }

    /// Predicted label only, without building the confidence map.
    pub fn predict_label(&self, x: &[f64]) -> Result<&str, TreeError> {
        match self.reach(x)? {
            TreeNode::Leaf { prediction, .. } => Ok(prediction),
            TreeNode::Internal { .. } => unreachable!("reach stops at leaves"),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, TreeError> {
        let TreeNode::Leaf {
            class_counts,
            prediction,
            ..
        } = self.reach(x)?
        else {
            unreachable!("reach stops at leaves")
        };
        let total: usize = class_counts.values().sum();
        let per_gesture: BTreeMap<String, f64> = self
            .classes
            .iter()
            .map(|c| {
                let n = class_counts.get(c).copied().unwrap_or(0);
                (c.clone(), n as f64 / total as f64)
            })
            .collect();
        Ok(Prediction {
            label: prediction.clone(),
            confidence: per_gesture[prediction],
            per_gesture,
        })
    }

    /// Confidence per requested gesture, as in a per-gesture matching loop.
    pub fn classify_per_gesture<S: AsRef<str>>(
        &self,
        x: &[f64],
        gestures: &[S],
    ) -> Result<BTreeMap<String, f64>, TreeError> {
        let p = self.predict(x)?;
        gestures
            .iter()
            .map(|g| {
                let g = g.as_ref();
                p.per_gesture
                    .get(g)
                    .map(|&c| (g.to_string(), c))
                    .ok_or_else(|| TreeError::UnknownGesture(g.to_string()))
            })
            .collect()
    }

    /// Depth of the deepest leaf (root alone = 0).
    pub fn depth(&self) -> usize {
        self.root.max_depth()
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.root.leaves(&mut out);
        out
    }

    /// Structural checks for a deserialized model.
    pub fn validate(&self) -> Result<(), TreeError> {
        self.params.validate()?;
        if !self.classes.windows(2).all(|w| w[0] < w[1]) {
            return Err(TreeError::InvalidModel("classes must be sorted and unique".into()));
        }
        fn walk(node: &TreeNode, tree: &DecisionTree) -> Result<(), TreeError> {
            match node {
                TreeNode::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature_index >= tree.n_features || !threshold.is_finite() {
                        return Err(TreeError::InvalidModel(format!(
                            "bad split on feature {feature_index} at {threshold}"
                        )));
                    }
                    walk(left, tree)?;
                    walk(right, tree)
                }
                TreeNode::Leaf {
                    class_counts,
                    prediction,
                    ..
                } => {
                    let known = |c: &String| tree.classes.binary_search(c).is_ok();
                    if class_counts.is_empty()
                        || !class_counts.keys().all(known)
                        || !class_counts.contains_key(prediction)
                    {
                        return Err(TreeError::InvalidModel(format!("bad leaf for '{prediction}'")));
                    }
                    Ok(())
                }
            }
        }
        walk(&self.root, self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DecisionTree, ModelIoError> {
        let tree: DecisionTree = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        tree.validate()?;
        Ok(tree)
    }
}
