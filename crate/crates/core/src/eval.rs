//! Evaluation protocol: stratified 70/30 split, stratified k-fold
//! cross-validation, hyperparameter grid search and accuracy / macro-F1
//! reporting.
//!
//! Parameters are selected by 10-fold CV inside the training split; the
//! selected tree is then refit on the whole training split and scored on
//! the held-out test split. Both the CV means and the held-out scores are
//! reported.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtree::{DecisionTree, Sample, TreeError, TreeParams};
use crate::features::{sign_features, FeatureConfig, FeatureError};
use crate::hand::{Category, SignDatabase, SignGesture};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("class '{label}' has {count} instance(s); at least 2 are needed")]
    ClassTooSmall { label: String, count: usize },
    #[error("{samples} samples cannot fill {k} folds")]
    TooFewSamples { samples: usize, k: usize },
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("database has no {0} signs")]
    MissingCategory(&'static str),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            stratified: true,
            seed: 7,
        }
    }
}

/// Indices into a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn by_class(data: &[Sample]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in data.iter().enumerate() {
        groups.entry(s.label.as_str()).or_default().push(i);
    }
    groups
}

pub fn select(data: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

/// Per-class shuffled split; each class puts `round(f·n)` (clamped to
/// `1..n`) instances in train.
pub fn stratified_split(data: &[Sample], spec: &SplitSpec) -> Result<Partition, EvalError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvalError::InvalidSplit(format!("train_fraction {}", spec.train_fraction)));
    }
    let groups = by_class(data);
    if let Some((label, idx)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(EvalError::ClassTooSmall {
            label: label.to_string(),
            count: idx.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    if spec.stratified {
        for idx in groups.values() {
            let mut idx = idx.clone();
            idx.shuffle(&mut rng);
            let n = idx.len();
            let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
            train.extend_from_slice(&idx[..n_train]);
            test.extend_from_slice(&idx[n_train..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut rng);
        let n_train = (spec.train_fraction * data.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Partition { train, test })
}

/// Stratified k-fold: each class is shuffled and dealt round-robin across
/// folds, continuing where the previous class stopped, so fold sizes differ
/// by at most one.
pub fn kfold(data: &[Sample], k: usize, seed: u64) -> Result<Vec<Partition>, EvalError> {
    if k < 2 || data.len() < k {
        return Err(EvalError::TooFewSamples { samples: data.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for idx in by_class(data).values() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let mut test = folds[f].clone();
            test.sort_unstable();
            let mut train: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| folds[g].iter().copied()).collect();
            train.sort_unstable();
            Partition { train, test }
        })
        .collect())
}

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let mut labels: Vec<String> = pairs
            .iter()
            .flat_map(|(t, p)| [t.to_string(), p.to_string()])
            .collect();
        labels.sort();
        labels.dedup();
        let mut counts = vec![vec![0; labels.len()]; labels.len()];
        for (t, p) in pairs {
            let i = labels.binary_search_by(|l| l.as_str().cmp(t)).unwrap();
            let j = labels.binary_search_by(|l| l.as_str().cmp(p)).unwrap();
            counts[i][j] += 1;
        }
        Self { labels, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Samples per true class.
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        let mut pairs = Vec::new();
        for m in [&*self, other] {
            for (i, row) in m.counts.iter().enumerate() {
                for (j, &c) in row.iter().enumerate() {
                    pairs.extend(std::iter::repeat_n((m.labels[i].clone(), m.labels[j].clone()), c));
                }
            }
        }
        *self = ConfusionMatrix::from_pairs(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    match cm.total() {
        0 => Err(EvalError::EmptyConfusion),
        n => Ok(cm.trace() as f64 / n as f64),
    }
}

/// Unweighted mean of per-class F1 over every label in the matrix; a class
/// with precision + recall = 0 scores 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    let k = cm.labels.len();
    let f1: f64 = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let predicted: usize = (0..k).map(|r| cm.counts[r][c]).sum();
            let actual: usize = cm.counts[c].iter().sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if actual > 0 { tp / actual as f64 } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    Ok(f1 / k as f64)
}

/// Predicts every sample and tallies the confusion matrix.
pub fn confusion(tree: &DecisionTree, data: &[Sample]) -> Result<ConfusionMatrix, EvalError> {
    let predicted: Vec<&str> = data
        .iter()
        .map(|s| tree.predict_label(&s.features))
        .collect::<Result<_, _>>()?;
    Ok(ConfusionMatrix::from_pairs(
        data.iter().map(|s| s.label.as_str()).zip(predicted),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub train_accuracy: f64,
    pub train_f1: f64,
    pub validation_accuracy: f64,
    pub validation_f1: f64,
}

/// Cross-validated scores of one parameter setting.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub params: TreeParams,
    pub folds: Vec<FoldMetrics>,
    /// Validation predictions pooled over all folds.
    pub confusion: ConfusionMatrix,
}

impl CvResult {
    fn mean(&self, f: impl Fn(&FoldMetrics) -> f64) -> f64 {
        self.folds.iter().map(f).sum::<f64>() / self.folds.len() as f64
    }

    pub fn mean_validation_accuracy(&self) -> f64 {
        self.mean(|m| m.validation_accuracy)
    }
}

pub fn cross_validate(data: &[Sample], folds: &[Partition], params: &TreeParams) -> Result<CvResult, EvalError> {
    let mut metrics = Vec::with_capacity(folds.len());
    let mut pooled: Option<ConfusionMatrix> = None;
    for (fold, part) in folds.iter().enumerate() {
        let train = select(data, &part.train);
        let val = select(data, &part.test);
        let tree = DecisionTree::fit(&train, params)?;
        let cm_train = confusion(&tree, &train)?;
        let cm_val = confusion(&tree, &val)?;
        metrics.push(FoldMetrics {
            fold,
            train_accuracy: accuracy(&cm_train)?,
            train_f1: macro_f1(&cm_train)?,
            validation_accuracy: accuracy(&cm_val)?,
            validation_f1: macro_f1(&cm_val)?,
        });
        match &mut pooled {
            Some(p) => p.merge(&cm_val),
            None => pooled = Some(cm_val),
        }
    }
    Ok(CvResult {
        params: *params,
        folds: metrics,
        confusion: pooled.ok_or(EvalError::EmptyConfusion)?,
    })
}

/// `max_depth × min_samples_split × min_samples_leaf`, skipping settings with
/// a leaf minimum above the split minimum.
pub fn param_grid(depths: &[Option<usize>], splits: &[usize], leaves: &[usize]) -> Vec<TreeParams> {
    let mut grid = Vec::new();
    for &max_depth in depths {
        for &min_samples_split in splits {
            for &min_samples_leaf in leaves {
                let p = TreeParams {
                    max_depth,
                    min_samples_split,
                    min_samples_leaf,
                    ..TreeParams::default()
                };
                if p.validate().is_ok() {
                    grid.push(p);
                }
            }
        }
    }
    grid
}

pub fn default_grid() -> Vec<TreeParams> {
    param_grid(&[Some(6), Some(9), Some(12), None], &[2, 4, 8], &[1, 2, 4])
}

/// Higher validation accuracy first; ties prefer the simpler tree.
fn rank(a: &CvResult, b: &CvResult) -> Ordering {
    let (va, vb) = (a.mean_validation_accuracy(), b.mean_validation_accuracy());
    if (va - vb).abs() > 1e-12 {
        return vb.partial_cmp(&va).unwrap_or(Ordering::Equal);
    }
    let depth = |p: &TreeParams| p.max_depth.unwrap_or(usize::MAX);
    depth(&a.params)
        .cmp(&depth(&b.params))
        .then(b.params.min_samples_leaf.cmp(&a.params.min_samples_leaf))
        .then(b.params.min_samples_split.cmp(&a.params.min_samples_split))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset_name: String,
    pub samples: usize,
    pub classes: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub chosen_params: TreeParams,
    pub folds: Vec<FoldMetrics>,
    /// CV: mean accuracy / F1 on each fold's training part.
    pub mean_train_accuracy: f64,
    pub mean_train_f1: f64,
    /// CV: mean accuracy / F1 on each fold's validation part.
    pub mean_validation_accuracy: f64,
    pub mean_validation_f1: f64,
    /// Held-out test split when one exists, else the CV validation means.
    pub mean_test_accuracy: f64,
    pub mean_test_f1: f64,
    pub test_samples: usize,
    /// Over the samples behind `mean_test_*`.
    pub confusion_matrix: ConfusionMatrix,
}

impl EvaluationReport {
    fn from_cv(name: &str, data_len: usize, classes: usize, seed: u64, grid_size: usize, cv: CvResult) -> Self {
        let mean_validation_f1 = cv.mean(|m| m.validation_f1);
        let mean_validation_accuracy = cv.mean_validation_accuracy();
        EvaluationReport {
            dataset_name: name.to_string(),
            samples: data_len,
            classes,
            seed,
            grid_size,
            chosen_params: cv.params,
            mean_train_accuracy: cv.mean(|m| m.train_accuracy),
            mean_train_f1: cv.mean(|m| m.train_f1),
            mean_validation_accuracy,
            mean_validation_f1,
            mean_test_accuracy: mean_validation_accuracy,
            mean_test_f1: mean_validation_f1,
            test_samples: cv.confusion.total(),
            folds: cv.folds,
            confusion_matrix: cv.confusion,
        }
    }
}

/// Exhaustive k-fold search; grid cells run in parallel and the winner is
/// chosen by a deterministic ranking.
pub fn grid_search(
    data: &[Sample],
    grid: &[TreeParams],
    k: usize,
    seed: u64,
) -> Result<(TreeParams, EvaluationReport), EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let folds = kfold(data, k, seed)?;
    let results: Vec<CvResult> = grid
        .par_iter()
        .map(|p| cross_validate(data, &folds, p))
        .collect::<Result<_, _>>()?;
    let best = results
        .into_iter()
        .min_by(rank)
        .expect("non-empty grid");
    let classes = by_class(data).len();
    let report = EvaluationReport::from_cv("cv", data.len(), classes, seed, grid.len(), best);
    Ok((report.chosen_params, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub folds: usize,
    pub grid: Vec<TreeParams>,
    pub features: FeatureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train_fraction: 0.7,
            folds: 10,
            grid: default_grid(),
            features: FeatureConfig::default(),
        }
    }
}

/// Labelled flat feature vectors, zero-padded to the longest gesture present.
pub fn build_dataset<'a>(
    instances: impl IntoIterator<Item = &'a SignGesture>,
    features: &FeatureConfig,
) -> Result<Vec<Sample>, EvalError> {
    let flats: Vec<(Vec<f64>, &str)> = instances
        .into_iter()
        .map(|g| Ok((sign_features(g, features)?.flat, g.id.as_str())))
        .collect::<Result<_, FeatureError>>()?;
    let width = flats.iter().map(|(f, _)| f.len()).max().unwrap_or(0);
    Ok(flats
        .into_iter()
        .map(|(mut f, label)| {
            f.resize(width, 0.0);
            Sample::new(f, label)
        })
        .collect())
}

/// Split, tune on the training part, refit and score on the held-out part.
pub fn evaluate_dataset(name: &str, data: &[Sample], cfg: &ExperimentConfig) -> Result<EvaluationReport, EvalError> {
    let split = stratified_split(
        data,
        &SplitSpec {
            train_fraction: cfg.train_fraction,
            stratified: true,
            seed: cfg.seed,
        },
    )?;
    let train = select(data, &split.train);
    let test = select(data, &split.test);
    let (params, cv) = grid_search(&train, &cfg.grid, cfg.folds, cfg.seed)?;
    let tree = DecisionTree::fit(&train, &params)?;
    let cm = confusion(&tree, &test)?;
    Ok(EvaluationReport {
        dataset_name: name.to_string(),
        samples: data.len(),
        classes: by_class(data).len(),
        mean_test_accuracy: accuracy(&cm)?,
        mean_test_f1: macro_f1(&cm)?,
        test_samples: cm.total(),
        confusion_matrix: cm,
        ..cv
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub alphabet: EvaluationReport,
    pub all_signs: EvaluationReport,
}

/// Alphabet-only and all-signs experiments over a labelled instance set.
pub fn run_table1_experiment(
    db: &SignDatabase,
    instances: &[SignGesture],
    cfg: &ExperimentConfig,
) -> Result<Table1Report, EvalError> {
    let category = |id: &str| db.get(id).map(|s| s.category);
    if !db.signs.iter().any(|s| s.category == Category::Alphabet) {
        return Err(EvalError::MissingCategory("alphabet"));
    }
    if !db.signs.iter().any(|s| s.category != Category::Alphabet) {
        return Err(EvalError::MissingCategory("word or sentence"));
    }
    let known: Vec<&SignGesture> = instances.iter().filter(|g| category(&g.id).is_some()).collect();
    let alpha: Vec<&SignGesture> = known
        .iter()
        .copied()
        .filter(|g| category(&g.id) == Some(Category::Alphabet))
        .collect();
    let alphabet = evaluate_dataset("Alphabet", &build_dataset(alpha, &cfg.features)?, cfg)?;
    let all_signs = evaluate_dataset("All Signs", &build_dataset(known, &cfg.features)?, cfg)?;
    Ok(Table1Report { alphabet, all_signs })
}

impl Table1Report {
    /// Aligned text table: dataset × metric × (mean train, mean test).
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:<9} {:>10} {:>10} {:>10}", "Dataset", "Metric", "Mean Train", "Mean Test", "CV Valid");
        for r in [&self.alphabet, &self.all_signs] {
            let _ = writeln!(
                out,
                "{:<10} {:<9} {:>10.3} {:>10.3} {:>10.3}",
                r.dataset_name, "Accuracy", r.mean_train_accuracy, r.mean_test_accuracy, r.mean_validation_accuracy
            );
            let _ = writeln!(
                out,
                "{:<10} {:<9} {:>10.3} {:>10.3} {:>10.3}",
                "", "F1-Score", r.mean_train_f1, r.mean_test_f1, r.mean_validation_f1
            );
        }
        out
    }

    pub fn write_fold_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset", "fold", "train_accuracy", "train_f1", "validation_accuracy", "validation_f1"])?;
        for r in [&self.alphabet, &self.all_signs] {
            for m in &r.folds {
                w.write_record([
                    r.dataset_name.clone(),
                    m.fold.to_string(),
                    m.train_accuracy.to_string(),
                    m.train_f1.to_string(),
                    m.validation_accuracy.to_string(),
                    m.validation_f1.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
