//! Random forests and gradient-boosted trees, one set of trees per finding.

mod cart;
mod format;
mod grid;

use rand::Rng;
use rayon::prelude::*;

use crate::embedding::{AlignedDataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::predictions::ScoreMatrix;
use crate::rng::{self, Domain};

pub use cart::{Node, Tree};
pub use format::{read_model_file, write_model_file, TEM_MAGIC};
pub use grid::{grid_search, GridPoint, GridSearchResult, ParamGrid};

use cart::{GrowLimits, NewtonGrower, RegressionGrower};

/// Log-odds clamp used for base scores.
pub const PROB_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, dim: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((dim as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => dim,
            MaxFeatures::Fixed(k) => k.clamp(1, dim.max(1)),
        }
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" => Ok(MaxFeatures::All),
            k => k
                .parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .map(MaxFeatures::Fixed)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "max_features must be sqrt, all or a positive integer, got `{k}`"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestHyperparams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for ForestHyperparams {
    /// 200 trees of depth 15, split 2, leaf 10, sqrt features.
    fn default() -> Self {
        ForestHyperparams {
            n_estimators: 200,
            max_depth: 15,
            min_samples_split: 2,
            min_samples_leaf: 10,
            max_features: MaxFeatures::Sqrt,
            seed: 0,
        }
    }
}

impl ForestHyperparams {
    /// Meta-learner settings used for stacking.
    pub fn stacking_default() -> Self {
        ForestHyperparams {
            n_estimators: 1400,
            max_depth: 30,
            min_samples_split: 5,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_estimators >= 1
            && self.min_samples_split >= 2
            && self.min_samples_leaf >= 1
            && self.max_depth >= 1
            && !matches!(self.max_features, MaxFeatures::Fixed(0));
        ok.then_some(()).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "forest hyperparameters out of range: {self:?} (need n_estimators >= 1, \
                 min_samples_split >= 2, min_samples_leaf >= 1, max_depth >= 1)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostHyperparams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for BoostHyperparams {
    fn default() -> Self {
        BoostHyperparams {
            rounds: 50,
            max_depth: 3,
            learning_rate: 0.1,
            l2_lambda: 1.0,
            seed: 0,
        }
    }
}

impl BoostHyperparams {
    /// `learning_rate == 0` is accepted so the base score can be inspected.
    pub fn validate(&self) -> Result<()> {
        let ok = self.rounds >= 1
            && self.max_depth >= 1
            && (0.0..=1.0).contains(&self.learning_rate)
            && self.l2_lambda >= 0.0
            && self.l2_lambda.is_finite();
        ok.then_some(()).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "boosting hyperparameters out of range: {self:?} (need rounds >= 1, max_depth >= 1, \
                 learning_rate in [0, 1], l2_lambda >= 0)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyperparams {
    Forest(ForestHyperparams),
    Boosted(BoostHyperparams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Forest,
    Boosted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrees {
    pub name: String,
    /// Log-odds offset; zero and unused for forests.
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl LabelTrees {
    fn predict_row(&self, kind: ModelKind, row: &[f32]) -> f64 {
        match kind {
            ModelKind::Forest => {
                if self.trees.is_empty() {
                    return 0.0;
                }
                let mut outs: Vec<f64> = self.trees.iter().map(|t| t.predict_row(row)).collect();
                // order-free mean: sorting makes the sum independent of tree order
                outs.sort_unstable_by(f64::total_cmp);
                let mean = outs.iter().sum::<f64>() / outs.len() as f64;
                mean.clamp(0.0, 1.0)
            }
            ModelKind::Boosted => {
                let margin = self.base_score + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>();
                sigmoid(margin)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsembleModel {
    pub hyperparams: Hyperparams,
    pub dim: usize,
    pub labels: Vec<LabelTrees>,
}

impl TreeEnsembleModel {
    pub fn kind(&self) -> ModelKind {
        match self.hyperparams {
            Hyperparams::Forest(_) => ModelKind::Forest,
            Hyperparams::Boosted(_) => ModelKind::Boosted,
        }
    }

    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    pub fn predict_row(&self, row: &[f32]) -> Vec<f64> {
        let kind = self.kind();
        self.labels.iter().map(|l| l.predict_row(kind, row)).collect()
    }

    /// Probability for one label on one row.
    pub fn predict_label_row(&self, label: usize, row: &[f32]) -> f64 {
        self.labels[label].predict_row(self.kind(), row)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

fn check_training_input(train: &AlignedDataset, labels: &[usize]) -> Result<()> {
    if train.n_samples() == 0 {
        return Err(Error::Empty("training set".into()));
    }
    let n_labels = train.labels().n_labels();
    if let Some(&l) = labels.iter().find(|&&l| l >= n_labels) {
        return Err(Error::UnknownLabel(format!("label index {l}")));
    }
    if labels.is_empty() {
        return Err(Error::Empty("label selection".into()));
    }
    Ok(())
}

/// Rows drawn with replacement for tree `tree` of label `label`; this is the
/// first use of that tree's random stream.
pub fn bootstrap_sample(seed: u64, label: usize, tree: usize, n: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, Domain::Forest, &[label as u64, tree as u64]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Trains one forest per selected label (indices into the dataset's label
/// columns). Trees are grown in parallel on the current rayon pool; each
/// tree's randomness is keyed by (seed, label, tree), so the model does not
/// depend on the thread count.
pub fn train_random_forest(
    train: &AlignedDataset,
    labels: &[usize],
    hp: &ForestHyperparams,
) -> Result<TreeEnsembleModel> {
    hp.validate()?;
    check_training_input(train, labels)?;
    let x = train.embeddings();
    let n = x.n_samples();
    let limits = GrowLimits {
        max_depth: hp.max_depth,
        min_samples_split: hp.min_samples_split,
        min_samples_leaf: hp.min_samples_leaf,
    };
    let mtry = hp.max_features.resolve(x.dim);
    let columns: Vec<Vec<f64>> = labels.iter().map(|&l| train.labels().column(l)).collect();

    let jobs: Vec<(usize, usize)> = (0..labels.len())
        .flat_map(|k| (0..hp.n_estimators).map(move |t| (k, t)))
        .collect();
    let trees: Vec<Tree> = jobs
        .par_iter()
        .map(|&(k, t)| {
            let label = labels[k];
            let mut rng = rng::stream(hp.seed, Domain::Forest, &[label as u64, t as u64]);
            let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            RegressionGrower::new(x, &columns[k], limits, mtry).grow(&mut idx, &mut rng)
        })
        .collect();

    let mut trees = trees.into_iter();
    let label_models = labels
        .iter()
        .map(|&l| LabelTrees {
            name: train.labels().labels[l].clone(),
            base_score: 0.0,
            trees: trees.by_ref().take(hp.n_estimators).collect(),
        })
        .collect();
    Ok(TreeEnsembleModel {
        hyperparams: Hyperparams::Forest(*hp),
        dim: x.dim,
        labels: label_models,
    })
}

/// Second-order boosting of logistic loss on soft targets, one booster per
/// selected label. Labels are trained in parallel; rounds are sequential.
pub fn train_gradient_boosting(
    train: &AlignedDataset,
    labels: &[usize],
    hp: &BoostHyperparams,
) -> Result<TreeEnsembleModel> {
    hp.validate()?;
    check_training_input(train, labels)?;
    let x = train.embeddings();
    let label_models = labels
        .par_iter()
        .map(|&l| {
            let y = train.labels().column(l);
            boost_one_label(x, &y, hp, train.labels().labels[l].clone())
        })
        .collect();
    Ok(TreeEnsembleModel {
        hyperparams: Hyperparams::Boosted(*hp),
        dim: x.dim,
        labels: label_models,
    })
}

fn boost_one_label(x: &EmbeddingMatrix, y: &[f64], hp: &BoostHyperparams, name: String) -> LabelTrees {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let base_score = logit(mean);
    let mut margin = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(hp.rounds);
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..hp.rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        idx.clear();
        idx.extend(0..n);
        let tree = NewtonGrower::new(x, &grad, &hess, hp.max_depth, hp.l2_lambda, hp.learning_rate).grow(&mut idx);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }
    LabelTrees {
        name,
        base_score,
        trees,
    }
}

/// Per-sample, per-label probabilities in input row order.
pub fn predict(model: &TreeEnsembleModel, embeddings: &EmbeddingMatrix) -> Result<ScoreMatrix> {
    if embeddings.dim != model.dim {
        return Err(Error::DimMismatch {
            expected: model.dim,
            actual: embeddings.dim,
        });
    }
    let rows: Vec<Vec<f64>> = (0..embeddings.n_samples())
        .into_par_iter()
        .map(|i| model.predict_row(embeddings.row(i)))
        .collect();
    ScoreMatrix::new(
        embeddings.source_model.clone(),
        embeddings.sample_ids.clone(),
        model.label_names(),
        rows.concat(),
    )
}
