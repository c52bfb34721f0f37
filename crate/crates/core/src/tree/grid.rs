use std::cmp::Ordering;

use super::{predict, train_random_forest, ForestHyperparams};
use crate::embedding::AlignedDataset;
use crate::error::{Error, Result};
use crate::eval::auroc;

/// Candidate values for the three searched forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGrid {
    pub max_depth: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for ParamGrid {
    /// The values that occur in the reference forest configurations.
    fn default() -> Self {
        ParamGrid {
            max_depth: vec![5, 15, 30],
            min_samples_split: vec![2, 10, 50],
            min_samples_leaf: vec![1, 10],
        }
    }
}

impl ParamGrid {
    pub fn points(&self, base: &ForestHyperparams) -> Vec<ForestHyperparams> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depth {
            for &min_samples_split in &self.min_samples_split {
                for &min_samples_leaf in &self.min_samples_leaf {
                    out.push(ForestHyperparams {
                        max_depth,
                        min_samples_split,
                        min_samples_leaf,
                        ..*base
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub hyperparams: ForestHyperparams,
    /// Mean validation AUROC over labels with both classes present.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub table: Vec<GridPoint>,
}

/// Higher score wins; ties go to the simpler model (smaller depth, then
/// larger leaf size, then larger split size).
fn better(a: &GridPoint, b: &GridPoint) -> bool {
    match a.score.partial_cmp(&b.score) {
        Some(Ordering::Greater) => return true,
        Some(Ordering::Less) => return false,
        _ => {}
    }
    let (x, y) = (&a.hyperparams, &b.hyperparams);
    (y.max_depth, x.min_samples_leaf, x.min_samples_split) > (x.max_depth, y.min_samples_leaf, y.min_samples_split)
}

pub(crate) fn mean_auroc(
    scores: &crate::predictions::ScoreMatrix,
    truth: &AlignedDataset,
    labels: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for (k, &l) in labels.iter().enumerate() {
        let t = truth.labels().binarized_column(l, 0.5);
        match auroc(&scores.column(k), &t) {
            Ok(a) => {
                total += a;
                counted += 1;
            }
            Err(Error::DegenerateTruth { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if counted == 0 {
        return Err(Error::DegenerateTruth {
            label: "all selected labels".into(),
        });
    }
    Ok(total / counted as f64)
}

/// Exhaustive search over `grid`, other settings taken from `base`.
pub fn grid_search(
    train: &AlignedDataset,
    validation: &AlignedDataset,
    labels: &[usize],
    base: &ForestHyperparams,
    grid: &ParamGrid,
) -> Result<GridSearchResult> {
    let points = grid.points(base);
    if points.is_empty() {
        return Err(Error::Empty("hyperparameter grid".into()));
    }
    let mut table = Vec::with_capacity(points.len());
    for hp in points {
        let model = train_random_forest(train, labels, &hp)?;
        let scores = predict(&model, validation.embeddings())?;
        table.push(GridPoint {
            hyperparams: hp,
            score: mean_auroc(&scores, validation, labels)?,
        });
    }
    let mut best = table[0].clone();
    for p in &table[1..] {
        if better(p, &best) {
            best = p.clone();
        }
    }
    Ok(GridSearchResult { best, table })
}
