//! Conditional training over the finding hierarchy and conversion of
//! conditional probabilities `P(label | ancestors positive)` into
//! unconditional ones by multiplying along the ancestor chain.

use crate::embedding::{AlignedDataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::labels::{filter_conditional_subset, validate_hierarchy, LabelHierarchy, LabelRegistry};
use crate::predictions::ScoreMatrix;
use crate::tree::{self, BoostHyperparams, ForestHyperparams, Hyperparams, TreeEnsembleModel};

/// Factors below this switch the chain product to log space.
pub const LOG_SPACE_BELOW: f64 = 1e-12;

/// Parent of each column within a prediction row, or `None` for roots.
pub type ColumnParents = Vec<Option<usize>>;

/// Maps a hierarchy over registry ids onto the columns of `labels`. Every
/// ancestor of a present label must be present as well.
pub fn column_parents(labels: &[String], h: &LabelHierarchy, registry: &LabelRegistry) -> Result<ColumnParents> {
    let ids = labels
        .iter()
        .map(|n| registry.id(n).ok_or_else(|| Error::UnknownLabel(n.clone())))
        .collect::<Result<Vec<_>>>()?;
    ids.iter()
        .map(|&id| match h.parent(id) {
            None => Ok(None),
            Some(p) => ids.iter().position(|&x| x == p).map(Some).ok_or_else(|| {
                Error::UnknownLabel(format!(
                    "`{}` (parent of `{}`) has no predictions",
                    registry.name(p),
                    registry.name(id)
                ))
            }),
        })
        .collect()
}

fn depth_order(parents: &[Option<usize>]) -> Vec<usize> {
    let depth = |mut i: usize| {
        let mut d = 0;
        while let Some(p) = parents[i] {
            d += 1;
            i = p;
        }
        d
    };
    let mut order: Vec<(usize, usize)> = (0..parents.len()).map(|i| (depth(i), i)).collect();
    order.sort_unstable();
    order.into_iter().map(|(_, i)| i).collect()
}

/// Unconditional probabilities for one row. Each value is the product of
/// its own conditional output and those of all its ancestors, accumulated
/// from the root down so that a child never exceeds its parent.
pub fn propagate_row(cond: &[f64], parents: &[Option<usize>]) -> Vec<f64> {
    let mut out = vec![0.0; cond.len()];
    for l in depth_order(parents) {
        out[l] = match parents[l] {
            None => cond[l],
            Some(p) => {
                let mut chain = vec![cond[l]];
                let mut cur = Some(p);
                while let Some(a) = cur {
                    chain.push(cond[a]);
                    cur = parents[a];
                }
                if chain.iter().any(|&f| f < LOG_SPACE_BELOW) {
                    chain.iter().map(|f| f.ln()).sum::<f64>().exp().min(out[p]).min(cond[l])
                } else {
                    out[p] * cond[l]
                }
            }
        };
    }
    out
}

/// Applies [`propagate_row`] to every sample. Roots are unchanged.
pub fn propagate_to_unconditional(
    cond: &ScoreMatrix,
    h: &LabelHierarchy,
    registry: &LabelRegistry,
) -> Result<ScoreMatrix> {
    validate_hierarchy(h)?;
    let parents = column_parents(&cond.labels, h, registry)?;
    let mut values = Vec::with_capacity(cond.values().len());
    for i in 0..cond.n_samples() {
        values.extend(propagate_row(cond.row(i), &parents));
    }
    ScoreMatrix::new(
        cond.classifier.clone(),
        cond.sample_ids.clone(),
        cond.labels.clone(),
        values,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelFamily {
    Forest(ForestHyperparams),
    Boosted(BoostHyperparams),
}

fn train_family(ds: &AlignedDataset, labels: &[usize], family: &ModelFamily) -> Result<TreeEnsembleModel> {
    match family {
        ModelFamily::Forest(hp) => tree::train_random_forest(ds, labels, hp),
        ModelFamily::Boosted(hp) => tree::train_gradient_boosting(ds, labels, hp),
    }
}

/// Models from the two-step protocol. Labels with a parent are trained on
/// the conditional subset; parentless labels on all data.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPipeline {
    /// Parentless labels, full training set.
    pub root_model: Option<TreeEnsembleModel>,
    /// Labels with a parent, conditional subset only.
    pub child_model: Option<TreeEnsembleModel>,
    /// Dataset label indices covered, ascending.
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    /// Parent of each entry of `labels`, as a position in `labels`.
    pub parents: ColumnParents,
    pub conditional_subset_size: usize,
}

/// Trains conditional models for `labels` (dataset column indices) and all
/// their ancestors. `h` is indexed by dataset column.
pub fn train_conditional_tree_pipeline(
    ds: &AlignedDataset,
    h: &LabelHierarchy,
    labels: &[usize],
    family: &ModelFamily,
) -> Result<ConditionalPipeline> {
    validate_hierarchy(h)?;
    if h.n_labels() != ds.labels().n_labels() {
        return Err(Error::LengthMismatch(format!(
            "hierarchy covers {} labels, dataset has {}",
            h.n_labels(),
            ds.labels().n_labels()
        )));
    }
    let mut all: Vec<usize> = labels.to_vec();
    for &l in labels {
        all.extend(h.ancestors(l));
    }
    all.sort_unstable();
    all.dedup();

    let roots: Vec<usize> = all.iter().copied().filter(|&l| h.parent(l).is_none()).collect();
    let children: Vec<usize> = all.iter().copied().filter(|&l| h.parent(l).is_some()).collect();

    let subset = filter_conditional_subset(ds.labels(), h);
    if subset.is_empty() && !children.is_empty() {
        return Err(Error::Empty("conditional training subset".into()));
    }
    let root_model = if roots.is_empty() {
        None
    } else {
        Some(train_family(ds, &roots, family)?)
    };
    let child_model = if children.is_empty() {
        None
    } else {
        Some(train_family(&ds.subset(&subset), &children, family)?)
    };
    let parents = all
        .iter()
        .map(|&l| {
            h.parent(l)
                .map(|p| all.iter().position(|&x| x == p).expect("ancestors included"))
        })
        .collect();
    Ok(ConditionalPipeline {
        root_model,
        child_model,
        label_names: all.iter().map(|&l| ds.labels().labels[l].clone()).collect(),
        labels: all,
        parents,
        conditional_subset_size: subset.len(),
    })
}

impl ConditionalPipeline {
    /// Both models as one, labels in `self.labels` order. Its outputs are
    /// conditional probabilities.
    pub fn merged_model(&self) -> Result<TreeEnsembleModel> {
        let models: Vec<&TreeEnsembleModel> = self.root_model.iter().chain(self.child_model.iter()).collect();
        let first = models
            .first()
            .ok_or_else(|| Error::Empty("pipeline has no models".into()))?;
        let mut labels = Vec::with_capacity(self.label_names.len());
        for name in &self.label_names {
            let found = models
                .iter()
                .flat_map(|m| m.labels.iter())
                .find(|l| &l.name == name)
                .ok_or_else(|| Error::UnknownLabel(name.clone()))?;
            labels.push(found.clone());
        }
        Ok(TreeEnsembleModel {
            hyperparams: first.hyperparams,
            dim: first.dim,
            labels,
        })
    }

    pub fn predict_conditional(&self, embeddings: &EmbeddingMatrix) -> Result<ScoreMatrix> {
        tree::predict(&self.merged_model()?, embeddings)
    }

    /// Composed predictor: conditional outputs propagated down the chain.
    pub fn predict(&self, embeddings: &EmbeddingMatrix) -> Result<ScoreMatrix> {
        let cond = self.predict_conditional(embeddings)?;
        let mut values = Vec::with_capacity(cond.values().len());
        for i in 0..cond.n_samples() {
            values.extend(propagate_row(cond.row(i), &self.parents));
        }
        ScoreMatrix::new(cond.classifier, cond.sample_ids, cond.labels, values)
    }

    pub fn hyperparams(&self) -> Option<Hyperparams> {
        self.root_model
            .as_ref()
            .or(self.child_model.as_ref())
            .map(|m| m.hyperparams)
    }
}
