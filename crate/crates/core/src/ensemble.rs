//! Combining classifiers: simple averaging, entropy-weighted averaging and
//! stacking with a forest meta-learner.
//!
//! Both averaging strategies sum each label's column in sorted order and
//! anchor the mean at the column minimum. That makes the result independent
//! of classifier order bit for bit, and returns a repeated value exactly.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{put_string, Reader};
use crate::embedding::{AlignedDataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::labels::SoftLabelMatrix;
use crate::predictions::{PredictionSet, ScoreMatrix};
use crate::tree::{self, ForestHyperparams, TreeEnsembleModel};

/// Entropy inputs are clamped to `[ENTROPY_EPS, 1 - ENTROPY_EPS]`.
pub const ENTROPY_EPS: f64 = 1e-12;
/// Below this total weight a label falls back to the simple average.
pub const MIN_TOTAL_WEIGHT: f64 = 1e-12;

/// N classifiers x L labels for one input sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub classifier_names: Vec<String>,
    pub labels: Vec<String>,
    values: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(classifier_names: Vec<String>, labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if classifier_names.is_empty() || labels.is_empty() {
            return Err(Error::Empty("prediction matrix".into()));
        }
        if values.len() != classifier_names.len() * labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} values for {} classifiers x {} labels",
                values.len(),
                classifier_names.len(),
                labels.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!("probability {v} outside [0, 1]")));
        }
        Ok(PredictionMatrix {
            classifier_names,
            labels,
            values,
        })
    }

    pub(crate) fn from_parts(classifier_names: Vec<String>, labels: Vec<String>, values: Vec<f64>) -> Self {
        PredictionMatrix {
            classifier_names,
            labels,
            values,
        }
    }

    pub fn n_classifiers(&self) -> usize {
        self.classifier_names.len()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, classifier: usize, label: usize) -> f64 {
        self.values[classifier * self.labels.len() + label]
    }

    pub fn column(&self, label: usize) -> Vec<f64> {
        (0..self.n_classifiers()).map(|k| self.get(k, label)).collect()
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.classifier_names.is_empty() || self.labels.is_empty() {
            Err(Error::Empty("prediction matrix".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
    /// Labels where entropy weighting fell back to the simple average.
    pub fallback: Vec<bool>,
}

pub(crate) fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub(crate) fn mean_of_sorted(col: &[f64]) -> f64 {
    let lo = col[0];
    let hi = col[col.len() - 1];
    let spread: f64 = col.iter().map(|&p| p - lo).sum();
    (lo + spread / col.len() as f64).clamp(lo, hi)
}

/// Arithmetic mean of each label's column.
pub fn simple_average(p: &PredictionMatrix) -> Result<EnsembleOutput> {
    p.check_nonempty()?;
    let values = (0..p.n_labels())
        .map(|l| mean_of_sorted(&sorted(p.column(l))))
        .collect();
    Ok(EnsembleOutput {
        labels: p.labels.clone(),
        values,
        fallback: vec![false; p.n_labels()],
    })
}

/// Bernoulli entropy in bits, with `0 log 0 = 0`.
pub fn bernoulli_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("probability {p} outside [0, 1]")));
    }
    let term = |q: f64| if q == 0.0 { 0.0 } else { -q * q.log2() };
    Ok(term(p) + term(1.0 - p))
}

fn confidence(p: f64) -> f64 {
    let q = p.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
    1.0 - (-q * q.log2() - (1.0 - q) * (1.0 - q).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightingMode {
    /// Weighted mean with weights `1 - H(p)`; stays in `[0, 1]`.
    #[default]
    Normalized,
    /// `sum_k (1 - H(p_k)) p_k` without normalization.
    PaperLiteral,
}

impl std::str::FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "paper-literal" | "paper_literal" => Ok(Self::PaperLiteral),
            other => Err(Error::InvalidConfig(format!("unknown weighting mode `{other}`"))),
        }
    }
}

/// Weights each classifier's prediction by its confidence `1 - H(p)`.
pub fn entropy_weighted_average(p: &PredictionMatrix, mode: WeightingMode) -> Result<EnsembleOutput> {
    p.check_nonempty()?;
    let mut values = Vec::with_capacity(p.n_labels());
    let mut fallback = Vec::with_capacity(p.n_labels());
    for l in 0..p.n_labels() {
        let col = sorted(p.column(l));
        match mode {
            WeightingMode::PaperLiteral => {
                values.push(col.iter().map(|&q| confidence(q) * q).sum());
                fallback.push(false);
            }
            WeightingMode::Normalized => {
                let weights: Vec<f64> = col.iter().map(|&q| confidence(q)).collect();
                let total: f64 = weights.iter().sum();
                if total < MIN_TOTAL_WEIGHT {
                    values.push(mean_of_sorted(&col));
                    fallback.push(true);
                    continue;
                }
                let lo = col[0];
                let hi = col[col.len() - 1];
                let spread: f64 = col.iter().zip(&weights).map(|(&q, &w)| w * (q - lo)).sum();
                values.push((lo + spread / total).clamp(lo, hi));
                fallback.push(false);
            }
        }
    }
    Ok(EnsembleOutput {
        labels: p.labels.clone(),
        values,
        fallback,
    })
}

/// Which combination rule to apply across a whole prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Simple,
    Entropy(WeightingMode),
}

/// Applies an averaging strategy sample by sample. Returns the combined
/// scores and the number of (sample, label) entries that fell back to the
/// simple average.
pub fn combine_set(set: &PredictionSet, strategy: Strategy, name: &str) -> Result<(ScoreMatrix, usize)> {
    let mut values = Vec::with_capacity(set.n_samples() * set.labels.len());
    let mut fallbacks = 0usize;
    for i in 0..set.n_samples() {
        let m = set.sample_matrix(i);
        let out = match strategy {
            Strategy::Simple => simple_average(&m)?,
            Strategy::Entropy(mode) => entropy_weighted_average(&m, mode)?,
        };
        fallbacks += out.fallback.iter().filter(|&&f| f).count();
        values.extend(out.values);
    }
    // paper-literal sums reach up to N; dividing by N keeps them in [0, 1]
    // without changing any per-label ranking
    if let Strategy::Entropy(WeightingMode::PaperLiteral) = strategy {
        let n = set.classifiers.len() as f64;
        for v in &mut values {
            *v = (*v / n).min(1.0);
        }
    }
    let m = ScoreMatrix::new(name.to_string(), set.sample_ids.clone(), set.labels.clone(), values)?;
    Ok((m, fallbacks))
}

/// Base classifier layout plus one forest meta-learner per label whose
/// features are the base classifiers' outputs for that label.
#[derive(Debug, Clone, PartialEq)]
pub struct StackingModel {
    pub classifier_names: Vec<String>,
    pub labels: Vec<String>,
    pub meta: Vec<TreeEnsembleModel>,
}

/// Meta features for one label: row j holds `(z_j1, ..., z_jT)`.
pub fn meta_design_matrix(base: &PredictionSet, label: usize) -> Result<EmbeddingMatrix> {
    let t = base.classifiers.len();
    let mut data = Vec::with_capacity(base.n_samples() * t);
    for j in 0..base.n_samples() {
        data.extend(base.classifiers.iter().map(|c| c.get(j, label) as f32));
    }
    EmbeddingMatrix::new(base.sample_ids.clone(), t, data, "stacking")
}

/// Trains the meta-learners on held-out base predictions. The caller must
/// ensure these samples were not used to train the base classifiers.
pub fn stack_train(
    base: &PredictionSet,
    targets: &SoftLabelMatrix,
    meta_hp: &ForestHyperparams,
) -> Result<StackingModel> {
    if base.n_samples() == 0 {
        return Err(Error::Empty("meta training set".into()));
    }
    let pos: HashMap<&str, usize> = targets
        .sample_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let rows = base
        .sample_ids
        .iter()
        .map(|id| {
            pos.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::LengthMismatch(format!("no target for meta sample `{id}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let aligned_targets = targets.select_rows(&rows);

    let mut meta = Vec::with_capacity(base.labels.len());
    for (l, name) in base.labels.iter().enumerate() {
        let tl = aligned_targets
            .label_index(name)
            .ok_or_else(|| Error::UnknownLabel(name.clone()))?;
        let y = SoftLabelMatrix::new(base.sample_ids.clone(), vec![name.clone()], aligned_targets.column(tl))?;
        let ds = AlignedDataset::new(meta_design_matrix(base, l)?, y)?;
        meta.push(tree::train_random_forest(&ds, &[0], meta_hp)?);
    }
    Ok(StackingModel {
        classifier_names: base.classifier_names(),
        labels: base.labels.clone(),
        meta,
    })
}

impl StackingModel {
    /// Row of `p` for each trained classifier, matched by name.
    fn layout(&self, names: &[String]) -> Result<Vec<usize>> {
        if names.len() != self.classifier_names.len() {
            return Err(Error::ClassifierMismatch(format!(
                "model expects {} classifiers, got {}",
                self.classifier_names.len(),
                names.len()
            )));
        }
        self.classifier_names
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::ClassifierMismatch(format!("missing classifier `{n}`")))
            })
            .collect()
    }

    fn label_layout(&self, labels: &[String]) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .map(|n| {
                labels
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::UnknownLabel(n.clone()))
            })
            .collect()
    }
}

/// Applies the meta-learners to one sample's prediction matrix.
pub fn stack_predict(model: &StackingModel, p: &PredictionMatrix) -> Result<EnsembleOutput> {
    p.check_nonempty()?;
    let rows = model.layout(&p.classifier_names)?;
    let cols = model.label_layout(&p.labels)?;
    let mut values = Vec::with_capacity(model.labels.len());
    for (l, meta) in model.meta.iter().enumerate() {
        let features: Vec<f32> = rows.iter().map(|&k| p.get(k, cols[l]) as f32).collect();
        values.push(meta.predict_label_row(0, &features));
    }
    Ok(EnsembleOutput {
        labels: model.labels.clone(),
        values,
        fallback: vec![false; model.labels.len()],
    })
}

pub fn stack_predict_set(model: &StackingModel, set: &PredictionSet, name: &str) -> Result<ScoreMatrix> {
    let mut values = Vec::with_capacity(set.n_samples() * model.labels.len());
    for i in 0..set.n_samples() {
        values.extend(stack_predict(model, &set.sample_matrix(i))?.values);
    }
    ScoreMatrix::new(name.to_string(), set.sample_ids.clone(), model.labels.clone(), values)
}

const STK_MAGIC: [u8; 4] = *b"STK1";

impl StackingModel {
    /// `STK1`, u16 classifier count and names, u16 label count and names,
    /// then one embedded `TEM1` model per label.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| Error::io("<stacking model>", e);
        w.write_all(&STK_MAGIC).map_err(io)?;
        for names in [&self.classifier_names, &self.labels] {
            let n = u16::try_from(names.len()).map_err(|_| Error::InvalidConfig("too many names".into()))?;
            w.write_all(&n.to_le_bytes()).map_err(io)?;
            for s in names.iter() {
                put_string(w, s).map_err(io)?;
            }
        }
        for m in &self.meta {
            m.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader::new(r, "stacking model");
        let magic = r.bytes::<4>("magic")?;
        if magic != STK_MAGIC {
            return Err(Error::BadMagic {
                expected: STK_MAGIC,
                found: magic,
            });
        }
        let mut lists = Vec::new();
        for what in ["classifier", "label"] {
            let n = r.u16(what)? as usize;
            lists.push((0..n).map(|_| r.string(what)).collect::<Result<Vec<_>>>()?);
        }
        let labels = lists.pop().unwrap_or_default();
        let classifier_names = lists.pop().unwrap_or_default();
        let raw = r.rest()?;
        let mut cursor = raw.as_slice();
        let mut meta = Vec::with_capacity(labels.len());
        for _ in 0..labels.len() {
            meta.push(TreeEnsembleModel::read_embedded(&mut cursor)?);
        }
        if !cursor.is_empty() {
            return Err(Error::Malformed("stacking model: trailing bytes".into()));
        }
        Ok(StackingModel {
            classifier_names,
            labels,
            meta,
        })
    }
}

pub fn write_stacking_file(model: &StackingModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    model.write_to(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_stacking_file(path: impl AsRef<Path>) -> Result<StackingModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    StackingModel::read_from(BufReader::new(file))
}
