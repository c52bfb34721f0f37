//! Synthetic hierarchical-label embedding datasets with planted structure.
//!
//! Samples have a latent vector `z ~ N(0, I_k)`. Feature `j` observes latent
//! coordinate `j mod k` plus Gaussian noise of scale `feature_noise`, so any
//! sizeable subset of features carries the whole latent signal. Each label
//! has a random unit direction `u` in latent space and score
//! `u . z + noise_sigma * eps`. A root label is positive when its score is
//! positive; a child label when its parent is positive and its own score is
//! positive. With `latent_dim == dim` and `feature_noise == 0` the features
//! are the latent vector itself.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding::{AlignedDataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::labels::{apply_lsr, validate_hierarchy, AnnotationValue, LabelHierarchy, LsrConfig, RawAnnotation};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub dim: usize,
    pub label_names: Vec<String>,
    /// Indexed like `label_names`.
    pub hierarchy: LabelHierarchy,
    pub noise_sigma: f64,
    pub uncertain_fraction: f64,
    pub latent_dim: usize,
    pub feature_noise: f64,
    pub lsr: LsrConfig,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_samples: usize, dim: usize, label_names: Vec<String>, hierarchy: LabelHierarchy, seed: u64) -> Self {
        SyntheticSpec {
            n_samples,
            dim,
            label_names,
            hierarchy,
            noise_sigma: 0.5,
            uncertain_fraction: 0.05,
            latent_dim: dim.min(8),
            feature_noise: 0.5,
            lsr: LsrConfig {
                seed,
                ..LsrConfig::default()
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.label_names.len();
        let problems = [
            (self.n_samples == 0, "n_samples must be positive"),
            (l == 0, "at least one label is required"),
            (self.dim < l, "dim must be at least the number of labels"),
            (
                self.latent_dim == 0 || self.latent_dim > self.dim,
                "latent_dim must be in 1..=dim",
            ),
            (
                !(0.0..=1.0).contains(&self.uncertain_fraction),
                "uncertain_fraction must be in [0, 1]",
            ),
            (
                !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()),
                "noise_sigma must be >= 0",
            ),
            (
                !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()),
                "feature_noise must be >= 0",
            ),
            (
                self.hierarchy.n_labels() != l,
                "hierarchy size must match the label count",
            ),
        ];
        if let Some((_, msg)) = problems.iter().find(|(bad, _)| *bad) {
            return Err(Error::InvalidConfig(format!("synthetic spec: {msg}")));
        }
        validate_hierarchy(&self.hierarchy)?;
        self.lsr.validate()
    }

    /// Planted direction of label `l`, a unit vector in latent space.
    pub fn direction(&self, l: usize) -> Vec<f64> {
        let mut rng = rng::stream(self.seed, Domain::Synthetic, &[1, l as u64]);
        loop {
            let v: Vec<f64> = (0..self.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    /// A feature-space weight vector `w` with `w . x == u . z` when
    /// `feature_noise` is zero.
    pub fn feature_direction(&self, l: usize) -> Vec<f64> {
        let u = self.direction(l);
        let k = self.latent_dim;
        let copies: Vec<usize> = (0..k).map(|c| (0..self.dim).filter(|j| j % k == c).count()).collect();
        (0..self.dim).map(|j| u[j % k] / copies[j % k] as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: AlignedDataset,
    pub annotations: Vec<RawAnnotation>,
    /// Hard truth before uncertainty relabeling, samples x labels.
    pub truth: Vec<u8>,
    /// Noise-free planted scores `u . z`, samples x labels.
    pub planted_scores: Vec<f64>,
    pub n_labels: usize,
}

impl SyntheticData {
    pub fn truth_column(&self, l: usize) -> Vec<u8> {
        self.truth.iter().skip(l).step_by(self.n_labels).copied().collect()
    }

    pub fn planted_column(&self, l: usize) -> Vec<f64> {
        self.planted_scores
            .iter()
            .skip(l)
            .step_by(self.n_labels)
            .copied()
            .collect()
    }
}

/// Generates the dataset; the result depends only on `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n, dim, k) = (spec.n_samples, spec.dim, spec.latent_dim);
    let n_labels = spec.label_names.len();
    let directions: Vec<Vec<f64>> = (0..n_labels).map(|l| spec.direction(l)).collect();
    let order = spec.hierarchy.topological_order();

    let mut data = Vec::with_capacity(n * dim);
    let mut truth = vec![0u8; n * n_labels];
    let mut planted = vec![0.0; n * n_labels];
    let mut annotations = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream(spec.seed, Domain::Synthetic, &[0, i as u64]);
        let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        for j in 0..dim {
            let eps: f64 = rng.sample(StandardNormal);
            data.push((z[j % k] + spec.feature_noise * eps) as f32);
        }
        let row = &mut truth[i * n_labels..(i + 1) * n_labels];
        for &l in &order {
            let s: f64 = directions[l].iter().zip(&z).map(|(a, b)| a * b).sum();
            planted[i * n_labels + l] = s;
            let eta: f64 = rng.sample(StandardNormal);
            let own = s + spec.noise_sigma * eta > 0.0;
            row[l] = u8::from(own && spec.hierarchy.parent(l).is_none_or(|p| row[p] == 1));
        }
        let values = (0..n_labels)
            .map(|l| {
                let u: f64 = rng.random();
                if u < spec.uncertain_fraction {
                    AnnotationValue::Uncertain
                } else if row[l] == 1 {
                    AnnotationValue::Positive
                } else {
                    AnnotationValue::Negative
                }
            })
            .collect();
        annotations.push(RawAnnotation {
            sample_id: format!("synthetic/patient{:05}/study1/view1_frontal.jpg", i),
            values,
        });
    }
    let ids: Vec<String> = annotations.iter().map(|a| a.sample_id.clone()).collect();
    let embeddings = EmbeddingMatrix::new(ids, dim, data, "synthetic")?;
    let labels = apply_lsr(&annotations, &spec.label_names, &spec.lsr)?;
    Ok(SyntheticData {
        dataset: AlignedDataset::new(embeddings, labels)?,
        annotations,
        truth,
        planted_scores: planted,
        n_labels,
    })
}
