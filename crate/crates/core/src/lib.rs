//! Tree ensembles and ensembling over chest X-ray image embeddings.
//!
//! The crate covers everything downstream of the CNN feature extractor:
//!
//! * [`labels`]: finding registry, label hierarchy, CheXpert-style label CSV
//!   parsing and label-smoothing of uncertain annotations.
//! * [`embedding`]: the `EMB1` embedding file format, label alignment and
//!   train/validation/test splitting.
//! * [`tree`]: CART regression trees, random forests and second-order
//!   gradient boosting, plus hyperparameter grid search.
//! * [`hierarchy`]: conditional training and Bayes-rule propagation of
//!   conditional probabilities through the finding hierarchy.
//! * [`ensemble`]: simple averaging, entropy-weighted averaging and stacking.
//! * [`eval`]: AUROC, ROC curves, threshold calibration with an uncertain
//!   band, and confusion matrices.
//! * [`synthetic`]: hierarchical synthetic datasets with planted structure.

pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod labels;
pub mod predictions;
pub mod rng;
pub mod synthetic;
pub mod tree;

mod binio;

pub use error::{Error, Result};
