//! Optional TOML configuration. Every key mirrors a command-line flag;
//! flags and `CXRTREES_*` variables take precedence over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub labels: LabelsSection,
    pub synthetic: SyntheticSection,
    pub split: SplitSection,
    pub forest: TreeSection,
    pub boost: BoostSection,
    pub grid: GridSection,
    pub stacking: TreeSection,
    pub ensemble: EnsembleSection,
    pub calibrate: CalibrateSection,
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsSection {
    pub names: Option<Vec<String>>,
    pub unmentioned: Option<String>,
    pub lsr_a: Option<f64>,
    pub lsr_b: Option<f64>,
    pub lsr_seed: Option<u64>,
    pub hierarchy: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_samples: Option<usize>,
    pub dim: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub uncertain_fraction: Option<f64>,
    pub latent_dim: Option<usize>,
    pub feature_noise: Option<f64>,
    pub views: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub group_by_patient: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSection {
    pub n_estimators: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub max_features: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostSection {
    pub rounds: Option<usize>,
    pub max_depth: Option<usize>,
    pub learning_rate: Option<f64>,
    pub l2_lambda: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub max_depth: Option<Vec<usize>>,
    pub min_samples_split: Option<Vec<usize>>,
    pub min_samples_leaf: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub strategy: Option<String>,
    pub mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub delta: Option<f64>,
    pub auto_target: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub delta: Option<f64>,
    pub truth_threshold: Option<f64>,
    pub canonical: Option<bool>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))
    }
}

/// Flag (or environment) value, else config value, else default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
