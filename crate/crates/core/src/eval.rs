//! AUROC, ROC curves, threshold calibration and banded confusion matrices.

use crate::ensemble::{mean_of_sorted, sorted};
use crate::error::{Error, Result};
use crate::predictions::ScoreMatrix;

fn check_inputs(scores: &[f64], truth: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores vs {} truth values",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig("NaN score".into()));
    }
    if let Some(t) = truth.iter().find(|&&t| t > 1) {
        return Err(Error::InvalidConfig(format!("truth value {t} is not 0 or 1")));
    }
    let pos = truth.iter().filter(|&&t| t == 1).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateTruth {
            label: "<unnamed>".into(),
        });
    }
    Ok((pos, neg))
}

/// Groups of tied scores in ascending order, as (positives, negatives, score).
fn tie_groups(scores: &[f64], truth: &[u8]) -> Vec<(usize, usize, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups: Vec<(usize, usize, f64)> = Vec::new();
    for i in order {
        let s = scores[i];
        match groups.last_mut() {
            Some(g) if g.2 == s => {
                if truth[i] == 1 {
                    g.0 += 1
                } else {
                    g.1 += 1
                }
            }
            _ => groups.push((usize::from(truth[i] == 1), usize::from(truth[i] == 0), s)),
        }
    }
    groups
}

/// Mann-Whitney AUROC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half.
pub fn auroc(scores: &[f64], truth: &[u8]) -> Result<f64> {
    let (p, n) = check_inputs(scores, truth)?;
    // twice the U statistic, kept integral
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    for (gp, gn, _) in tie_groups(scores, truth) {
        twice_u += gp as u128 * (2 * neg_below + gn as u128);
        neg_below += gn as u128;
    }
    Ok(twice_u as f64 / (2.0 * p as f64 * n as f64))
}

/// Unweighted mean of per-label AUROCs.
pub fn mean_auroc(per_label: &[f64]) -> f64 {
    per_label.iter().sum::<f64>() / per_label.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Samples scoring `>= threshold` are called positive.
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// `(0, 0)` at threshold +inf followed by one point per distinct score in
/// decreasing order; the last point is `(1, 1)`.
pub fn roc_curve(scores: &[f64], truth: &[u8]) -> Result<Vec<RocPoint>> {
    let (p, n) = check_inputs(scores, truth)?;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (gp, gn, s) in tie_groups(scores, truth).into_iter().rev() {
        tp += gp;
        fp += gn;
        points.push(RocPoint {
            threshold: s,
            tpr: tp as f64 / p as f64,
            fpr: fp as f64 / n as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}

pub const DEFAULT_BAND_DELTA: f64 = 0.05;

/// Per-label decision thresholds with a shared uncertain half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCalibration {
    pub labels: Vec<String>,
    pub thresholds: Vec<f64>,
    pub delta: f64,
}

/// How the band half-width is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandMode {
    Fixed(f64),
    /// Smallest grid value `0.00, 0.01, ..., 0.25` whose pooled uncertain
    /// fraction on the calibration scores reaches `target`.
    Auto {
        target: f64,
    },
}

impl Default for BandMode {
    fn default() -> Self {
        BandMode::Fixed(DEFAULT_BAND_DELTA)
    }
}

pub fn delta_grid() -> Vec<f64> {
    (0..=25).map(|k| k as f64 / 100.0).collect()
}

/// Thresholds are the mean validation score per label.
pub fn calibrate_threshold(validation: &ScoreMatrix, mode: BandMode) -> Result<ThresholdCalibration> {
    if validation.n_samples() == 0 || validation.n_labels() == 0 {
        return Err(Error::Empty("calibration scores".into()));
    }
    let thresholds: Vec<f64> = (0..validation.n_labels())
        .map(|l| mean_of_sorted(&sorted(validation.column(l))))
        .collect();
    let mut cal = ThresholdCalibration {
        labels: validation.labels.clone(),
        thresholds,
        delta: 0.0,
    };
    cal.delta = match mode {
        BandMode::Fixed(d) if d >= 0.0 => d,
        BandMode::Fixed(d) => return Err(Error::InvalidConfig(format!("band delta {d} is negative"))),
        BandMode::Auto { target } => auto_delta(validation, &cal.thresholds, target),
    };
    Ok(cal)
}

/// Pooled fraction of entries falling in the uncertain band.
pub fn uncertain_fraction(scores: &ScoreMatrix, thresholds: &[f64], delta: f64) -> f64 {
    let mut unc = 0usize;
    for (l, &t) in thresholds.iter().enumerate().take(scores.n_labels()) {
        unc += classify_with_band(&scores.column(l), t, delta)
            .iter()
            .filter(|d| **d == Decision::Uncertain)
            .count();
    }
    unc as f64 / (scores.n_samples() * scores.n_labels()) as f64
}

fn auto_delta(scores: &ScoreMatrix, thresholds: &[f64], target: f64) -> f64 {
    let grid = delta_grid();
    grid.iter()
        .copied()
        .find(|&d| uncertain_fraction(scores, thresholds, d) >= target)
        .unwrap_or(grid[grid.len() - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Positive,
    Negative,
    Uncertain,
}

/// `score > t + delta` is positive, `score < t - delta` negative, anything
/// in between uncertain. With `delta == 0` there is no band and `score == t`
/// is positive.
pub fn classify_with_band(scores: &[f64], threshold: f64, delta: f64) -> Vec<Decision> {
    scores
        .iter()
        .map(|&s| {
            if delta == 0.0 {
                if s >= threshold {
                    Decision::Positive
                } else {
                    Decision::Negative
                }
            } else if s > threshold + delta {
                Decision::Positive
            } else if s < threshold - delta {
                Decision::Negative
            } else {
                Decision::Uncertain
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub uncertain: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_ + self.uncertain
    }
}

pub fn confusion_matrix(decisions: &[Decision], truth: &[u8]) -> Result<ConfusionMatrix> {
    if decisions.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} decisions vs {} truth values",
            decisions.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (d, &t) in decisions.iter().zip(truth) {
        match (d, t == 1) {
            (Decision::Uncertain, _) => cm.uncertain += 1,
            (Decision::Positive, true) => cm.tp += 1,
            (Decision::Positive, false) => cm.fp += 1,
            (Decision::Negative, true) => cm.fn_ += 1,
            (Decision::Negative, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}
