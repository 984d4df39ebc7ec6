//! Cosine-threshold classification: confusion metrics over a threshold grid
//! and cross-validated threshold selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cv::{derive_seed, stratified_folds, MeanStd};
use super::EvalError;
use crate::corpus::MajorityLabel;
use crate::matcher::PositiveClass;

/// A pair's cosine similarity and whether it belongs to the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub cosine: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Predict a match when `cosine >= threshold`.
    pub fn at(pairs: &[ScoredPair], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for p in pairs {
            match (p.cosine >= threshold, p.positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// The same counts with the classes swapped.
    pub fn flipped(self) -> Self {
        Confusion { tp: self.tn, fp: self.fn_, tn: self.tp, fn_: self.fp }
    }

    pub fn metrics(self) -> BinaryMetrics {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let total = self.tp + self.fp + self.tn + self.fn_;
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        BinaryMetrics { accuracy: ratio(self.tp + self.tn, total), precision, recall, f1 }
    }
}

/// Undefined ratios (no predicted or no actual positives) are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Labels each `(cosine, majority)` pair under `rule`, dropping pairs whose
/// majority is N/A or that have no majority.
pub fn label_pairs(pairs: &[(f64, MajorityLabel)], rule: PositiveClass) -> Vec<ScoredPair> {
    pairs
        .iter()
        .filter(|(_, m)| !matches!(m, MajorityLabel::NotApplicable | MajorityLabel::NoMajority))
        .map(|&(cosine, m)| ScoredPair { cosine, positive: rule.is_positive(m) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub folds: usize,
    pub repeats: usize,
    /// Grid spacing over `[0, 1]`; must divide 1 evenly.
    pub step: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { folds: 10, repeats: 10, step: 0.01, seed: 13 }
    }
}

pub fn threshold_grid(step: f64) -> Result<Vec<f64>, EvalError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(EvalError::InvalidConfig(format!("grid step {step} outside (0, 1]")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(EvalError::InvalidConfig(format!("grid step {step} does not divide [0, 1]")));
    }
    let n = n as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

/// Index of the F1-maximizing grid threshold on `pairs`. When several
/// thresholds tie, the middle of the first run of maximizers is taken;
/// with no negatives at all the lowest threshold is taken.
pub fn best_threshold_index(pairs: &[ScoredPair], grid: &[f64]) -> usize {
    if pairs.iter().all(|p| p.positive) {
        return 0;
    }
    let f1: Vec<f64> = grid.iter().map(|&t| Confusion::at(pairs, t).metrics().f1).collect();
    let best = f1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = f1.iter().position(|&v| v == best).unwrap();
    let hi = lo + f1[lo..].iter().take_while(|&&v| v == best).count() - 1;
    (lo + hi) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: Vec<f64>,
    /// Metrics of every grid threshold on the full data set.
    pub per_threshold: Vec<BinaryMetrics>,
    /// Held-out F1 of every grid threshold, across all folds of all runs.
    pub heldout_f1_by_threshold: Vec<MeanStd>,
    /// Threshold chosen on the training folds of each fold, in run order.
    pub chosen_thresholds: Vec<f64>,
    /// Held-out F1 at the threshold chosen on the training folds.
    pub heldout_f1: MeanStd,
    /// Most frequently chosen threshold (smallest on ties).
    pub modal_threshold: f64,
}

impl SweepResult {
    /// Grid threshold with the highest mean held-out F1.
    pub fn max_mean_f1(&self) -> (f64, MeanStd) {
        let i = (0..self.grid.len())
            .max_by(|&a, &b| {
                self.heldout_f1_by_threshold[a]
                    .mean
                    .total_cmp(&self.heldout_f1_by_threshold[b].mean)
                    .then(b.cmp(&a))
            })
            .unwrap();
        (self.grid[i], self.heldout_f1_by_threshold[i])
    }
}

/// Repeated stratified k-fold threshold selection: on each fold the
/// threshold maximizing F1 on the other folds is scored on the held-out one.
pub fn f1_sweep(pairs: &[ScoredPair], config: &SweepConfig) -> Result<SweepResult, EvalError> {
    if !pairs.iter().any(|p| p.positive) {
        return Err(EvalError::DegenerateFold("no positive pairs".into()));
    }
    if config.repeats == 0 {
        return Err(EvalError::InvalidConfig("repeats must be at least 1".into()));
    }
    let grid = threshold_grid(config.step)?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.positive).collect();
    let per_threshold = grid.iter().map(|&t| Confusion::at(pairs, t).metrics()).collect();

    let mut by_threshold: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    let mut chosen = Vec::new();
    let mut heldout = Vec::new();
    for run in 0..config.repeats {
        let assignment = stratified_folds(&labels, config.folds, derive_seed(config.seed, run as u64))?;
        for fold in 0..config.folds {
            let mut test = Vec::new();
            let mut train = Vec::new();
            for (p, &f) in pairs.iter().zip(&assignment) {
                if f == fold {
                    test.push(*p);
                } else {
                    train.push(*p);
                }
            }
            let best = best_threshold_index(&train, &grid);
            chosen.push(grid[best]);
            heldout.push(Confusion::at(&test, grid[best]).metrics().f1);
            for (i, &t) in grid.iter().enumerate() {
                by_threshold[i].push(Confusion::at(&test, t).metrics().f1);
            }
        }
    }

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &t in &chosen {
        *counts.entry(grid.iter().position(|&g| g == t).unwrap()).or_default() += 1;
    }
    let modal = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&i, _)| grid[i]).unwrap();

    Ok(SweepResult {
        per_threshold,
        heldout_f1_by_threshold: by_threshold.iter().map(|v| MeanStd::of(v)).collect(),
        chosen_thresholds: chosen,
        heldout_f1: MeanStd::of(&heldout),
        modal_threshold: modal,
        grid,
    })
}
