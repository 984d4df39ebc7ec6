//! Discrete AdaBoost over decision stumps.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{LabeledPair, MatchError, PairFeatures};
use crate::corpus::Corpus;
use crate::embedding::EmbeddingStore;
use crate::eval::{derive_seed, stratified_folds, Confusion, MeanStd};

/// Weighted errors are clamped away from zero so `alpha` stays finite.
const MIN_ERROR: f64 = 1e-10;

/// Predicts `polarity` when `x[feature] > threshold`, `-polarity` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub alpha: f64,
}

impl Stump {
    pub fn vote(&self, x: &[f64]) -> f64 {
        let p = self.polarity as f64;
        if x[self.feature] > self.threshold {
            p
        } else {
            -p
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostConfig {
    pub rounds: usize,
}

impl Default for AdaBoostConfig {
    fn default() -> Self {
        AdaBoostConfig { rounds: 100 }
    }
}

/// Per-round training diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainingRound {
    pub weighted_error: f64,
    pub alpha: f64,
    /// Product of the normalizers so far; bounds the training error.
    pub bound: f64,
    pub training_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    /// Configured number of rounds; `stumps` may be shorter after an early stop.
    pub rounds: usize,
    pub feature_dim: usize,
    pub stumps: Vec<Stump>,
}

impl AdaBoostModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.stumps.iter().map(|s| s.alpha * s.vote(x)).sum()
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.score(x) > 0.0
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "adaboost rounds={} dim={} stumps={}", self.rounds, self.feature_dim, self.stumps.len())?;
        for s in &self.stumps {
            writeln!(w, "{} {} {} {}", s.feature, s.threshold, s.polarity, s.alpha)?;
        }
        w.flush()
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, MatchError> {
        let bad = |m: String| MatchError::ModelFormat(m);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("adaboost") {
            return Err(bad(format!("bad header `{header}`")));
        }
        let mut get = |key: &str| -> Result<usize, MatchError> {
            fields
                .next()
                .and_then(|f| f.strip_prefix(key))
                .and_then(|f| f.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("header missing `{key}`")))
        };
        let (rounds, feature_dim, count) = (get("rounds")?, get("dim")?, get("stumps")?);
        let mut stumps = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = (|| {
                if f.len() != 4 {
                    return None;
                }
                Some(Stump {
                    feature: f[0].parse().ok()?,
                    threshold: f[1].parse().ok()?,
                    polarity: f[2].parse().ok().filter(|p: &i8| p.abs() == 1)?,
                    alpha: f[3].parse().ok().filter(|a: &f64| a.is_finite())?,
                })
            })();
            let s = parsed.ok_or_else(|| bad(format!("line {}: bad stump `{line}`", i + 2)))?;
            if s.feature >= feature_dim {
                return Err(bad(format!("line {}: feature {} >= dim {feature_dim}", i + 2, s.feature)));
            }
            stumps.push(s);
        }
        if stumps.len() != count {
            return Err(bad(format!("header says {count} stumps, found {}", stumps.len())));
        }
        Ok(AdaBoostModel { rounds, feature_dim, stumps })
    }
}

struct Presorted {
    /// Per feature, sample indices by ascending value.
    order: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(x: &[Vec<f64>], dim: usize) -> Self {
        let order = (0..dim)
            .map(|j| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize][j].total_cmp(&x[b as usize][j]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }
}

/// Stump with the lowest weighted error; the first one found wins ties.
fn best_stump(x: &[Vec<f64>], y: &[bool], w: &[f64], sorted: &Presorted) -> (Stump, f64) {
    let total: f64 = w.iter().sum();
    let neg_total: f64 = y.iter().zip(w).filter(|(&l, _)| !l).map(|(_, &wi)| wi).sum();
    let mut best = (Stump { feature: 0, threshold: f64::NEG_INFINITY, polarity: 1, alpha: 0.0 }, f64::INFINITY);
    for (j, order) in sorted.order.iter().enumerate() {
        let first = x[order[0] as usize][j];
        // threshold below every value: polarity +1 calls everything positive
        let mut err = neg_total;
        let consider = |err: f64, threshold: f64, best: &mut (Stump, f64)| {
            for (polarity, e) in [(1i8, err), (-1i8, total - err)] {
                if e < best.1 {
                    *best = (Stump { feature: j, threshold, polarity, alpha: 0.0 }, e);
                }
            }
        };
        consider(err, first - 1.0, &mut best);
        let n = order.len();
        let mut i = 0;
        while i < n {
            let v = x[order[i] as usize][j];
            while i < n && x[order[i] as usize][j] == v {
                let s = order[i] as usize;
                if y[s] {
                    err += w[s];
                } else {
                    err -= w[s];
                }
                i += 1;
            }
            if i < n {
                let next = x[order[i] as usize][j];
                let mid = v + (next - v) / 2.0;
                consider(err, if mid < next { mid } else { v }, &mut best);
            }
        }
    }
    best
}

/// Trains up to `config.rounds` stumps, stopping early once a stump is no
/// better than chance or classifies the weighted sample perfectly.
pub fn adaboost_train(
    x: &[Vec<f64>],
    y: &[bool],
    config: &AdaBoostConfig,
) -> Result<(AdaBoostModel, Vec<TrainingRound>), MatchError> {
    if config.rounds == 0 {
        return Err(MatchError::EmptyEnsemble);
    }
    if x.len() != y.len() {
        return Err(MatchError::InvalidConfig(format!("{} feature rows for {} labels", x.len(), y.len())));
    }
    if !y.iter().any(|&l| l) || y.iter().all(|&l| l) {
        return Err(MatchError::SingleClass);
    }
    let dim = x[0].len();
    if let Some(i) = x.iter().position(|r| r.len() != dim) {
        return Err(MatchError::InvalidConfig(format!("row {i} has {} features, expected {dim}", x[i].len())));
    }
    if dim == 0 || (0..dim).all(|j| x.iter().all(|r| r[j] == x[0][j])) {
        return Err(MatchError::DegenerateFeatures("every feature is constant across the training set".into()));
    }

    let n = x.len();
    let sorted = Presorted::new(x, dim);
    let mut w = vec![1.0 / n as f64; n];
    let mut scores = vec![0.0; n];
    let mut stumps = Vec::new();
    let mut trace = Vec::new();
    let mut bound = 1.0;
    for _ in 0..config.rounds {
        let (mut stump, raw_err) = best_stump(x, y, &w, &sorted);
        let eps = raw_err.max(MIN_ERROR);
        if eps >= 0.5 {
            break;
        }
        stump.alpha = 0.5 * ((1.0 - eps) / eps).ln();
        let mut z = 0.0;
        for i in 0..n {
            let h = stump.vote(&x[i]);
            let yi = if y[i] { 1.0 } else { -1.0 };
            w[i] *= (-stump.alpha * yi * h).exp();
            z += w[i];
            scores[i] += stump.alpha * h;
        }
        w.iter_mut().for_each(|wi| *wi /= z);
        bound *= 2.0 * (eps * (1.0 - eps)).sqrt();
        let wrong = (0..n).filter(|&i| (scores[i] > 0.0) != y[i]).count();
        trace.push(TrainingRound {
            weighted_error: eps,
            alpha: stump.alpha,
            bound,
            training_error: wrong as f64 / n as f64,
        });
        stumps.push(stump);
        if raw_err <= MIN_ERROR {
            break;
        }
    }
    if stumps.is_empty() {
        return Err(MatchError::DegenerateFeatures("no stump does better than chance".into()));
    }
    Ok((AdaBoostModel { rounds: config.rounds, feature_dim: dim, stumps }, trace))
}

/// Feature rows and labels for labelled pairs.
pub fn featurize(
    pairs: &[LabeledPair],
    corpus: &Corpus,
    store: &EmbeddingStore,
) -> Result<(Vec<Vec<f64>>, Vec<bool>), MatchError> {
    let lookup = |id: &str| -> Result<_, MatchError> {
        let text = corpus.get(id).map(|m| m.text.as_str());
        let emb = store.get(id);
        text.zip(emb).ok_or_else(|| MatchError::MissingItem(id.to_string()))
    };
    let mut x = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (ta, ea) = lookup(&p.id_a)?;
        let (tb, eb) = lookup(&p.id_b)?;
        x.push(PairFeatures::new(ta, tb, ea, eb)?.to_vec());
    }
    Ok((x, pairs.iter().map(|p| p.positive).collect()))
}

/// Cross-validated accuracy and per-class F1, over all folds of all repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub accuracy: MeanStd,
    pub f1_pos: MeanStd,
    pub f1_neg: MeanStd,
}

pub fn adaboost_eval_cv(
    x: &[Vec<f64>],
    y: &[bool],
    folds: usize,
    repeats: usize,
    config: &AdaBoostConfig,
    seed: u64,
) -> Result<CvReport, MatchError> {
    if repeats == 0 {
        return Err(MatchError::InvalidConfig("repeats must be at least 1".into()));
    }
    let (mut acc, mut f1p, mut f1n) = (Vec::new(), Vec::new(), Vec::new());
    for run in 0..repeats {
        let assignment = stratified_folds(y, folds, derive_seed(seed, run as u64))?;
        for fold in 0..folds {
            let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..x.len() {
                if assignment[i] == fold {
                    vx.push(x[i].clone());
                    vy.push(y[i]);
                } else {
                    tx.push(x[i].clone());
                    ty.push(y[i]);
                }
            }
            let (model, _) = adaboost_train(&tx, &ty, config)?;
            let pred: Vec<bool> = vx.iter().map(|r| model.predict(r)).collect();
            let c = Confusion::from_predictions(&pred, &vy);
            acc.push(c.metrics().accuracy);
            f1p.push(c.metrics().f1);
            f1n.push(c.flipped().metrics().f1);
        }
    }
    Ok(CvReport { accuracy: MeanStd::of(&acc), f1_pos: MeanStd::of(&f1p), f1_neg: MeanStd::of(&f1n) })
}
