//! BM25 retrieval with embedding rerank, cosine-threshold and AdaBoost pair
//! classifiers, and the auto-match / review / new-claim policy.

mod adaboost;
mod balance;
mod features;
mod rank;

pub use adaboost::{
    adaboost_eval_cv, adaboost_train, featurize, AdaBoostConfig, AdaBoostModel, CvReport, Stump, TrainingRound,
};
pub use balance::{build_balanced_pairs, LabeledPair};
pub use features::PairFeatures;
pub use rank::{embedding_only, rank_candidates, rerank, RankedCandidate, Ranking};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MajorityLabel;
use crate::embedding::{EmbeddingError, ProviderError};
use crate::eval::EvalError;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("language `{0}` has positive pairs but no negatives")]
    NoNegatives(String),
    #[error("no positive pairs")]
    NoPositives,
    #[error("ensemble must have at least one round")]
    EmptyEnsemble,
    #[error("training data has a single class")]
    SingleClass,
    #[error("degenerate features: {0}")]
    DegenerateFeatures(String),
    #[error("no text or embedding for `{0}`")]
    MissingItem(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Retrieval depth and the two policy thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub depth: usize,
    /// Name of the reranking provider, for reports.
    #[serde(default)]
    pub provider: Option<String>,
    pub auto_match_threshold: f64,
    pub suggest_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { depth: 50, provider: None, auto_match_threshold: 0.95, suggest_threshold: 0.90 }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if self.depth == 0 {
            return Err(MatchError::InvalidConfig("retrieval depth must be at least 1".into()));
        }
        let (s, a) = (self.suggest_threshold, self.auto_match_threshold);
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&a) || s > a {
            return Err(MatchError::InvalidConfig(format!(
                "need 0 <= suggest ({s}) <= auto-match ({a}) <= 1"
            )));
        }
        Ok(())
    }

    /// Policy band for the best candidate's cosine.
    pub fn decide(&self, best_cosine: Option<f64>) -> Decision {
        match best_cosine {
            Some(c) if c >= self.auto_match_threshold => Decision::AutoMatched,
            Some(c) if c >= self.suggest_threshold => Decision::Suggested,
            _ => Decision::NewClaim,
        }
    }

    /// Whether `cosine` falls in the review band `[suggest, auto)`.
    pub fn in_review_band(&self, cosine: f64) -> bool {
        cosine >= self.suggest_threshold && cosine < self.auto_match_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AutoMatched,
    Suggested,
    NewClaim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    NoMatch,
}

/// Match iff `cosine >= tau`.
pub fn classify_threshold(cosine: f64, tau: f64) -> Verdict {
    if cosine >= tau {
        Verdict::Match
    } else {
        Verdict::NoMatch
    }
}

/// Which majority labels count as a match.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveClass {
    #[default]
    VerySimilar,
    VeryOrSomewhatSimilar,
}

impl PositiveClass {
    pub fn is_positive(self, m: MajorityLabel) -> bool {
        match self {
            PositiveClass::VerySimilar => m == MajorityLabel::VerySimilar,
            PositiveClass::VeryOrSomewhatSimilar => {
                matches!(m, MajorityLabel::VerySimilar | MajorityLabel::SomewhatSimilar)
            }
        }
    }

    /// A labelled non-match: neither positive nor N/A nor without majority.
    pub fn is_negative(self, m: MajorityLabel) -> bool {
        !self.is_positive(m) && !matches!(m, MajorityLabel::NotApplicable | MajorityLabel::NoMajority)
    }
}

impl fmt::Display for PositiveClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PositiveClass::VerySimilar => "vs",
            PositiveClass::VeryOrSomewhatSimilar => "vs+ss",
        })
    }
}

impl FromStr for PositiveClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vs" | "very_similar" => Ok(PositiveClass::VerySimilar),
            "vs+ss" | "vs_ss" | "very_or_somewhat_similar" => Ok(PositiveClass::VeryOrSomewhatSimilar),
            other => Err(format!("unknown positive class `{other}` (expected vs or vs+ss)")),
        }
    }
}
