//! Retrieval metrics, threshold sweeps, cross-validation and annotator
//! agreement.

mod cv;
mod ir;
mod kappa;
pub mod report;
mod sweep;

pub use cv::{derive_seed, stratified_folds, MeanStd};
pub use ir::{has_positive_at_k, mfr, mrr, RankedQueryResult};
pub use kappa::{randolph_kappa, AgreementTable};
pub use report::{EvalRecord, EvalReport, TableKind};
pub use sweep::{
    best_threshold_index, f1_sweep, label_pairs, threshold_grid, BinaryMetrics, Confusion, ScoredPair, SweepConfig,
    SweepResult,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate fold: {0}")]
    DegenerateFold(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("query `{0}` has no relevant candidate in its ranking and no cap was given")]
    MissingRelevant(String),
    #[error("item {item} has {ratings} rating(s); at least 2 are required")]
    TooFewRatings { item: usize, ratings: usize },
}
