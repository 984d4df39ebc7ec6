//! Randolph's free-marginal multirater kappa.

use std::collections::HashMap;
use std::hash::Hash;

use super::EvalError;
use crate::corpus::{AnnotatedPair, ClaimLabelRecord, COLLAPSED_CATEGORIES};

/// Items x annotators, each cell a category index below `k`. Items may
/// have different numbers of annotators, but at least two each.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementTable {
    rows: Vec<Vec<usize>>,
    k: usize,
}

impl AgreementTable {
    pub fn new(rows: Vec<Vec<usize>>, k: usize) -> Result<Self, EvalError> {
        if k < 2 {
            return Err(EvalError::InvalidConfig(format!("need at least 2 categories, got {k}")));
        }
        if rows.is_empty() {
            return Err(EvalError::Empty("agreement table has no items"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() < 2 {
                return Err(EvalError::TooFewRatings { item: i, ratings: row.len() });
            }
            if let Some(&c) = row.iter().find(|&&c| c >= k) {
                return Err(EvalError::InvalidConfig(format!("item {i}: category {c} >= k={k}")));
            }
        }
        Ok(AgreementTable { rows, k })
    }

    /// Builds a table from arbitrary labels. Categories are numbered in
    /// order of first appearance; `k` is the size of the label vocabulary,
    /// which may exceed the number of labels actually used.
    pub fn from_labels<L: Eq + Hash + Clone>(items: &[Vec<L>], k: usize) -> Result<Self, EvalError> {
        let mut ids: HashMap<L, usize> = HashMap::new();
        let rows = items
            .iter()
            .map(|row| {
                row.iter()
                    .map(|l| {
                        let next = ids.len();
                        *ids.entry(l.clone()).or_insert(next)
                    })
                    .collect()
            })
            .collect();
        if ids.len() > k {
            return Err(EvalError::InvalidConfig(format!("{} distinct labels but k={k}", ids.len())));
        }
        Self::new(rows, k)
    }

    /// Claim-detection labels with Yes and Probably merged.
    pub fn claim_detection(records: &[ClaimLabelRecord]) -> Result<Self, EvalError> {
        let rows = records.iter().map(|r| r.annotator_labels.iter().map(|l| l.collapsed()).collect()).collect();
        Self::new(rows, COLLAPSED_CATEGORIES)
    }

    /// Similarity labels collapsed to very similar / not very similar / N/A.
    pub fn claim_similarity(pairs: &[AnnotatedPair]) -> Result<Self, EvalError> {
        let rows = pairs.iter().map(|p| p.labels.iter().map(|l| l.collapsed()).collect()).collect();
        Self::new(rows, COLLAPSED_CATEGORIES)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn items(&self) -> usize {
        self.rows.len()
    }

    /// Mean over items of the fraction of agreeing annotator pairs.
    pub fn observed_agreement(&self) -> f64 {
        let mut counts = vec![0usize; self.k];
        let total: f64 = self
            .rows
            .iter()
            .map(|row| {
                counts.iter_mut().for_each(|c| *c = 0);
                for &c in row {
                    counts[c] += 1;
                }
                let n = row.len();
                let agreeing: usize = counts.iter().map(|&c| c * c.saturating_sub(1)).sum();
                agreeing as f64 / (n * (n - 1)) as f64
            })
            .sum();
        total / self.rows.len() as f64
    }
}

/// `(P_o - 1/k) / (1 - 1/k)`, in `[-1/(k-1), 1]`.
pub fn randolph_kappa(table: &AgreementTable) -> f64 {
    let chance = 1.0 / table.k as f64;
    (table.observed_agreement() - chance) / (1.0 - chance)
}
