use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One query's ranked candidates and the ids known to match it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedQueryResult {
    pub query_id: String,
    pub ranked: Vec<String>,
    pub relevant: HashSet<String>,
}

impl RankedQueryResult {
    pub fn new<I, J, S, T>(query_id: impl Into<String>, ranked: I, relevant: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        RankedQueryResult {
            query_id: query_id.into(),
            ranked: ranked.into_iter().map(Into::into).collect(),
            relevant: relevant.into_iter().map(Into::into).collect(),
        }
    }

    /// 1-based rank of the first relevant candidate.
    pub fn first_relevant_rank(&self) -> Option<usize> {
        self.ranked.iter().position(|id| self.relevant.contains(id)).map(|p| p + 1)
    }
}

/// Mean reciprocal rank; a query with no relevant candidate in its ranking
/// contributes 0.
pub fn mrr(results: &[RankedQueryResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results
        .iter()
        .map(|r| r.first_relevant_rank().map_or(0.0, |k| 1.0 / k as f64))
        .sum::<f64>()
        / results.len() as f64
}

/// Mean rank of the first relevant candidate. Queries whose relevant items
/// were not retrieved count as rank `cap`; without a cap they are an error.
pub fn mfr(results: &[RankedQueryResult], cap: Option<usize>) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty("no queries"));
    }
    let mut total = 0.0;
    for r in results {
        total += match (r.first_relevant_rank(), cap) {
            (Some(k), _) => k as f64,
            (None, Some(c)) => c as f64,
            (None, None) => return Err(EvalError::MissingRelevant(r.query_id.clone())),
        };
    }
    Ok(total / results.len() as f64)
}

/// Fraction of queries with a relevant candidate within the top `k`.
pub fn has_positive_at_k(results: &[RankedQueryResult], k: usize) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results
        .iter()
        .filter(|r| r.first_relevant_rank().is_some_and(|rank| rank <= k))
        .count() as f64
        / results.len() as f64
}
