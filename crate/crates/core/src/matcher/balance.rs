use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MatchError, PositiveClass};
use crate::corpus::AnnotatedPair;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub id_a: String,
    pub id_b: String,
    pub language: String,
    pub positive: bool,
}

impl LabeledPair {
    fn from_annotated(p: &AnnotatedPair, positive: bool) -> Self {
        LabeledPair { id_a: p.id_a.clone(), id_b: p.id_b.clone(), language: p.language.clone(), positive }
    }
}

/// Every positive pair plus, for each, one negative drawn from the same
/// language. Negatives are drawn without replacement and only reused once a
/// language's pool is exhausted. Languages are processed in sorted order so
/// a seed fixes the whole selection.
pub fn build_balanced_pairs(
    annotated: &[AnnotatedPair],
    rule: PositiveClass,
    seed: u64,
) -> Result<Vec<LabeledPair>, MatchError> {
    let mut by_lang: BTreeMap<&str, (Vec<&AnnotatedPair>, Vec<&AnnotatedPair>)> = BTreeMap::new();
    for p in annotated {
        let entry = by_lang.entry(p.language.as_str()).or_default();
        if rule.is_positive(p.majority) {
            entry.0.push(p);
        } else if rule.is_negative(p.majority) {
            entry.1.push(p);
        }
    }
    if by_lang.values().all(|(pos, _)| pos.is_empty()) {
        return Err(MatchError::NoPositives);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (lang, (pos, neg)) in by_lang {
        if pos.is_empty() {
            continue;
        }
        if neg.is_empty() {
            return Err(MatchError::NoNegatives(lang.to_string()));
        }
        let mut pool = neg.clone();
        let mut drawn = Vec::with_capacity(pos.len());
        while drawn.len() < pos.len() {
            pool.shuffle(&mut rng);
            drawn.extend(pool.iter().take(pos.len() - drawn.len()).copied());
        }
        out.extend(pos.iter().map(|p| LabeledPair::from_annotated(p, true)));
        out.extend(drawn.iter().map(|p| LabeledPair::from_annotated(p, false)));
    }
    Ok(out)
}
