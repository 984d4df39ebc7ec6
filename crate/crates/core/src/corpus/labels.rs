//! Annotation label vocabularies for the two annotation tasks.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Pairwise claim similarity as judged by one annotator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SimilarityLabel {
    #[serde(rename = "very_similar", alias = "VerySimilar", alias = "vs")]
    VerySimilar,
    #[serde(rename = "somewhat_similar", alias = "SomewhatSimilar", alias = "ss")]
    SomewhatSimilar,
    #[serde(rename = "somewhat_dissimilar", alias = "SomewhatDissimilar", alias = "sd")]
    SomewhatDissimilar,
    #[serde(rename = "very_dissimilar", alias = "VeryDissimilar", alias = "vd")]
    VeryDissimilar,
    #[serde(rename = "na", alias = "NA", alias = "n/a")]
    NotApplicable,
}

impl SimilarityLabel {
    pub const ALL: [SimilarityLabel; 5] = [
        SimilarityLabel::VerySimilar,
        SimilarityLabel::SomewhatSimilar,
        SimilarityLabel::SomewhatDissimilar,
        SimilarityLabel::VeryDissimilar,
        SimilarityLabel::NotApplicable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityLabel::VerySimilar => "very_similar",
            SimilarityLabel::SomewhatSimilar => "somewhat_similar",
            SimilarityLabel::SomewhatDissimilar => "somewhat_dissimilar",
            SimilarityLabel::VeryDissimilar => "very_dissimilar",
            SimilarityLabel::NotApplicable => "na",
        }
    }
}

impl fmt::Display for SimilarityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| CorpusError::UnknownLabel(s.to_string()))
    }
}

/// Label held by a strict majority of a pair's annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorityLabel {
    VerySimilar,
    SomewhatSimilar,
    SomewhatDissimilar,
    VeryDissimilar,
    #[serde(rename = "na")]
    NotApplicable,
    NoMajority,
}

impl MajorityLabel {
    pub const ALL: [MajorityLabel; 6] = [
        MajorityLabel::VerySimilar,
        MajorityLabel::SomewhatSimilar,
        MajorityLabel::SomewhatDissimilar,
        MajorityLabel::VeryDissimilar,
        MajorityLabel::NotApplicable,
        MajorityLabel::NoMajority,
    ];

    pub fn short(self) -> &'static str {
        match self {
            MajorityLabel::VerySimilar => "VS",
            MajorityLabel::SomewhatSimilar => "SS",
            MajorityLabel::SomewhatDissimilar => "SD",
            MajorityLabel::VeryDissimilar => "VD",
            MajorityLabel::NotApplicable => "NA",
            MajorityLabel::NoMajority => "NM",
        }
    }
}

impl From<SimilarityLabel> for MajorityLabel {
    fn from(l: SimilarityLabel) -> Self {
        match l {
            SimilarityLabel::VerySimilar => MajorityLabel::VerySimilar,
            SimilarityLabel::SomewhatSimilar => MajorityLabel::SomewhatSimilar,
            SimilarityLabel::SomewhatDissimilar => MajorityLabel::SomewhatDissimilar,
            SimilarityLabel::VeryDissimilar => MajorityLabel::VeryDissimilar,
            SimilarityLabel::NotApplicable => MajorityLabel::NotApplicable,
        }
    }
}

/// The label chosen by more than half of the annotators, or `NoMajority`.
pub fn majority_label(labels: &[SimilarityLabel]) -> Result<MajorityLabel, CorpusError> {
    if labels.is_empty() {
        return Err(CorpusError::NoLabels);
    }
    let mut counts: HashMap<SimilarityLabel, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .find(|&(_, c)| 2 * c > labels.len())
        .map(|(l, _)| l.into())
        .unwrap_or(MajorityLabel::NoMajority))
}

/// Whether a message contains a claim, as judged by one annotator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClaimLabel {
    #[serde(rename = "yes", alias = "Yes")]
    Yes,
    #[serde(rename = "probably", alias = "Probably")]
    Probably,
    #[serde(rename = "no", alias = "No")]
    No,
    #[serde(rename = "wrong_language", alias = "WrongLanguage", alias = "incorrect_language")]
    WrongLanguage,
}

impl ClaimLabel {
    /// Collapsed category used for agreement: Yes/Probably, No, wrong language.
    pub fn collapsed(self) -> usize {
        match self {
            ClaimLabel::Yes | ClaimLabel::Probably => 0,
            ClaimLabel::No => 1,
            ClaimLabel::WrongLanguage => 2,
        }
    }
}

impl SimilarityLabel {
    /// Collapsed category used for agreement: very similar, not very similar, N/A.
    pub fn collapsed(self) -> usize {
        match self {
            SimilarityLabel::VerySimilar => 0,
            SimilarityLabel::SomewhatSimilar
            | SimilarityLabel::SomewhatDissimilar
            | SimilarityLabel::VeryDissimilar => 1,
            SimilarityLabel::NotApplicable => 2,
        }
    }
}

/// Number of categories after either task's collapsing rule.
pub const COLLAPSED_CATEGORIES: usize = 3;

#[cfg(test)]
mod tests {
    use super::SimilarityLabel::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_of_three() {
        assert_eq!(
            majority_label(&[VerySimilar, VerySimilar, SomewhatDissimilar]).unwrap(),
            MajorityLabel::VerySimilar
        );
        assert_eq!(
            majority_label(&[NotApplicable, NotApplicable, VerySimilar]).unwrap(),
            MajorityLabel::NotApplicable
        );
    }

    #[test]
    fn no_majority() {
        assert_eq!(
            majority_label(&[VerySimilar, SomewhatSimilar, SomewhatDissimilar]).unwrap(),
            MajorityLabel::NoMajority
        );
        // a tie is not a strict majority
        assert_eq!(
            majority_label(&[VerySimilar, VerySimilar, VeryDissimilar, VeryDissimilar]).unwrap(),
            MajorityLabel::NoMajority
        );
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(majority_label(&[]), Err(CorpusError::NoLabels)));
    }

    #[test]
    fn label_parsing_aliases() {
        assert_eq!("vs".parse::<SimilarityLabel>().unwrap(), VerySimilar);
        assert_eq!("VeryDissimilar".parse::<SimilarityLabel>().unwrap(), VeryDissimilar);
        assert_eq!("n/a".parse::<SimilarityLabel>().unwrap(), NotApplicable);
        assert!("maybe".parse::<SimilarityLabel>().is_err());
    }

    fn any_label() -> impl Strategy<Value = SimilarityLabel> {
        prop::sample::select(SimilarityLabel::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn majority_is_permutation_invariant(
            labels in prop::collection::vec(any_label(), 1..8),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = labels.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(majority_label(&labels).unwrap(), majority_label(&shuffled).unwrap());
        }
    }
}
