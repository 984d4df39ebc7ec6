use crate::embedding::{cosine, EmbeddingError, EmbeddingVector};

/// Pair classifier inputs. Lengths count unicode scalar values.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub len_a: usize,
    pub len_b: usize,
    pub len_diff: usize,
    pub emb_a: EmbeddingVector,
    pub emb_b: EmbeddingVector,
    pub cosine: f64,
}

impl PairFeatures {
    pub fn new(text_a: &str, text_b: &str, emb_a: &EmbeddingVector, emb_b: &EmbeddingVector) -> Result<Self, EmbeddingError> {
        let c = cosine(emb_a, emb_b)?;
        let (len_a, len_b) = (text_a.chars().count(), text_b.chars().count());
        Ok(PairFeatures {
            len_a,
            len_b,
            len_diff: len_a.abs_diff(len_b),
            emb_a: emb_a.clone(),
            emb_b: emb_b.clone(),
            cosine: c as f64,
        })
    }

    /// Number of features for embeddings of dimension `dim`.
    pub fn width(dim: usize) -> usize {
        2 * dim + 4
    }

    /// `[len_a, len_b, len_diff, emb_a.., emb_b.., cosine]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::width(self.emb_a.dim()));
        v.extend([self.len_a as f64, self.len_b as f64, self.len_diff as f64]);
        v.extend(self.emb_a.as_slice().iter().map(|&x| x as f64));
        v.extend(self.emb_b.as_slice().iter().map(|&x| x as f64));
        v.push(self.cosine);
        v
    }

    pub fn swapped(&self) -> Self {
        PairFeatures {
            len_a: self.len_b,
            len_b: self.len_a,
            len_diff: self.len_diff,
            emb_a: self.emb_b.clone(),
            emb_b: self.emb_a.clone(),
            cosine: self.cosine,
        }
    }
}
