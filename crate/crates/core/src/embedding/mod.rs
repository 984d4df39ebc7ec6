//! Embedding vectors, cosine similarity and exact nearest-neighbour search.
//!
//! Every similarity in the crate goes through [`cosine`]; cached-norm
//! variants compute the same expression so results are bit-identical.

mod encoder;
mod file;
mod provider;
mod remote;

use std::cmp::Ordering;

use thiserror::Error;

use crate::scalar::Scalar;

pub use encoder::{fnv1a_seeded, HashedNGramEncoder, OutputMode, SparseFeatures, ToyProvider};
pub use file::{read_embeddings, write_embeddings, EmbeddingFile, FileProvider};
pub use provider::{embed_batch, EmbedInput, EmbeddingProvider, EmbeddingStore, ProviderError};
pub use remote::RemoteProvider;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("embedding must have at least one component")]
    Empty,
    #[error("component {index} is not finite")]
    NonFinite { index: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// A fixed-dimension real vector with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T = f32> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { index });
        }
        Ok(EmbeddingVector { values })
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector { values: vec![T::zero(); dim.max(1)] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<T> {
        self.values
    }

    pub fn norm(&self) -> T {
        norm(&self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    /// Unit-length copy; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n.is_zero() {
            return self.clone();
        }
        EmbeddingVector { values: self.values.iter().map(|&v| v / n).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingVector<U> {
        EmbeddingVector { values: self.values.iter().map(|v| U::of(v.as_f64())).collect() }
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine from precomputed norms. Callers must pass `norm(a)` and `norm(b)`.
pub(crate) fn cosine_with_norms<T: Scalar>(a: &[T], b: &[T], na: T, nb: T) -> T {
    let c = dot(a, b) / (na * nb);
    c.max(-T::one()).min(T::one())
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine<T: Scalar>(
    a: &EmbeddingVector<T>,
    b: &EmbeddingVector<T>,
) -> Result<T, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na.is_zero() || nb.is_zero() {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(cosine_with_norms(&a.values, &b.values, na, nb))
}

/// Descending score, then ascending id.
pub(crate) fn by_score_then_id<T: PartialOrd>(a: (&str, T), b: (&str, T)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0))
}

/// Exact exhaustive top-k search by cosine. Ties go to the smaller id.
pub fn nearest_neighbors<T: Scalar>(
    query: &EmbeddingVector<T>,
    store: &[(String, EmbeddingVector<T>)],
    k: usize,
) -> Result<Vec<(String, T)>, EmbeddingError> {
    if k == 0 {
        return Err(EmbeddingError::ZeroK);
    }
    let mut scored = store
        .iter()
        .map(|(id, v)| cosine(query, v).map(|c| (id.as_str(), c)))
        .collect::<Result<Vec<_>, _>>()?;
    let cmp = |a: &(&str, T), b: &(&str, T)| by_score_then_id(*a, *b);
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    Ok(scored.into_iter().map(|(id, c)| (id.to_string(), c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.3, -1.2, 4.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EmbeddingError::DimensionMismatch { left: 1, right: 2 })
        );
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(EmbeddingError::ZeroVector));
    }

    #[test]
    fn cosine_clamped_for_f32() {
        let a = EmbeddingVector::new(vec![0.1f32; 300]).unwrap();
        let c = cosine(&a, &a).unwrap();
        assert!(c <= 1.0 && c > 0.9999);
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            EmbeddingVector::new(vec![1.0f32, f32::NAN]),
            Err(EmbeddingError::NonFinite { index: 1 })
        );
        assert_eq!(EmbeddingVector::<f32>::new(vec![]), Err(EmbeddingError::Empty));
    }

    fn random_store(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<(String, EmbeddingVector<f64>)> {
        (0..n)
            .map(|i| {
                let vals = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (format!("d{i:03}"), EmbeddingVector::new(vals).unwrap())
            })
            .collect()
    }

    #[test]
    fn query_in_store_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let store = random_store(&mut rng, 20, 8);
        let hits = nearest_neighbors(&store[7].1, &store, 3).unwrap();
        assert_eq!(hits[0].0, "d007");
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_larger_than_store() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let store = random_store(&mut rng, 5, 4);
        let hits = nearest_neighbors(&store[0].1, &store, 50).unwrap();
        assert_eq!(hits.len(), 5);
        assert!(hits.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn ties_break_by_id() {
        let store = vec![
            ("b".to_string(), v(&[1.0, 0.0])),
            ("a".to_string(), v(&[2.0, 0.0])),
            ("c".to_string(), v(&[0.0, 1.0])),
        ];
        let hits = nearest_neighbors(&v(&[1.0, 0.0]), &store, 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.0.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    // Oracle: score everything, sort the whole list, truncate.
    fn brute_force(q: &EmbeddingVector<f64>, store: &[(String, EmbeddingVector<f64>)], k: usize) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = store
            .iter()
            .map(|(id, x)| {
                let d: f64 = q.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
                let c = d / (q.norm() * x.norm());
                (id.clone(), c.clamp(-1.0, 1.0))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_full_sort_on_random_stores() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for round in 0..200 {
            let n = if round == 0 { 50 } else { rng.random_range(1..60) };
            let store = random_store(&mut rng, n, 6);
            let q = random_store(&mut rng, 1, 6).pop().unwrap().1;
            let k = rng.random_range(1..70);
            assert_eq!(nearest_neighbors(&q, &store, k).unwrap(), brute_force(&q, &store, k));
        }
    }

    proptest! {
        #[test]
        fn normalization_idempotent(xs in prop::collection::vec(-100.0f64..100.0, 1..32)) {
            let e = v(&xs);
            prop_assume!(!e.is_zero());
            let n1 = e.normalized();
            prop_assert!((n1.norm() - 1.0).abs() < 1e-6);
            let n2 = n1.normalized();
            for (a, b) in n1.as_slice().iter().zip(n2.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
