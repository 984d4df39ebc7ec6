use std::collections::HashMap;

use thiserror::Error;

use super::EmbeddingVector;

/// What a provider is asked to embed. File-backed providers look items up by
/// `id`; encoders embed `text`.
#[derive(Debug, Clone, Copy)]
pub struct EmbedInput<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

impl<'a> EmbedInput<'a> {
    pub fn new(id: &'a str, text: &'a str) -> Self {
        EmbedInput { id, text }
    }

    /// For providers keyed by text, or by id when the key is all there is.
    pub fn key(key: &'a str) -> Self {
        EmbedInput { id: key, text: key }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("input {index}: no embedding for `{id}`")]
    Missing { index: usize, id: String },
    #[error("input {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("input {index}: provider declared dim {expected} but returned {got}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
}

/// A source of sentence embeddings. Implementations must be deterministic:
/// the same input yields the same vector for the lifetime of the provider.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed(inputs)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed(inputs)
    }
}

/// Embeds `inputs` in order, checking the provider kept its contract.
pub fn embed_batch<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    inputs: &[EmbedInput<'_>],
) -> Result<Vec<EmbeddingVector>, ProviderError> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let out = provider.embed(inputs)?;
    if out.len() != inputs.len() {
        return Err(ProviderError::CountMismatch { expected: inputs.len(), got: out.len() });
    }
    for (index, v) in out.iter().enumerate() {
        if v.dim() != provider.dim() {
            return Err(ProviderError::DimensionMismatch {
                index,
                expected: provider.dim(),
                got: v.dim(),
            });
        }
    }
    Ok(out)
}

/// Id-addressable embeddings, immutable once built.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore { dim, vectors: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, id: impl Into<String>, v: EmbeddingVector) -> Result<(), super::EmbeddingError> {
        if v.dim() != self.dim {
            return Err(super::EmbeddingError::DimensionMismatch { left: self.dim, right: v.dim() });
        }
        self.vectors.insert(id.into(), v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Embeds `(id, text)` items with `provider`.
    pub fn build<'a, P, I>(provider: &P, items: I) -> Result<Self, ProviderError>
    where
        P: EmbeddingProvider + ?Sized,
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let inputs: Vec<EmbedInput<'_>> = items.into_iter().map(|(id, t)| EmbedInput::new(id, t)).collect();
        let vectors = embed_batch(provider, &inputs)?;
        let mut store = EmbeddingStore::new(provider.dim());
        for (inp, v) in inputs.iter().zip(vectors) {
            store.vectors.insert(inp.id.to_string(), v);
        }
        Ok(store)
    }

    /// Entries sorted by id.
    pub fn sorted_entries(&self) -> Vec<(String, EmbeddingVector)> {
        let mut v: Vec<_> = self.vectors.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}
