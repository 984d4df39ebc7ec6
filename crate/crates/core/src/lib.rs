//! Multilingual claim matching.
//!
//! BM25 candidate retrieval reranked by sentence-embedding cosine, pair
//! classifiers, online single-link clustering, annotation-pair sampling,
//! embedding distillation and the evaluation metrics around them.

pub mod bm25;
pub mod cluster;
pub mod corpus;
pub mod distill;
pub mod embedding;
pub mod eval;
pub mod matcher;
pub mod sampler;
pub mod scalar;

pub use scalar::Scalar;

/// Embeddings as produced by providers.
pub type Embedding = embedding::EmbeddingVector<f32>;
/// Double-precision embeddings, used for training and numerical checks.
pub type Embedding64 = embedding::EmbeddingVector<f64>;
pub type Encoder = embedding::HashedNGramEncoder<f32>;
pub type Encoder64 = embedding::HashedNGramEncoder<f64>;
