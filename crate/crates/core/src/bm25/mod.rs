//! Tokenizer, inverted index and Okapi BM25 ranking.
//!
//! Scoring follows the Lucene/Elasticsearch form without the `(k1 + 1)`
//! numerator factor:
//!
//! ```text
//! score(d, q) = sum over distinct t in q of
//!     idf(t) * tf / (tf + k1 * (1 - b + b * len(d) / avg_len))
//! idf(t)     = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```

mod index;
mod persist;

use unicode_segmentation::UnicodeSegmentation;

pub use index::{Bm25Params, IndexError, InvertedIndex, Posting, ScoredHit};
pub use persist::{read_index, write_index, FORMAT_VERSION};

/// Unicode word segmentation (UAX #29) with full case folding. No stemming
/// and no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

/// Inverse document frequency with the `ln(1 + x)` form, always positive.
pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let (n, df) = (doc_count as f64, doc_freq as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Saturated, length-normalized term frequency component.
pub fn tf_component(tf: u32, doc_len: u32, avg_len: f64, params: Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = if avg_len > 0.0 { doc_len as f64 / avg_len } else { 0.0 };
    tf / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}
