use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{idf, tf_component, tokenize};

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("document `{0}` is already indexed")]
    DuplicateDoc(String),
    #[error("invalid BM25 parameters: k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, IndexError> {
        if !(k1.is_finite() && k1 >= 0.0 && (0.0..=1.0).contains(&b)) {
            return Err(IndexError::InvalidParams { k1, b });
        }
        Ok(Bm25Params { k1, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Internal document number, assigned in insertion order.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub score: f64,
}

/// Term -> postings, kept sorted by document number since documents are
/// only ever appended.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub(super) params: Bm25Params,
    pub(super) doc_ids: Vec<String>,
    pub(super) lookup: HashMap<String, u32>,
    pub(super) doc_lengths: Vec<u32>,
    pub(super) total_len: u64,
    pub(super) postings: HashMap<String, Vec<Posting>>,
}

impl Default for InvertedIndex {
    fn default() -> Self {
        Self::new(Bm25Params::default())
    }
}

impl InvertedIndex {
    pub fn new(params: Bm25Params) -> Self {
        InvertedIndex {
            params,
            doc_ids: Vec::new(),
            lookup: HashMap::new(),
            doc_lengths: Vec::new(),
            total_len: 0,
            postings: HashMap::new(),
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.doc_ids.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.doc_ids.len() as f64
        }
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.lookup.contains_key(doc_id)
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.lookup.get(doc_id).map(|&d| self.doc_lengths[d as usize])
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn add(&mut self, doc_id: &str, text: &str) -> Result<(), IndexError> {
        self.add_tokens(doc_id, &tokenize(text))
    }

    pub fn add_tokens(&mut self, doc_id: &str, tokens: &[String]) -> Result<(), IndexError> {
        if self.lookup.contains_key(doc_id) {
            return Err(IndexError::DuplicateDoc(doc_id.to_string()));
        }
        let doc = self.doc_ids.len() as u32;
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in tokens {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        for (term, count) in tf {
            self.postings.entry(term.to_string()).or_default().push(Posting { doc, tf: count });
        }
        self.doc_ids.push(doc_id.to_string());
        self.lookup.insert(doc_id.to_string(), doc);
        self.doc_lengths.push(tokens.len() as u32);
        self.total_len += tokens.len() as u64;
        Ok(())
    }

    /// Top-`k` documents by BM25 score against `query`. Only documents
    /// sharing at least one term with the query are returned; ties are
    /// ordered by ascending document id.
    pub fn search(&self, query: &str, k: usize) -> Vec<ScoredHit> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let n = self.doc_count();
        let avg = self.avg_doc_len();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let w = idf(n, postings.len());
            for p in postings {
                let len = self.doc_lengths[p.doc as usize];
                *scores.entry(p.doc).or_default() += w * tf_component(p.tf, len, avg, self.params);
            }
        }
        let mut hits: Vec<(u32, f64)> = scores.into_iter().collect();
        let cmp = |a: &(u32, f64), b: &(u32, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0 as usize].cmp(&self.doc_ids[b.0 as usize]))
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_by(cmp);
        hits.into_iter()
            .map(|(d, score)| ScoredHit { doc_id: self.doc_ids[d as usize].clone(), score })
            .collect()
    }
}
