use serde::Serialize;
use tracing::warn;

use super::{MatchConfig, MatchError};
use crate::bm25::{InvertedIndex, ScoredHit};
use crate::corpus::Message;
use crate::embedding::{
    by_score_then_id, cosine_with_norms, embed_batch, nearest_neighbors, norm, EmbedInput, EmbeddingProvider,
    EmbeddingStore, EmbeddingVector,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCandidate {
    pub doc_id: String,
    /// `None` for candidates that did not come from BM25.
    pub bm25: Option<f64>,
    pub cosine: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Ranking {
    pub candidates: Vec<RankedCandidate>,
    /// BM25 hits without a usable embedding.
    pub dropped: Vec<String>,
}

impl Ranking {
    pub fn best(&self) -> Option<&RankedCandidate> {
        self.candidates.first()
    }

    pub fn ids(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.doc_id.clone()).collect()
    }
}

/// Re-sorts BM25 hits by cosine to `query`, descending, ties by ascending id.
/// Hits with no embedding, or a zero one, are dropped with a warning.
pub fn rerank(query: &EmbeddingVector, hits: &[ScoredHit], store: &EmbeddingStore) -> Result<Ranking, MatchError> {
    if query.dim() != store.dim() {
        return Err(crate::embedding::EmbeddingError::DimensionMismatch { left: query.dim(), right: store.dim() }.into());
    }
    let qn = norm(query.as_slice());
    if qn == 0.0 {
        return Err(crate::embedding::EmbeddingError::ZeroVector.into());
    }
    let mut ranking = Ranking::default();
    for hit in hits {
        match store.get(&hit.doc_id) {
            Some(v) if !v.is_zero() => {
                let c = cosine_with_norms(query.as_slice(), v.as_slice(), qn, v.norm());
                ranking.candidates.push(RankedCandidate {
                    doc_id: hit.doc_id.clone(),
                    bm25: Some(hit.score),
                    cosine: c as f64,
                });
            }
            _ => {
                warn!(doc = %hit.doc_id, "candidate has no usable embedding; dropped");
                ranking.dropped.push(hit.doc_id.clone());
            }
        }
    }
    ranking
        .candidates
        .sort_by(|a, b| by_score_then_id((a.doc_id.as_str(), a.cosine), (b.doc_id.as_str(), b.cosine)));
    Ok(ranking)
}

/// BM25 top-`depth` for the query text, reranked by embedding cosine.
pub fn rank_candidates<P: EmbeddingProvider + ?Sized>(
    query: &Message,
    index: &InvertedIndex,
    provider: &P,
    store: &EmbeddingStore,
    config: &MatchConfig,
) -> Result<Ranking, MatchError> {
    config.validate()?;
    let q = embed_batch(provider, &[EmbedInput::new(&query.id, &query.text)])?.remove(0);
    let hits = index.search(&query.text, config.depth);
    rerank(&q, &hits, store)
}

/// Exhaustive cosine search over the whole store, skipping BM25.
pub fn embedding_only(query: &EmbeddingVector, store: &EmbeddingStore, k: usize) -> Result<Ranking, MatchError> {
    let entries: Vec<(String, EmbeddingVector)> =
        store.sorted_entries().into_iter().filter(|(_, v)| !v.is_zero()).collect();
    let hits = nearest_neighbors(query, &entries, k)?;
    Ok(Ranking {
        candidates: hits.into_iter().map(|(doc_id, c)| RankedCandidate { doc_id, bm25: None, cosine: c as f64 }).collect(),
        dropped: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::embedding::{HashedNGramEncoder, OutputMode, ToyProvider};
    use rand::{Rng, SeedableRng};

    fn msg(id: &str, text: &str) -> Message {
        Message { id: id.into(), text: text.into(), source: Source::Tipline, language: "en".into(), submitted_at: None }
    }

    fn setup(docs: &[(&str, &str)]) -> (InvertedIndex, ToyProvider, EmbeddingStore) {
        let provider = ToyProvider::new("toy", HashedNGramEncoder::with_defaults(16).randomize(1.0, 3), OutputMode::Normalized);
        let mut index = InvertedIndex::default();
        for (id, text) in docs {
            index.add(id, text).unwrap();
        }
        let store = EmbeddingStore::build(&provider, docs.iter().map(|(id, t)| (*id, *t))).unwrap();
        (index, provider, store)
    }

    #[test]
    fn identical_text_ranks_first() {
        let docs = [("a", "the minister photo is fake"), ("b", "vaccine causes fever claim"), ("c", "fake vaccine photo")];
        let (index, provider, store) = setup(&docs);
        let r = rank_candidates(&msg("q", "fake vaccine photo"), &index, &provider, &store, &MatchConfig::default()).unwrap();
        assert_eq!(r.best().unwrap().doc_id, "c");
        assert!((r.best().unwrap().cosine - 1.0).abs() < 1e-6);
    }

    #[test]
    fn depth_one_keeps_bm25_top() {
        let docs = [("a", "photo photo photo of rally"), ("b", "rally"), ("c", "unrelated words here")];
        let (index, provider, store) = setup(&docs);
        let config = MatchConfig { depth: 1, ..Default::default() };
        let top = index.search("photo rally", 1)[0].doc_id.clone();
        let r = rank_candidates(&msg("q", "photo rally"), &index, &provider, &store, &config).unwrap();
        assert_eq!(r.ids(), vec![top]);
    }

    #[test]
    fn missing_embedding_is_dropped() {
        let docs = [("a", "fake news"), ("b", "fake photo")];
        let (mut index, provider, store) = setup(&docs);
        index.add("c", "fake claim").unwrap();
        let r = rank_candidates(&msg("q", "fake"), &index, &provider, &store, &MatchConfig::default()).unwrap();
        assert_eq!(r.dropped, vec!["c".to_string()]);
        assert_eq!(r.candidates.len(), 2);
    }

    // BM25 top-K computed by scoring every document, then a full cosine sort.
    #[test]
    fn matches_compose_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let mut index = InvertedIndex::default();
        let mut store = EmbeddingStore::new(8);
        let mut texts = Vec::new();
        for d in 0..100 {
            let len = rng.random_range(1..15);
            let text: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
            let id = format!("d{d:03}");
            index.add(&id, &text.join(" ")).unwrap();
            let v: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            store.insert(id.clone(), EmbeddingVector::new(v).unwrap()).unwrap();
            texts.push((id, text.join(" ")));
        }
        let q: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = EmbeddingVector::new(q).unwrap();
        let query = "w1 w2 w3 w5 w8";
        let k = 20;

        let all = index.search(query, usize::MAX);
        let top: Vec<ScoredHit> = all.into_iter().take(k).collect();
        let mut expected: Vec<(String, f64)> = top
            .iter()
            .map(|h| {
                let v = store.get(&h.doc_id).unwrap();
                (h.doc_id.clone(), crate::embedding::cosine(&q, v).unwrap() as f64)
            })
            .collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

        let got = rerank(&q, &index.search(query, k), &store).unwrap();
        let got: Vec<(String, f64)> = got.candidates.into_iter().map(|c| (c.doc_id, c.cosine)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn embedding_only_is_exhaustive() {
        let docs = [("a", "one two"), ("b", "three four"), ("c", "five six")];
        let (_, provider, store) = setup(&docs);
        let q = embed_batch(&provider, &[EmbedInput::key("three four")]).unwrap().remove(0);
        let r = embedding_only(&q, &store, 10).unwrap();
        assert_eq!(r.candidates.len(), 3);
        assert_eq!(r.candidates[0].doc_id, "b");
    }
}
